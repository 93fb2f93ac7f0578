"""Square QAM constellations, Gray labeling, and symbol probability distributions.

Constellations live on the canonical odd-integer grid (coordinates
{+-1, +-3, ...}); any physical scaling is carried by the channel gain, so the
grid itself is never normalized. Point ordering is lexicographic by label,
which makes file formats and tests deterministic.
"""

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Constellation",
    "SymbolDistribution",
    "build_square_qam",
    "restrict_support",
    "mb_distribution",
    "entropy",
    "mean_energy",
    "inner_square_indices",
    "symbol_indices",
]

# Raw probabilities below this are treated as exact zeros (keeps log-domain
# code free of -744.44-style junk without disturbing genuine support).
PROB_CLAMP = 1e-12


@dataclass(frozen=True, eq=False)
class Constellation:
    """A complex constellation with distinct points and m-bit point labels.

    ``labels[j]`` is the bit string of ``points[j]``. A full square QAM
    constellation has ``2**m`` points; views produced by
    :func:`restrict_support` keep ``m`` but expose fewer points. Instances
    are immutable and safe to share across threads.
    """

    m: int
    points: np.ndarray
    labels: tuple[str, ...]
    bits: np.ndarray = field(init=False, repr=False)
    energies: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.complex128)
        labels = tuple(str(lab) for lab in self.labels)
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if points.ndim != 1 or len(points) != len(labels):
            raise ValueError("points and labels must be 1-D and equally long")
        if not 1 <= len(points) <= 2**self.m:
            raise ValueError(f"constellation size must be in [1, 2^{self.m}]")
        if len(set(labels)) != len(labels):
            raise ValueError("labels must be distinct")
        for lab in labels:
            if len(lab) != self.m or set(lab) - {"0", "1"}:
                raise ValueError(f"label {lab!r} is not an {self.m}-bit string")
        if len(np.unique(points)) != len(points):
            raise ValueError("points must be distinct")
        bits = np.array([[ord(ch) - 48 for ch in lab] for lab in labels], dtype=np.uint8)
        energies = np.abs(points) ** 2
        for arr in (points, bits, energies):
            arr.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "energies", energies)

    @property
    def size(self) -> int:
        return len(self.points)

    def to_json_dict(self) -> dict:
        """Descriptor for embedding in report files."""
        return {
            "m": self.m,
            "points": [[float(p.real), float(p.imag)] for p in self.points],
            "labels": list(self.labels),
        }


@dataclass(frozen=True, eq=False)
class SymbolDistribution:
    """A PMF over constellation points.

    ``kind`` is ``"general"`` for a free PMF or ``"maxwell_boltzmann"`` when
    the probabilities are exactly proportional to ``exp(-nu * |x|^2)`` (in
    which case ``nu`` is set). General raw PMFs have entries below
    ``PROB_CLAMP`` clamped to exact zero and are renormalized.
    """

    pmf: np.ndarray
    kind: str = "general"
    nu: float | None = None

    def __post_init__(self):
        pmf = np.asarray(self.pmf, dtype=np.float64).copy()
        if self.kind not in ("general", "maxwell_boltzmann"):
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if self.kind == "maxwell_boltzmann":
            if self.nu is None or not math.isfinite(self.nu) or self.nu < 0:
                raise ValueError("maxwell_boltzmann kind requires finite nu >= 0")
        if pmf.ndim != 1 or pmf.size == 0:
            raise ValueError("pmf must be a nonempty 1-D vector")
        if not np.all(np.isfinite(pmf)) or np.any(pmf < 0):
            raise ValueError("pmf entries must be finite and nonnegative")
        if self.kind == "general":
            pmf[pmf < PROB_CLAMP] = 0.0
        total = pmf.sum()
        if total <= 0:
            raise ValueError("pmf must have positive total mass")
        pmf /= total
        pmf.setflags(write=False)
        object.__setattr__(self, "pmf", pmf)

    @property
    def size(self) -> int:
        return len(self.pmf)


def build_square_qam(m: int) -> Constellation:
    """Build the canonical square 2^m-QAM constellation with Gray labeling.

    Points form the odd-integer grid; each axis carries a binary reflected
    Gray code, with the I bits occupying the first m/2 label positions and
    the Q bits the last m/2. Points are ordered lexicographically by label.

    Parameters
    ----------
    m : int
        Bits per symbol; must be even and in [2, 10].

    Returns
    -------
    Constellation
    """
    if not isinstance(m, (int, np.integer)):
        raise ValueError("m must be an integer")
    m = int(m)
    if m % 2 != 0 or not 2 <= m <= 10:
        raise ValueError(f"m must be even and within [2, 10], got {m}")
    half = m // 2
    levels = 1 << half
    idx = np.arange(levels)
    gray = idx ^ (idx >> 1)
    # grid position of each per-axis label value
    position = np.empty(levels, dtype=np.int64)
    position[gray] = idx
    coords = 2 * position - (levels - 1)

    symbols = np.arange(1 << m)
    v_i = symbols >> half
    v_q = symbols & (levels - 1)
    points = coords[v_i] + 1j * coords[v_q]
    labels = tuple(format(v, f"0{m}b") for v in symbols)
    return Constellation(m=m, points=points, labels=labels)


def restrict_support(c: Constellation, active) -> Constellation:
    """Return a view of ``c`` exposing only the given subset of points.

    Metric and estimation operations applied to the view sum only over the
    active points. Point/label order of the parent is preserved.
    """
    active = np.asarray(active, dtype=np.complex128).ravel()
    if active.size == 0:
        raise ValueError("active point set must be nonempty")
    indices = []
    for a in active:
        hits = np.flatnonzero(c.points == a)
        if hits.size == 0:
            raise ValueError(f"point {a} is not part of the constellation")
        indices.append(int(hits[0]))
    indices = sorted(set(indices))
    if len(indices) != active.size:
        raise ValueError("active point set contains duplicates")
    return Constellation(
        m=c.m,
        points=c.points[indices],
        labels=tuple(c.labels[j] for j in indices),
    )


def inner_square_indices(c: Constellation, k: int) -> np.ndarray:
    """Indices of the innermost k points (the sqrt(k) x sqrt(k) sub-grid).

    The sub-grid is selected by Chebyshev radius rather than energy: on the
    odd grid the energy ordering is ambiguous (|5+5j|^2 == |7+1j|^2) while
    the square sub-grid is not.
    """
    root = math.isqrt(k)
    if root * root != k:
        raise ValueError(f"k must be a perfect square, got {k}")
    radius = root - 1
    cheb = np.maximum(np.abs(c.points.real), np.abs(c.points.imag))
    sel = np.flatnonzero(cheb <= radius + 1e-9)
    if sel.size != k:
        raise ValueError(
            f"constellation has {sel.size} points within Chebyshev radius "
            f"{radius}, expected {k}"
        )
    return sel


def symbol_indices(c: Constellation, symbols) -> np.ndarray:
    """Map transmitted symbols onto constellation point indices.

    Symbols must coincide with constellation points up to file-format
    rounding; anything farther than 1e-6 of the constellation radius from
    every point is rejected.
    """
    s = np.asarray(symbols, dtype=np.complex128).ravel()
    if s.size == 0:
        raise ValueError("symbol array must be nonempty")
    tol = 1e-6 * max(1.0, float(np.abs(c.points).max()))
    out = np.empty(s.size, dtype=np.int64)
    for start in range(0, s.size, 8192):
        chunk = s[start : start + 8192]
        d = np.abs(chunk[:, None] - c.points[None, :])
        idx = d.argmin(axis=1)
        if d[np.arange(chunk.size), idx].max() > tol:
            raise ValueError("symbols do not coincide with constellation points")
        out[start : start + 8192] = idx
    return out


def mb_distribution(c: Constellation, nu: float) -> SymbolDistribution:
    """Maxwell-Boltzmann distribution p_j proportional to exp(-nu * |x_j|^2).

    Computed with max-exponent subtraction so large nu never underflows the
    normalizer.
    """
    if not math.isfinite(nu) or nu < 0:
        raise ValueError(f"nu must be finite and >= 0, got {nu}")
    exponents = -float(nu) * c.energies
    weights = np.exp(exponents - exponents.max())
    return SymbolDistribution(weights / weights.sum(), kind="maxwell_boltzmann", nu=float(nu))


def entropy(d: SymbolDistribution) -> float:
    """Shannon entropy of the PMF in bits, with 0*log(0) = 0."""
    p = d.pmf[d.pmf > 0]
    return float(-(p * np.log2(p)).sum())


def mean_energy(d: SymbolDistribution, c: Constellation) -> float:
    """Average point energy sum_j p_j |x_j|^2."""
    if d.size != c.size:
        raise ValueError("distribution length does not match constellation size")
    return float(d.pmf @ c.energies)
