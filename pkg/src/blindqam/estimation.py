"""Parameter estimation for the scaled-lattice Gaussian mixture.

Implements the blind expectation-maximization fit of (gain, noise variance,
symbol PMF), a constellation-constrained K-Means initializer, multi-start
model selection, and the supervised (data-aided) reference estimator.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from .channel import ChannelParams, SampleBatch
from .constellation import (
    Constellation,
    SymbolDistribution,
    inner_square_indices,
    mb_distribution,
    symbol_indices,
)

__all__ = [
    "NumericDegeneracyError",
    "PosteriorMatrix",
    "KMeansInit",
    "EmConfig",
    "EmResult",
    "e_step",
    "m_step",
    "fit_mb_nu",
    "em_fit",
    "kmeans_init",
    "multi_init_em",
    "da_fit",
]

# K-Means cluster counts with a defined inner sub-grid on square QAM.
SUPPORTED_KMEANS_K = (4, 16, 36, 64)

# Occupancy floor applied by kmeans_init so EM can reactivate points.
KMEANS_PROB_FLOOR = 1e-6

# sigma2 below this fraction of the mean observation energy is a collapse.
COLLAPSE_RATIO = 1e-15

_TINY = np.finfo(np.float64).tiny


class NumericDegeneracyError(RuntimeError):
    """Raised when an estimator update has no well-defined solution."""


@dataclass(frozen=True, eq=False)
class PosteriorMatrix:
    """Per-sample posteriors over constellation points, kept in log domain.

    Row i holds log Q_i(x_j); rows are normalized (each sums to one after
    exponentiation) and zero-probability points carry exact -inf.
    """

    log_q: np.ndarray

    def __post_init__(self):
        log_q = np.asarray(self.log_q, dtype=np.float64)
        if log_q.ndim != 2:
            raise ValueError("log_q must be 2-D")
        log_q.setflags(write=False)
        object.__setattr__(self, "log_q", log_q)

    @property
    def shape(self) -> tuple[int, int]:
        return self.log_q.shape

    def probabilities(self) -> np.ndarray:
        """Linear-domain posterior matrix; -inf entries become exact zeros."""
        return np.exp(self.log_q)

    def row_sums(self) -> np.ndarray:
        return self.probabilities().sum(axis=1)


@dataclass(frozen=True)
class KMeansInit:
    """Initialize EM from constrained K-Means with this many clusters."""

    k: int


@dataclass(frozen=True, eq=False)
class EmConfig:
    max_iters: int = 100
    ll_rel_tol: float = 1e-8
    distribution_mode: str = "general_pmf"
    prob_floor: float = 0.0
    init: ChannelParams | KMeansInit | None = None

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.ll_rel_tol > 0:
            raise ValueError("ll_rel_tol must be > 0")
        if self.distribution_mode not in ("general_pmf", "maxwell_boltzmann"):
            raise ValueError(f"unknown distribution_mode {self.distribution_mode!r}")
        if not 0 <= self.prob_floor < 1:
            raise ValueError("prob_floor must be in [0, 1)")


@dataclass(frozen=True, eq=False)
class EmResult:
    params: ChannelParams
    log_likelihood_trace: list[float]
    iterations_used: int
    converged: bool
    diagnostic: str | None = None
    chosen_k: int | None = None

    def to_json_dict(self) -> dict:
        out = {
            "delta": self.params.delta,
            "sigma2": self.params.sigma2,
            "pmf": [float(p) for p in self.params.dist.pmf],
            "log_likelihood_trace": [float(v) for v in self.log_likelihood_trace],
            "iterations_used": self.iterations_used,
            "converged": self.converged,
        }
        if self.params.dist.nu is not None:
            out["nu"] = float(self.params.dist.nu)
        if self.chosen_k is not None:
            out["chosen_k"] = self.chosen_k
        if self.diagnostic is not None:
            out["diagnostic"] = self.diagnostic
        return out


def _log_prior(pmf: np.ndarray) -> np.ndarray:
    out = np.full(pmf.shape, -np.inf)
    mask = pmf > 0
    out[mask] = np.log(pmf[mask])
    return out


def e_step(batch: SampleBatch, c: Constellation, params: ChannelParams):
    """Posterior of each sample over constellation points, plus the data
    log-likelihood of ``params``.

    Returns
    -------
    (PosteriorMatrix, float)
        Row i of the matrix is p(x_j | y_i); the float is
        sum_i log sum_j p(y_i|x_j) p_j, evaluated via log-sum-exp.
    """
    pmf = params.dist.pmf
    if pmf.size != c.size:
        raise ValueError("distribution length does not match constellation size")
    if not np.any(pmf > 0):
        raise ValueError("at least one point must have positive probability")
    y = batch.observations
    diff = y[:, None] - params.delta * c.points[None, :]
    log_lik = -math.log(math.pi * params.sigma2) - (diff.real**2 + diff.imag**2) / params.sigma2
    log_joint = log_lik + _log_prior(pmf)[None, :]
    row = logsumexp(log_joint, axis=1)
    return PosteriorMatrix(log_joint - row[:, None]), float(row.sum())


def _m_step_core(
    y: np.ndarray,
    c: Constellation,
    q: np.ndarray,
    mode: str,
    prob_floor: float,
    cross: np.ndarray | None = None,
    y2_sum: float | None = None,
) -> ChannelParams:
    """Closed-form maximizer of the EM surrogate; update order is
    gain -> variance -> PMF.

    When ``y2_sum`` is supplied (hot path inside em_fit) the variance is
    reduced scalar-wise from the quadratic expansion instead of building the
    residual matrix; both forms agree to rounding.
    """
    n = len(y)
    energies = c.energies
    if cross is None:
        cross = np.real(y)[:, None] * np.real(c.points)[None, :]
        cross += np.imag(y)[:, None] * np.imag(c.points)[None, :]
    col_mass = q.sum(axis=0)
    denom = float(col_mass @ energies)
    if denom <= 0:
        raise NumericDegeneracyError(
            "gain update undefined: all posterior mass sits on zero-energy points"
        )
    numer = float(np.einsum("ij,ij->", q, cross))
    if numer <= 0:
        raise NumericDegeneracyError(
            "gain update not positive: posterior-weighted correlation of "
            "observations with constellation points is <= 0"
        )
    delta = numer / denom

    if y2_sum is None:
        resid = np.abs(y[:, None] - delta * c.points[None, :]) ** 2
        sigma2 = float((q * resid).sum() / n)
    else:
        sigma2 = (y2_sum - 2.0 * delta * numer + delta * delta * denom) / n
    sigma2 = max(sigma2, _TINY)

    p_bar = col_mass / n
    if mode == "maxwell_boltzmann":
        target = float(p_bar @ energies)
        e_uniform = float(energies.mean())
        # Boundary optimum of the concave nu-objective: posterior energies at
        # or above the uniform energy map to nu = 0.
        nu = 0.0 if target >= e_uniform else fit_mb_nu(c, target)
        dist = mb_distribution(c, nu)
    else:
        if prob_floor > 0:
            p_bar = np.maximum(p_bar, prob_floor)
        dist = SymbolDistribution(p_bar)
    return ChannelParams(delta=delta, sigma2=sigma2, dist=dist)


def m_step(batch: SampleBatch, c: Constellation, q, mode: str = "general_pmf",
           prob_floor: float = 0.0) -> ChannelParams:
    """Maximize the posterior-weighted log-joint over (delta, sigma2, pmf).

    ``q`` is a PosteriorMatrix or a row-normalized (n, M) array. In
    ``maxwell_boltzmann`` mode the PMF update is replaced by the
    moment-matched member of the exp(-nu |x|^2) family.
    """
    if isinstance(q, PosteriorMatrix):
        q = q.probabilities()
    else:
        q = np.asarray(q, dtype=np.float64)
    y = batch.observations
    if q.shape != (len(y), c.size):
        raise ValueError(f"posterior matrix must have shape ({len(y)}, {c.size})")
    rows = q.sum(axis=1)
    if np.any(np.abs(rows - 1.0) > 1e-6):
        raise ValueError("posterior rows must each sum to 1")
    if mode not in ("general_pmf", "maxwell_boltzmann"):
        raise ValueError(f"unknown distribution mode {mode!r}")
    return _m_step_core(y, c, q, mode, prob_floor)


def fit_mb_nu(c: Constellation, target_energy: float) -> float:
    """Solve for nu >= 0 with mean energy of the exp(-nu|x|^2) family equal
    to ``target_energy``.

    Uses bracket doubling plus bisection on the strictly decreasing energy
    map; the result matches the target to 1e-10 relative.
    """
    if not math.isfinite(target_energy):
        raise ValueError("target energy must be finite")
    energies = c.energies
    e_min = float(energies.min())
    e_uniform = float(energies.mean())
    if target_energy <= e_min:
        raise ValueError(
            f"target energy {target_energy} is at or below the minimum point "
            f"energy {e_min}; unreachable for any nu"
        )
    if target_energy > e_uniform * (1 + 1e-12):
        raise ValueError(
            f"target energy {target_energy} exceeds the uniform-distribution "
            f"energy {e_uniform}; unreachable for nu >= 0"
        )
    if target_energy >= e_uniform:
        return 0.0

    def energy_at(nu: float) -> float:
        ex = -nu * energies
        w = np.exp(ex - ex.max())
        return float((w @ energies) / w.sum())

    lo, hi = 0.0, 1.0
    while energy_at(hi) > target_energy:
        lo = hi
        hi *= 2.0
        if hi > 1e12:
            raise NumericDegeneracyError("failed to bracket nu for target energy")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        e_mid = energy_at(mid)
        if abs(e_mid - target_energy) <= 1e-10 * target_energy:
            return mid
        if e_mid > target_energy:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _resolve_init(batch: SampleBatch, c: Constellation, init) -> ChannelParams:
    if init is None:
        usable = [k for k in SUPPORTED_KMEANS_K if k <= c.size]
        if not usable:
            raise ValueError("no supported K-Means cluster count fits this constellation")
        init = KMeansInit(usable[-1])
    if isinstance(init, KMeansInit):
        return kmeans_init(batch, c, init.k)
    if isinstance(init, ChannelParams):
        if init.dist.size != c.size:
            raise ValueError("initial distribution length does not match constellation")
        return init
    raise ValueError(f"unsupported init {init!r}")


def em_fit(batch: SampleBatch, c: Constellation, config: EmConfig | None = None) -> EmResult:
    """Fit (delta, sigma2, pmf) by expectation maximization.

    Alternates posterior computation and the closed-form parameter update
    from the configured initialization, stopping once the relative
    log-likelihood increase drops below ``ll_rel_tol`` or ``max_iters`` is
    reached. The recorded trace never decreases beyond numerical slack. A
    variance collapse (sigma2 below 1e-15 of the mean observation energy)
    aborts the loop with ``converged=False`` and a diagnostic.
    """
    if config is None:
        config = EmConfig()
    params = _resolve_init(batch, c, config.init)

    y = batch.observations
    n = len(y)
    points = c.points
    energies = c.energies
    y2 = np.abs(y) ** 2
    y2_sum = float(y2.sum())
    mean_y2 = y2_sum / n
    cross = np.real(y)[:, None] * np.real(points)[None, :]
    cross += np.imag(y)[:, None] * np.imag(points)[None, :]
    work = np.empty_like(cross)

    def posteriors(p: ChannelParams):
        """Row-normalized posteriors and the log-likelihood of ``p``.

        The normalization constant -log(pi*sigma2) is folded into the
        log-sum-exp result; posteriors are unaffected by row constants.
        """
        np.multiply(cross, 2.0 * p.delta / p.sigma2, out=work)
        np.subtract(work, (p.delta**2 / p.sigma2) * energies[None, :], out=work)
        np.add(work, _log_prior(p.dist.pmf)[None, :], out=work)
        row_max = work.max(axis=1)
        np.subtract(work, row_max[:, None], out=work)
        np.exp(work, out=work)
        row_sum = work.sum(axis=1)
        ll = float(
            (np.log(row_sum) + row_max).sum()
            - y2_sum / p.sigma2
            - n * math.log(math.pi * p.sigma2)
        )
        np.divide(work, row_sum[:, None], out=work)
        return work, ll

    q, ll = posteriors(params)
    trace = [ll]
    converged = False
    diagnostic = None
    iterations = 0
    for t in range(1, config.max_iters + 1):
        params = _m_step_core(
            y, c, q, config.distribution_mode, config.prob_floor,
            cross=cross, y2_sum=y2_sum,
        )
        iterations = t
        if params.sigma2 < COLLAPSE_RATIO * mean_y2:
            diagnostic = (
                f"variance collapse: sigma2={params.sigma2:.3e} below "
                f"{COLLAPSE_RATIO:.0e} of mean |y|^2={mean_y2:.3e}"
            )
            break
        q, ll = posteriors(params)
        trace.append(ll)
        if ll - trace[-2] < config.ll_rel_tol * abs(trace[-2]):
            converged = True
            break
    return EmResult(
        params=params,
        log_likelihood_trace=trace,
        iterations_used=iterations,
        converged=converged,
        diagnostic=diagnostic,
    )


def kmeans_init(batch: SampleBatch, c: Constellation, k: int) -> ChannelParams:
    """Constrained-Lloyd initialization on the k innermost grid points.

    Cluster centers are never free: they are delta * x_j for the inner
    sqrt(k) x sqrt(k) sub-grid, and each Lloyd update refits only the scalar
    gain by least squares over the current assignments. The initial gain
    comes from energy matching. Occupancies are floored at 1e-6 (after
    zeroing inactive points) so a subsequent EM run can reactivate points.
    """
    if k not in SUPPORTED_KMEANS_K:
        raise ValueError(f"k must be one of {SUPPORTED_KMEANS_K}, got {k}")
    if k > c.size:
        raise ValueError(f"k={k} exceeds the constellation size {c.size}")
    active = inner_square_indices(c, k)
    xs = c.points[active]
    es = c.energies[active]
    y = batch.observations
    n = len(y)
    # |y - delta x|^2 = |y|^2 - 2 delta Re(y x*) + delta^2 |x|^2; the |y|^2
    # term is constant per sample, so assignments need only the last two.
    cross = np.real(y)[:, None] * np.real(xs)[None, :]
    cross += np.imag(y)[:, None] * np.imag(xs)[None, :]

    delta = math.sqrt(float((np.abs(y) ** 2).mean()) / float(es.mean()))
    assign = None
    for _ in range(100):
        new_assign = ((delta**2) * es[None, :] - (2.0 * delta) * cross).argmin(axis=1)
        numer = float(cross[np.arange(n), new_assign].sum())
        denom = float(es[new_assign].sum())
        if denom <= 0:
            raise NumericDegeneracyError("gain update undefined: zero-energy assignments")
        delta = numer / denom
        if assign is not None and np.array_equal(assign, new_assign):
            assign = new_assign
            break
        assign = new_assign

    sigma2 = max(float((np.abs(y - delta * xs[assign]) ** 2).mean()), _TINY)
    counts = np.bincount(assign, minlength=k).astype(np.float64)
    pmf = np.zeros(c.size)
    pmf[active] = counts / n
    pmf = np.maximum(pmf, KMEANS_PROB_FLOOR)
    dist = SymbolDistribution(pmf / pmf.sum())
    return ChannelParams(delta=delta, sigma2=sigma2, dist=dist)


def multi_init_em(
    batch: SampleBatch,
    c: Constellation,
    ks,
    config: EmConfig | None = None,
    select_by: str = "u_s",
):
    """Run EM once per K-Means cluster count and keep the best parameter set.

    With ``select_by="u_s"`` (the default) each branch is scored by the
    s-optimized bit-metric uncertainty, which requires the batch to carry
    the transmitted symbols; ties go to the smaller k. ``"log_likelihood"``
    selects blindly by the final EM objective instead. Branch failures are
    collected; the call fails only if every branch fails.

    Returns
    -------
    (EmResult, int)
        The winning result (with ``chosen_k`` set) and the chosen k.
    """
    ks = [int(k) for k in ks]
    if not ks:
        raise ValueError("ks must be nonempty")
    if config is None:
        config = EmConfig()
    if select_by not in ("u_s", "log_likelihood"):
        raise ValueError(f"unknown selection rule {select_by!r}")
    if select_by == "u_s":
        if batch.symbols is None:
            raise ValueError(
                "u_s selection requires transmitted symbols; "
                "use select_by='log_likelihood' for fully blind selection"
            )
        from . import metrics  # local import: metrics never imports estimation

        bits = c.bits[symbol_indices(c, batch.symbols)]

    candidates = []
    failures = []
    for k in ks:
        try:
            result = em_fit(batch, c, replace(config, init=KMeansInit(k)))
            if select_by == "u_s":
                frame = metrics.compute_llrs(batch, c, result.params)
                _, score = metrics.minimize_over_s(frame, bits)
            else:
                score = -result.log_likelihood_trace[-1]
            candidates.append((float(score), k, result))
        except Exception as exc:  # per-branch isolation; see contract above
            failures.append(f"k={k}: {exc}")
    if not candidates:
        raise RuntimeError("all initialization branches failed: " + "; ".join(failures))
    score, k, result = min(candidates, key=lambda item: (item[0], item[1]))
    return replace(result, chosen_k=k), k


def da_fit(batch: SampleBatch, c: Constellation) -> ChannelParams:
    """Supervised maximum-likelihood estimate from (symbol, observation) pairs.

    The gain is the ratio-of-sums least-squares estimate
    sum Re(y_i x_i*) / sum |x_i|^2, the variance is the mean squared
    residual at that gain, and the PMF is the relative symbol frequency.
    """
    if batch.symbols is None:
        raise ValueError("data-aided estimation requires transmitted symbols")
    idx = symbol_indices(c, batch.symbols)
    x = c.points[idx]
    y = batch.observations
    denom = float(c.energies[idx].sum())
    if denom <= 0:
        raise NumericDegeneracyError("gain update undefined: zero-energy symbols")
    numer = float(np.real(y * np.conj(x)).sum())
    if numer <= 0:
        raise NumericDegeneracyError(
            "gain estimate not positive: observations anti-correlate with symbols"
        )
    delta = numer / denom
    sigma2 = max(float((np.abs(y - delta * x) ** 2).mean()), _TINY)
    pmf = np.bincount(idx, minlength=c.size) / len(y)
    return ChannelParams(delta=delta, sigma2=sigma2, dist=SymbolDistribution(pmf))
