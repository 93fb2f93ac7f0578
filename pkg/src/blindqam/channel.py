"""AWGN decoding-metric channel: simulation and likelihood evaluation.

The model is y = delta * x + n with n circularly symmetric complex Gaussian
of total variance sigma2 (sigma2/2 per real component). All randomness comes
from numpy's PCG64 ``default_rng``; for a fixed seed the real noise
components are drawn before the imaginary ones, so outputs are stable across
runs and releases.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .constellation import Constellation, SymbolDistribution, mean_energy

__all__ = [
    "ChannelParams",
    "SampleBatch",
    "draw_symbols",
    "transmit",
    "likelihood",
    "log_likelihood",
    "sigma2_for_snr_db",
    "snr_db",
]


@dataclass(frozen=True, eq=False)
class ChannelParams:
    """Model parameter vector: gain, total complex noise variance, input PMF."""

    delta: float
    sigma2: float
    dist: SymbolDistribution

    def __post_init__(self):
        if not (math.isfinite(self.delta) and self.delta > 0):
            raise ValueError(f"delta must be finite and > 0, got {self.delta}")
        if not (math.isfinite(self.sigma2) and self.sigma2 > 0):
            raise ValueError(f"sigma2 must be finite and > 0, got {self.sigma2}")
        if not isinstance(self.dist, SymbolDistribution):
            raise ValueError("dist must be a SymbolDistribution")


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """Channel observations, optionally paired with the transmitted symbols."""

    observations: np.ndarray
    symbols: np.ndarray | None = None
    seed: int | None = None

    def __post_init__(self):
        obs = np.asarray(self.observations, dtype=np.complex128)
        if obs.ndim != 1 or obs.size < 1:
            raise ValueError("observations must be a nonempty 1-D array")
        obs.setflags(write=False)
        object.__setattr__(self, "observations", obs)
        if self.symbols is not None:
            sym = np.asarray(self.symbols, dtype=np.complex128)
            if sym.shape != obs.shape:
                raise ValueError("symbols and observations must be equally long")
            sym.setflags(write=False)
            object.__setattr__(self, "symbols", sym)

    @property
    def n(self) -> int:
        return len(self.observations)


def draw_symbols(c: Constellation, d: SymbolDistribution, n: int, seed: int) -> np.ndarray:
    """Draw n i.i.d. constellation symbols from the PMF ``d``.

    Identical (seed, n, d, c) always produce identical output.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if d.size != c.size:
        raise ValueError("distribution length does not match constellation size")
    rng = np.random.default_rng(seed)
    idx = rng.choice(c.size, size=int(n), p=d.pmf)
    return c.points[idx].copy()


def transmit(x, params: ChannelParams, seed: int) -> SampleBatch:
    """Push symbols through y = delta * x + n and return the sample batch.

    Noise is complex Gaussian with per-component variance sigma2/2; callers
    that want to parallelize generation should pre-split the seed with
    ``np.random.SeedSequence(seed).spawn`` per chunk.
    """
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("symbol array must be nonempty and 1-D")
    rng = np.random.default_rng(seed)
    scale = math.sqrt(params.sigma2 / 2.0)
    noise = rng.standard_normal(x.size) * scale + 1j * (rng.standard_normal(x.size) * scale)
    y = params.delta * x + noise
    return SampleBatch(observations=y, symbols=x, seed=seed)


def log_likelihood(y, x, params: ChannelParams):
    """log p(y|x) = -log(pi*sigma2) - |y - delta*x|^2 / sigma2 (broadcasts)."""
    r = np.asarray(y) - params.delta * np.asarray(x)
    return -math.log(math.pi * params.sigma2) - (r.real**2 + r.imag**2) / params.sigma2


def likelihood(y, x, params: ChannelParams):
    """Gaussian channel density 1/(pi*sigma2) * exp(-|y - delta*x|^2 / sigma2)."""
    return np.exp(log_likelihood(y, x, params))


def sigma2_for_snr_db(delta: float, d: SymbolDistribution, c: Constellation, snr_db: float) -> float:
    """Noise variance realizing SNR_dB = 10*log10(delta^2 * E|X|^2 / sigma2)."""
    return delta**2 * mean_energy(d, c) / 10.0 ** (snr_db / 10.0)


def snr_db(params: ChannelParams, c: Constellation) -> float:
    """SNR in dB implied by the parameter vector, per the convention above."""
    return 10.0 * math.log10(params.delta**2 * mean_energy(params.dist, c) / params.sigma2)
