"""Bit-wise soft metrics and achievable-rate evaluation.

Given a parameter set (estimated or true) and a batch with known transmitted
symbols, this module computes bit log-likelihood ratios from the Gaussian
model, the s-optimized cross-entropy uncertainty the decoder must resolve,
the supported binary code rate r_abc = 1 - u_s/m, and the achievable rate
r_a = max(0, H(X) - u_s). Estimation may be blind; this scoring is not.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .channel import ChannelParams, SampleBatch, log_likelihood
from .constellation import Constellation, entropy, symbol_indices

__all__ = [
    "LlrFrame",
    "MetricReport",
    "compute_llrs",
    "bit_uncertainty",
    "minimize_over_s",
    "evaluate",
    "symbol_uncertainty",
]

LN2 = math.log(2.0)

DEFAULT_CLIP = 50.0


@dataclass(frozen=True, eq=False)
class LlrFrame:
    """n x m matrix of bit LLRs in natural-log units, clipped to +-clip."""

    llrs: np.ndarray
    clip: float = DEFAULT_CLIP

    def __post_init__(self):
        llrs = np.asarray(self.llrs, dtype=np.float64)
        if llrs.ndim != 2:
            raise ValueError("llrs must be a 2-D array")
        if not np.all(np.isfinite(llrs)) or np.any(np.abs(llrs) > self.clip):
            raise ValueError("llr entries must be finite and within +-clip")
        llrs.setflags(write=False)
        object.__setattr__(self, "llrs", llrs)


@dataclass(frozen=True, eq=False)
class MetricReport:
    """Scored metric quantities for one dataset / parameter set."""

    s_opt: float
    u_s: float
    r_abc: float
    r_a: float
    h_x: float
    per_bit_uncertainty: tuple[float, ...]

    def to_json_dict(self) -> dict:
        return {
            "s_opt": self.s_opt,
            "u_s": self.u_s,
            "r_abc": self.r_abc,
            "r_a": self.r_a,
            "h_x": self.h_x,
            "per_bit_uncertainty": list(self.per_bit_uncertainty),
        }


def compute_llrs(batch: SampleBatch, c: Constellation, params: ChannelParams,
                 clip: float = DEFAULT_CLIP) -> LlrFrame:
    """Bit-wise LLRs log(sum over bit-0 points / sum over bit-1 points).

    Sums run over points with positive model probability, via log-sum-exp.
    A bit level whose entire 0- or 1-side has zero probability produces
    +-clip with the sign favoring the populated side; a level with no
    populated point on either side is an invalid model.
    """
    pmf = params.dist.pmf
    if pmf.size != c.size:
        raise ValueError("distribution length does not match constellation size")
    support = pmf > 0
    for j in range(c.m):
        side0 = support & (c.bits[:, j] == 0)
        side1 = support & (c.bits[:, j] == 1)
        if not side0.any() and not side1.any():
            raise ValueError(f"bit level {j} has no point with positive probability")

    y = batch.observations
    log_prior = np.full(c.size, -np.inf)
    log_prior[support] = np.log(pmf[support])
    log_joint = log_likelihood(y[:, None], c.points[None, :], params) + log_prior[None, :]

    columns = []
    for j in range(c.m):
        mask0 = c.bits[:, j] == 0
        lse0 = _masked_lse(log_joint, mask0)
        lse1 = _masked_lse(log_joint, ~mask0)
        with np.errstate(invalid="ignore"):
            llr = lse0 - lse1
        columns.append(np.clip(llr, -clip, clip))
    return LlrFrame(np.column_stack(columns), clip=clip)


def _masked_lse(log_joint: np.ndarray, mask: np.ndarray) -> np.ndarray:
    if not mask.any():
        return np.full(len(log_joint), -np.inf)
    with np.errstate(divide="ignore"):
        return logsumexp(log_joint[:, mask], axis=1)


def bit_uncertainty(llrs, bits, s: float) -> float:
    """Empirical bit-metric uncertainty at fixed metric exponent s, in bits
    per symbol: (1/n) * sum_ij log2(1 + exp(-(1-2 b_ij) s l_ij))."""
    if not (math.isfinite(s) and s >= 0):
        raise ValueError(f"s must be finite and >= 0, got {s}")
    llr = llrs.llrs if isinstance(llrs, LlrFrame) else np.asarray(llrs, dtype=np.float64)
    bits = np.asarray(bits)
    if bits.shape != llr.shape:
        raise ValueError("bits and llrs must have the same shape")
    z = (1.0 - 2.0 * bits.astype(np.float64)) * (s * llr)
    # dividing each softplus term by ln 2 first keeps u(0) == m exact
    return float((np.logaddexp(0.0, -z) / LN2).sum() / len(llr))


def _minimize_u(u, s_hi: float = 4.0, s_cap: float = 64.0):
    """Golden-section minimization of u(s) on [0, s_hi], doubling s_hi until
    the 17-point pre-scan minimizer is interior or the cap is reached."""
    while True:
        grid = np.linspace(0.0, s_hi, 17)
        vals = [u(s) for s in grid]
        k = int(np.argmin(vals))
        if k < 16 or s_hi >= s_cap:
            break
        s_hi *= 2.0
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, 16)]
    best_s, best_u = grid[k], vals[k]

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = float(lo), float(hi)
    cc = b - invphi * (b - a)
    dd = a + invphi * (b - a)
    fc, fd = u(cc), u(dd)
    for _ in range(200):
        if fc <= fd:
            if fc < best_u:
                best_s, best_u = cc, fc
            b, dd, fd = dd, cc, fc
            cc = b - invphi * (b - a)
            fc = u(cc)
        else:
            if fd < best_u:
                best_s, best_u = dd, fd
            a, cc, fc = cc, dd, fd
            dd = a + invphi * (b - a)
            fd = u(dd)
        if b - a <= 1e-5:
            break
    for s_cand, u_cand in ((cc, fc), (dd, fd), (1.0, u(1.0))):
        if u_cand < best_u or (u_cand == best_u and s_cand < best_s):
            best_s, best_u = s_cand, u_cand
    return float(best_s), float(best_u)


def minimize_over_s(llrs, bits):
    """Minimize the bit-metric uncertainty over the exponent s >= 0.

    Returns (s_opt, u_s). With a matched model s_opt sits near 1; scaling
    all LLRs by alpha scales s_opt by 1/alpha and leaves u_s unchanged.
    """
    llr = llrs.llrs if isinstance(llrs, LlrFrame) else np.asarray(llrs, dtype=np.float64)
    bits = np.asarray(bits)
    if bits.shape != llr.shape:
        raise ValueError("bits and llrs must have the same shape")
    base = (1.0 - 2.0 * bits.astype(np.float64)) * llr
    n = len(llr)

    def u(s):
        return float((np.logaddexp(0.0, -(s * base)) / LN2).sum() / n)

    return _minimize_u(u)


def evaluate(batch: SampleBatch, c: Constellation, params: ChannelParams,
             clip: float = DEFAULT_CLIP) -> MetricReport:
    """Full metric chain: LLRs -> s-optimized uncertainty -> rates.

    Requires transmitted symbols (they provide the bit ground truth for the
    empirical expectation). The report satisfies r_abc = 1 - u_s/m and
    r_a = max(0, h_x - u_s) exactly.
    """
    if batch.symbols is None:
        raise ValueError("metric evaluation requires transmitted symbols")
    idx = symbol_indices(c, batch.symbols)
    bits = c.bits[idx]
    frame = compute_llrs(batch, c, params, clip=clip)
    s_opt, _ = minimize_over_s(frame, bits)
    z = (1.0 - 2.0 * bits.astype(np.float64)) * (s_opt * frame.llrs)
    per_bit = (np.logaddexp(0.0, -z) / LN2).mean(axis=0)
    u_s = float(per_bit.sum())
    h_x = entropy(params.dist)
    return MetricReport(
        s_opt=s_opt,
        u_s=u_s,
        r_abc=1.0 - u_s / c.m,
        r_a=max(0.0, h_x - u_s),
        h_x=h_x,
        per_bit_uncertainty=tuple(float(v) for v in per_bit),
    )


def symbol_uncertainty(batch: SampleBatch, c: Constellation, params: ChannelParams):
    """s-optimized symbol-metric uncertainty (bits per symbol).

    Scores the symbol-wise metric q(x, y) = p(y|x) P(x) on the transmitted
    pairs. If any transmitted point has zero model probability the
    uncertainty is infinite; the offending sample indices are reported in a
    warning and (nan, inf) is returned.
    """
    if batch.symbols is None:
        raise ValueError("symbol-metric evaluation requires transmitted symbols")
    idx = symbol_indices(c, batch.symbols)
    pmf = params.dist.pmf
    if pmf.size != c.size:
        raise ValueError("distribution length does not match constellation size")
    support = np.flatnonzero(pmf > 0)
    bad = np.flatnonzero(pmf[idx] == 0)
    if bad.size:
        head = ", ".join(str(i) for i in bad[:10])
        more = "" if bad.size <= 10 else f" (+{bad.size - 10} more)"
        warnings.warn(
            f"transmitted points with zero model probability at sample "
            f"indices [{head}]{more}; symbol uncertainty is infinite",
            RuntimeWarning,
            stacklevel=2,
        )
        return float("nan"), float("inf")

    y = batch.observations
    w = log_likelihood(y[:, None], c.points[None, support], params) + np.log(pmf[support])[None, :]
    pos_of = np.full(c.size, -1, dtype=np.int64)
    pos_of[support] = np.arange(support.size)
    w_true = w[np.arange(len(y)), pos_of[idx]]
    n = len(y)

    def u(s):
        return float(((logsumexp(s * w, axis=1) - s * w_true) / LN2).sum() / n)

    return _minimize_u(u)
