"""Shaping-mode presets: nonuniform 64-QAM input distributions.

The presets are artifact-defined operating points spanning entropies from
4.5 to 6 bits: three members of the exp(-nu |x|^2) family pinned to target
entropies, one uniform 36-of-64 support restriction, and plain uniform.
"""

import math
from dataclasses import dataclass

import numpy as np

from .constellation import (
    Constellation,
    SymbolDistribution,
    entropy,
    inner_square_indices,
    mb_distribution,
)

__all__ = ["ShapingMode", "nu_for_entropy", "PRESETS"]


def nu_for_entropy(c: Constellation, target_bits: float) -> float:
    """Solve for nu >= 0 with entropy of the exp(-nu|x|^2) family equal to
    ``target_bits`` (bisection on the monotone entropy map)."""
    if not math.isfinite(target_bits):
        raise ValueError("target entropy must be finite")
    h_max = math.log2(c.size)
    if target_bits > h_max + 1e-12:
        raise ValueError(f"target entropy {target_bits} exceeds log2(M) = {h_max}")
    if target_bits >= h_max:
        return 0.0
    lo, hi = 0.0, 1.0
    while entropy(mb_distribution(c, hi)) > target_bits:
        lo = hi
        hi *= 2.0
        if hi > 1e9:
            raise ValueError(f"target entropy {target_bits} is unreachably low")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        h_mid = entropy(mb_distribution(c, mid))
        if abs(h_mid - target_bits) <= 1e-10:
            return mid
        if h_mid > target_bits:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class ShapingMode:
    """Named input-distribution preset on the 64-QAM base constellation."""

    name: str
    target_entropy: float
    kind: str  # "mb" | "support"
    support: int | None = None

    def distribution(self, c: Constellation) -> SymbolDistribution:
        if self.kind == "mb":
            return mb_distribution(c, nu_for_entropy(c, self.target_entropy))
        if self.kind == "support":
            active = inner_square_indices(c, self.support)
            pmf = np.zeros(c.size)
            pmf[active] = 1.0 / self.support
            return SymbolDistribution(pmf)
        raise ValueError(f"unknown shaping kind {self.kind!r}")


PRESETS = {
    "mode1": ShapingMode("mode1", 4.5, "mb"),
    "mode2": ShapingMode("mode2", 5.0, "mb"),
    "mode3": ShapingMode("mode3", 5.5, "mb"),
    "mode4": ShapingMode("mode4", math.log2(36.0), "support", support=36),
    "uniform": ShapingMode("uniform", 6.0, "mb"),
}
