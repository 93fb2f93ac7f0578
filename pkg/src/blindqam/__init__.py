"""Blind decoding-metric parameter estimation for probabilistically shaped QAM.

The package fits the parameters of an AWGN soft-decision decoding metric
(gain, noise variance, symbol distribution) from channel observations alone
via expectation maximization, and scores the resulting metric against a
data-aided reference through achievable-rate functionals.
"""

from .channel import (
    ChannelParams,
    SampleBatch,
    draw_symbols,
    likelihood,
    log_likelihood,
    sigma2_for_snr_db,
    snr_db,
    transmit,
)
from .constellation import (
    Constellation,
    SymbolDistribution,
    build_square_qam,
    entropy,
    inner_square_indices,
    mb_distribution,
    mean_energy,
    restrict_support,
    symbol_indices,
)
from .estimation import (
    EmConfig,
    EmResult,
    KMeansInit,
    NumericDegeneracyError,
    PosteriorMatrix,
    da_fit,
    e_step,
    em_fit,
    fit_mb_nu,
    kmeans_init,
    m_step,
    multi_init_em,
)
from .metrics import (
    LlrFrame,
    MetricReport,
    bit_uncertainty,
    compute_llrs,
    evaluate,
    minimize_over_s,
    symbol_uncertainty,
)
from .shaping import PRESETS, ShapingMode, nu_for_entropy

__version__ = "0.1.0"
