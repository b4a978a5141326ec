"""False discovery risk of a literature from its reported p-values.

Significant z-statistics are fitted with a censored mixture of truncated
folded normals (z-curve); the expected discovery rate before selection
then bounds the false discovery rate via Soric's formula.
"""
__version__ = "0.1.0"

from .estimands import (  # noqa: E402
    EstimandSet,
    adjust_alpha,
    edr,
    err,
    odr,
    replication_decomposition,
    soric_fdr,
    theoretical_discovery_rate,
)
from .fit import (  # noqa: E402
    FitConfig,
    FitResult,
    InsufficientDataError,
    ZCurveModel,
    bootstrap,
    density_curve,
    fit,
    grid_means,
    log_likelihood,
)
from .folded_normal import (  # noqa: E402
    TruncationWindow,
    folded_cdf,
    folded_pdf,
    power,
    truncated_interval_prob,
)
from .kernels import BACKEND  # noqa: E402
from .observations import (  # noqa: E402
    EXACT,
    LESS_EQUAL,
    LESS_THAN,
    ROUNDED,
    ConfidenceIntervalReport,
    PValueReport,
    ZObservation,
    ci_to_z,
    p_to_z,
    significance_split,
    to_z_observation,
)
