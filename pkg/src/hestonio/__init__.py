"""Heston model simulation, realized volatility and moment-based estimation under indirect observability."""

from .analytic import (
    StationaryMoments,
    conditional_mean,
    conditional_moment_q,
    conditional_second_moment,
    ncchi2_moment,
    params_from_moments,
    stationary_moment_q,
    stationary_moments,
)
from .density import log_bessel_i, stationary_density, transition_density
from .errors import (
    ConfigError,
    DomainError,
    EstimationDegenerate,
    FellerViolation,
    GridMismatch,
    HestonError,
    HorizonTooShort,
    InsufficientData,
    NumericOverflow,
)
from .estimators import (
    LagQuality,
    MomentEstimates,
    ParamEstimate,
    empirical_moments,
    estimate_params,
    lag_index,
    lag_quality_check,
)
from .experiments import (
    ErrorReport,
    EstimatorReport,
    LqStudyConfig,
    SlopeFit,
    estimator_error_study,
    lq_error_study,
    slope_fit,
    snapshot,
)
from .params import REFERENCE_PARAMS, DerivedConstants, HestonParams, validate_params
from .realized import JRule, RealizedSeries, WindowScheme, realized_at, realized_series, realized_volatility, resolve_scheme
from .sim import BundleCache, PathBundle, SimConfig, holder_scaling_check, read_bundle, simulate, write_bundle

__version__ = "0.1.0"
