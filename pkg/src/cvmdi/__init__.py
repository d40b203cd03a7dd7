"""Finite-size security numerics for measurement-device-independent
continuous-variable key distribution with an untrusted relay.

The public surface re-exported here is the whole supported API; module
internals prefixed with an underscore may change without notice.
"""

from .gaussian_core import (
    EIG_TOL,
    SymplecticSpectrum,
    TwoModeCov,
    conditional_eigenvalue_heterodyne,
    g_func,
    holevo_bound,
    mutual_information,
    symplectic_eigenvalues,
    symplectic_spectrum,
)
from .protocol_model import (
    DEFAULT_ALPHA_DB_PER_KM,
    DetectorModel,
    FourModeCov,
    OneWayEquivalent,
    PreBsChannels,
    ProtocolParams,
    SecondMoments,
    build_four_mode_cov,
    equivalent_one_way,
    fiber_transmittance,
    observed_second_moments,
    one_way_two_mode_cov,
    pre_bs_channel_params,
    pre_bs_transform,
)
from .finite_size import (
    ChannelEstimate,
    EstimationFailureError,
    FiniteSizeParams,
    KeyRateReport,
    asymptotic_key_rate,
    confidence_deltas,
    delta_n,
    estimate_based_cov,
    finite_key_rate,
    worst_case_cov,
    z_quantile,
)
from .estimation_mc import (
    CoverageReport,
    EstimationResult,
    SampleSet,
    channel_estimate,
    coverage_experiment,
    derived_channel_estimates,
    generate_samples,
    mle_estimate,
)
from .optimizer import (
    SweepSpec,
    VarianceOptimum,
    distance_frontier,
    max_distance,
    optimal_modulation,
    sweep_point,
)

__version__ = "0.1.0"

__all__ = [
    "EIG_TOL",
    "DEFAULT_ALPHA_DB_PER_KM",
    "TwoModeCov",
    "SymplecticSpectrum",
    "g_func",
    "symplectic_eigenvalues",
    "conditional_eigenvalue_heterodyne",
    "symplectic_spectrum",
    "holevo_bound",
    "mutual_information",
    "DetectorModel",
    "ProtocolParams",
    "FourModeCov",
    "SecondMoments",
    "PreBsChannels",
    "OneWayEquivalent",
    "fiber_transmittance",
    "build_four_mode_cov",
    "observed_second_moments",
    "pre_bs_transform",
    "pre_bs_channel_params",
    "equivalent_one_way",
    "one_way_two_mode_cov",
    "EstimationFailureError",
    "FiniteSizeParams",
    "ChannelEstimate",
    "KeyRateReport",
    "delta_n",
    "z_quantile",
    "confidence_deltas",
    "estimate_based_cov",
    "worst_case_cov",
    "finite_key_rate",
    "asymptotic_key_rate",
    "SampleSet",
    "EstimationResult",
    "CoverageReport",
    "generate_samples",
    "mle_estimate",
    "derived_channel_estimates",
    "channel_estimate",
    "coverage_experiment",
    "SweepSpec",
    "VarianceOptimum",
    "sweep_point",
    "optimal_modulation",
    "max_distance",
    "distance_frontier",
    "__version__",
]
