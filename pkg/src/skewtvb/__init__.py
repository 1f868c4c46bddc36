"""Variational-Bayes filtering and smoothing for linear state-space models
with skew-t measurement noise, plus the supporting truncated-normal moment
approximation, particle-filter reference, and Cramer-Rao bound tooling.
"""

from .crlb import (
    CRLBTrack,
    FisherContext,
    FisherMvstResult,
    UnsupportedDimensionError,
    crlb_filter_recursion,
    crlb_smoother_recursion,
    fisher_information_matrix,
    fisher_mvst_E,
    fisher_univariate_E,
    noise_E_matrix,
)
from .particle import ParticleCloud, ParticleDepletionError, pf_run, pf_step, systematic_resample
from .scenarios import (
    EstimatorSpec,
    LinearScenario,
    MetricReport,
    PseudorangeScenario,
    crlb_study_model,
    gen_constellation,
    gnss_clock_cv_model,
    inject_negative_outlier,
    nees_values,
    outlier_ordering_study,
    run_estimator,
    run_mc_study,
    single_epoch_scenario,
    tracking_scenario,
)
from .seeding import philox_key, stream
from .skewt import (
    InvalidParameterError,
    MultivariateSkewT,
    SkewTNoise,
    UnivariateSkewT,
    mvst_logpdf,
    mvt_cdf_mc,
    sample_noise,
    st_logpdf,
    st_pdf,
    zero_mean_reparam,
)
from .special import GAUSSIAN_NU, AccuracyError, erfcx
from .statespace import (
    DegenerateGeometryError,
    GaussianBelief,
    LinearizedMeasurement,
    StateSpaceModel,
    kf_filter,
    kf_predict,
    kf_update_gated,
    linearize_pseudorange,
    pseudorange_measurements,
    rtss_backward,
)
from .tracks import read_track_jsonl, write_track_jsonl
from .truncation import (
    DegenerateDimensionError,
    OracleInfeasibleError,
    TruncationProblem,
    TruncationResult,
    phi_over_Phi,
    rec_trunc,
    tmnd_moments_oracle,
    truncate_once,
)
from .vb import (
    AugmentedBelief,
    EstimateTrack,
    LambdaState,
    NumericFailureError,
    STFStepDiagnostics,
    VBConfig,
    lambda_update,
    psi_compute,
    stf_run,
    stf_step,
    sts_run,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
