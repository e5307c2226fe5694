"""Ridge-regularized vector autoregressions: estimation, inference, impulse responses and penalty selection."""

from .estimators import (
    FitResult,
    PartitionedPenalty,
    PenaltyMatrix,
    SingularSystemError,
    hierarchical_posterior_mean,
    lp_fit,
    ls_fit,
    matrix_ridge_fit,
    minnesota_posterior_mean,
    rlp_fit,
    rls_fit,
    rls_gls_fit,
)
from .inference import AsymptoticCovariance, shrinkage_adjusted_cov, standard_cov
from .irf import delta_method_bands, inverse_irf_mapping, ma_coefficients, structural_irf
from .montecarlo import McScenario, MethodConfig, run_scenario
from .tuning import CvPlan, PenaltySearchSpace, cv_loss, minnesota_tightness_cv, select_penalty
from .var_core import (
    RegressionData,
    UnstableModelError,
    VarModel,
    build_regression,
    companion,
    benchmark_var2,
    simulate,
    spectral_radius,
)

__version__ = "0.1.0"
