"""Inference for stratified bilateral/unilateral correlated binary data.

Maximum-likelihood estimation under the shared-conditional-probability
intraclass model, three tests of risk-difference homogeneity across strata,
five confidence intervals for a common risk difference, and a seeded Monte
Carlo harness for calibration experiments.
"""

__version__ = "0.1.0"

from ._backend import BACKEND, available_backends, backend_name
from .estimation import (
    FitResult,
    InfeasibleConstraintError,
    fit_conditional,
    fit_constrained,
    fit_unconstrained,
    newton_gamma_step,
    solve_pi_quadratic,
)
from .inference import (
    FisherBlock,
    TestResult,
    chi2_quantile,
    chi2_sf,
    fisher_block,
    lr_test,
    score_test,
    tridiag_inverse,
    wald_test,
)
from .intervals import (
    CiResult,
    CommonInfoMatrix,
    all_intervals,
    ci_profile_likelihood,
    ci_score,
    ci_wald_constrained,
    ci_wald_unconstrained,
    common_info,
)
from .model import (
    CellProbs,
    CommonDiffParams,
    FullParams,
    GroupCounts,
    ParameterDomainError,
    StratumCounts,
    StudyData,
    cell_probabilities,
    log_likelihood,
    score_vector,
    score_wrt_d,
    smooth_zero_cells,
    study_from_rows,
)
from .montecarlo import (
    SimConfig,
    SimResult,
    random_param_sets,
    run_coverage,
    run_power,
    run_type1,
    sample_stratum,
)

__all__ = [
    "__version__",
    "BACKEND",
    "available_backends",
    "backend_name",
    # model
    "CellProbs",
    "CommonDiffParams",
    "FullParams",
    "GroupCounts",
    "ParameterDomainError",
    "StratumCounts",
    "StudyData",
    "cell_probabilities",
    "log_likelihood",
    "score_vector",
    "score_wrt_d",
    "smooth_zero_cells",
    "study_from_rows",
    # estimation
    "FitResult",
    "InfeasibleConstraintError",
    "fit_conditional",
    "fit_constrained",
    "fit_unconstrained",
    "newton_gamma_step",
    "solve_pi_quadratic",
    # inference
    "FisherBlock",
    "TestResult",
    "chi2_quantile",
    "chi2_sf",
    "fisher_block",
    "lr_test",
    "score_test",
    "tridiag_inverse",
    "wald_test",
    # intervals
    "CiResult",
    "CommonInfoMatrix",
    "all_intervals",
    "ci_profile_likelihood",
    "ci_score",
    "ci_wald_constrained",
    "ci_wald_unconstrained",
    "common_info",
    # montecarlo
    "SimConfig",
    "SimResult",
    "random_param_sets",
    "run_coverage",
    "run_power",
    "run_type1",
    "sample_stratum",
]
