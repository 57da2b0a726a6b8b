"""Sparse canonical correlation analysis via sparse estimation by linear programming."""

from .errors import SelpError
from .lp import LpProblem, LpSolution, LpStatus, solve_lp
from .matkernel import CovarianceModel, standardize_columns, thin_svd
from .scca import CcaConfig, CcaFit, ComponentFit, canonical_correlation, fit, initial_pair
from .selp import SelpInstance, SparseVector, selp_solve, selp_solve_orthogonal, tau_upper_bound
from .simgen import (
    SimulationSetting,
    build_covariance,
    estimation_error,
    run_study,
    sample_mvn,
    selectivity_metrics,
)
from .tuning import CvResult, cv_criterion, fit_cv, make_folds, select_tau

__version__ = "0.1.0"

__all__ = [
    "CcaConfig", "CcaFit", "ComponentFit", "CovarianceModel", "CvResult", "LpProblem",
    "LpSolution", "LpStatus", "SelpError", "SelpInstance", "SimulationSetting",
    "SparseVector", "build_covariance", "canonical_correlation", "cv_criterion",
    "estimation_error", "fit", "fit_cv", "initial_pair", "make_folds", "run_study",
    "sample_mvn", "select_tau", "selectivity_metrics", "selp_solve",
    "selp_solve_orthogonal", "solve_lp", "standardize_columns", "tau_upper_bound",
    "thin_svd",
]
