"""Variational empirical Bayes linear regression as penalized quasi-Newton optimization."""
from .cavi import cavi_fit, cavi_sweep
from .errors import DomainError, InternalError, InversionError, NumericalError
from .fit import FitOptions, FitResult, fit, fit_arrays, fit_trendfilter, objective_at
from .invert import InversionOptions, invert, invert_analytic, invert_fssi, invert_trisection
from .linop import DenseOperator, DesignOperator, TrendFilterOperator, dense_tf_matrix, tf_operator
from .objective import (ParamLayout, RegressionData, make_objective, objective_compound,
                        objective_direct, penalty_compound, penalty_direct)
from .optim import SolverOptions, SolverResult, minimize
from .priors import (AshPrior, PointNormalPrior, default_ash_grid, nm_eval, nm_logml,
                     posterior_mean, posterior_mean_deriv)
from .simulate import SimSpec, metrics, rmse, sim_linreg, sim_trendfilter

__version__ = "0.1.0"

__all__ = [
    "AshPrior", "DenseOperator", "DesignOperator", "DomainError", "FitOptions", "FitResult",
    "InternalError", "InversionError", "InversionOptions", "NumericalError", "ParamLayout",
    "PointNormalPrior", "RegressionData", "SimSpec", "SolverOptions", "SolverResult",
    "TrendFilterOperator", "cavi_fit", "cavi_sweep", "default_ash_grid", "dense_tf_matrix",
    "fit", "fit_arrays", "fit_trendfilter", "invert", "invert_analytic", "invert_fssi",
    "invert_trisection", "make_objective", "metrics", "minimize", "nm_eval", "nm_logml",
    "objective_at", "objective_compound", "objective_direct", "penalty_compound",
    "penalty_direct", "posterior_mean", "posterior_mean_deriv", "rmse", "sim_linreg",
    "sim_trendfilter", "tf_operator",
]
