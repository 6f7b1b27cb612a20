"""Simultaneous tests for high-dimensional linear models with dense nuisance parameters.

The main entry point is :func:`grip_test`; :func:`global_null_test` covers
the case with no nuisance block.
"""

__version__ = "0.1.0"

from .bootstrap import BootstrapResult, MultiplierScheme, bootstrap_distribution, quantile_and_decide  # noqa: E402
from .errors import DegenerateError, GripError, InfeasibleError, ParameterError, SolverError  # noqa: E402
from .estimators import GripData, TuningParams, fit_gamma, fit_theta, select_tuning  # noqa: E402
from .procedure import GripResult, global_null_test, grip_test  # noqa: E402
from .statistic import TestStatistic, compute_global_statistic, compute_grip_statistic  # noqa: E402

__all__ = [
    "BootstrapResult",
    "DegenerateError",
    "GripData",
    "GripError",
    "GripResult",
    "InfeasibleError",
    "MultiplierScheme",
    "ParameterError",
    "SolverError",
    "TestStatistic",
    "TuningParams",
    "bootstrap_distribution",
    "compute_global_statistic",
    "compute_grip_statistic",
    "fit_gamma",
    "fit_theta",
    "global_null_test",
    "grip_test",
    "quantile_and_decide",
    "select_tuning",
]
