"""End-to-end tests: the GRIP simultaneous test and the global-null test."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bootstrap import DEFAULT_B, BootstrapResult, MultiplierScheme, bootstrap_distribution, quantile_and_decide
from .estimators import (
    DEFAULT_LAMBDA,
    DEFAULT_TUNING_REPS,
    GammaFit,
    GripData,
    ThetaFit,
    TuningParams,
    fit_gamma,
    fit_theta,
    select_tuning,
)
from .statistic import TestStatistic, compute_global_statistic, compute_grip_statistic


@dataclass
class GripResult:
    statistic: TestStatistic
    bootstrap: BootstrapResult
    gamma_fit: GammaFit
    theta_fit: ThetaFit
    tuning: TuningParams

    @property
    def reject(self) -> bool:
        return self.bootstrap.reject

    @property
    def relax_rounds(self) -> int:
        """Largest number of relaxation rounds any of the LPs needed."""
        theta_rounds = int(self.theta_fit.relax_rounds.max()) if self.theta_fit.relax_rounds.size else 0
        return max(self.gamma_fit.relax_rounds, theta_rounds)


def grip_test(
    data: GripData,
    beta0,
    alpha: float = 0.05,
    B: int = DEFAULT_B,
    scheme: MultiplierScheme | None = None,
    lambda_gamma: float = DEFAULT_LAMBDA,
    R: int = DEFAULT_TUNING_REPS,
    tuning_rng: np.random.Generator | None = None,
    bootstrap_rng: np.random.Generator | None = None,
    auto_relax: bool = False,
    tuning: TuningParams | None = None,
    theta_fit: ThetaFit | None = None,
) -> GripResult:
    """Test ``H0: beta* = beta0`` for the tested block of ``data``.

    ``tuning`` and ``theta_fit`` may be supplied to reuse work across
    several nulls on one sample (the projection fits do not depend on
    ``beta0``).
    """
    beta0 = np.asarray(beta0, dtype=float)
    if tuning is None:
        tuning = select_tuning(data, beta0, lambda_gamma=lambda_gamma, R=R, rng=tuning_rng)
    gfit = fit_gamma(data, beta0, tuning, auto_relax=auto_relax)
    if theta_fit is None:
        theta_fit = fit_theta(data, tuning, auto_relax=auto_relax)
    stat = compute_grip_statistic(gfit, theta_fit)
    draws = bootstrap_distribution(stat, scheme, B, bootstrap_rng)
    return GripResult(
        statistic=stat,
        bootstrap=quantile_and_decide(stat.t_max, draws, alpha),
        gamma_fit=gfit,
        theta_fit=theta_fit,
        tuning=tuning,
    )


def global_null_test(
    w,
    y,
    delta0,
    alpha: float = 0.05,
    B: int = DEFAULT_B,
    scheme: MultiplierScheme | None = None,
    rng: np.random.Generator | None = None,
) -> BootstrapResult:
    """Multiplier-bootstrap test of ``H0: delta* = delta0`` (all coefficients)."""
    stat = compute_global_statistic(w, y, delta0)
    draws = bootstrap_distribution(stat, scheme, B, rng)
    return quantile_and_decide(stat.t_max, draws, alpha)
