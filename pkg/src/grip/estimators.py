"""Constrained l1 estimators for the nuisance and projection coefficients.

Both the nuisance fit and each projection fit solve the same program

    minimize ||xi||_1  subject to
        ||A^T (g - A xi) / n||_inf <= eta       ("gradient")
        g^T (g - A xi) / n >= etabar            ("inner_product")
        ||g - A xi||_inf <= mu                  ("residual_sup")

with ``A = X`` and ``g = Y - Z beta0`` for the nuisance, ``g = Z_j`` for
projection ``j``.  The LP form splits ``xi = xi_plus - xi_minus`` and carries
the residual ``r = g - A xi`` as an explicit bounded variable, which keeps
the constraint matrix at roughly ``3 n m`` nonzeros instead of ``4 m^2``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .errors import DegenerateError, InfeasibleError, ParameterError, SolverError

log = logging.getLogger(__name__)

FAMILIES = ("gradient", "inner_product", "residual_sup")
FEASIBILITY_TOL = 1e-7
RELAX_FACTOR = 1.5
MAX_RELAX_ROUNDS = 3
DEFAULT_LAMBDA = 0.95
DEFAULT_TUNING_REPS = 30


@dataclass
class GripData:
    """Response ``y`` (n), tested block ``z`` (n x d), controls ``x`` (n x (p-d))."""

    y: np.ndarray
    z: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.z = np.asarray(self.z, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        if self.z.ndim == 1:
            self.z = self.z[:, None]
        if self.y.ndim != 1 or self.z.ndim != 2 or self.x.ndim != 2:
            raise ParameterError("expected y 1-d and z, x 2-d")
        n = self.y.size
        if self.z.shape[0] != n or self.x.shape[0] != n:
            raise ParameterError(
                f"row mismatch: y {self.y.shape}, z {self.z.shape}, x {self.x.shape}"
            )
        if self.z.shape[1] < 1 or self.x.shape[1] < 1:
            raise ParameterError("need at least one tested and one control column")
        if not (np.isfinite(self.y).all() and np.isfinite(self.z).all() and np.isfinite(self.x).all()):
            raise ParameterError("data contain non-finite values")

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def d(self) -> int:
        return self.z.shape[1]

    def null_response(self, beta0) -> np.ndarray:
        """``Y - Z beta0``."""
        beta0 = np.asarray(beta0, dtype=float)
        if beta0.shape != (self.d,):
            raise ParameterError(f"beta0 has shape {beta0.shape}, expected ({self.d},)")
        return self.y - self.z @ beta0


@dataclass
class TuningParams:
    eta_gamma: float
    etabar_gamma: float
    mu_gamma: float
    eta_theta: np.ndarray
    etabar_theta: np.ndarray
    mu_theta: np.ndarray
    lambda_gamma: float = DEFAULT_LAMBDA

    def __post_init__(self):
        self.eta_theta = np.atleast_1d(np.asarray(self.eta_theta, dtype=float))
        self.etabar_theta = np.atleast_1d(np.asarray(self.etabar_theta, dtype=float))
        self.mu_theta = np.atleast_1d(np.asarray(self.mu_theta, dtype=float))
        if not 0.0 < self.lambda_gamma < 1.0:
            raise ParameterError(f"lambda_gamma must lie in (0, 1), got {self.lambda_gamma}")
        if not self.eta_gamma >= 0:
            raise ParameterError("eta_gamma must be nonnegative")
        if not (self.etabar_gamma > 0 and self.mu_gamma > 0):
            raise ParameterError("etabar_gamma and mu_gamma must be positive")
        d = self.eta_theta.size
        if self.etabar_theta.size != d or self.mu_theta.size != d:
            raise ParameterError("per-column tuning vectors must share one length")
        if not (self.eta_theta >= 0).all():
            raise ParameterError("eta_theta must be nonnegative")
        if not ((self.etabar_theta > 0).all() and (self.mu_theta > 0).all()):
            raise ParameterError("etabar_theta and mu_theta must be positive")

    @property
    def d(self) -> int:
        return self.eta_theta.size

    def relaxed(self, rounds: int = 1) -> "TuningParams":
        """Copy with every eta and mu multiplied by ``1.5 ** rounds``."""
        f = RELAX_FACTOR**rounds
        return replace(
            self,
            eta_gamma=self.eta_gamma * f,
            mu_gamma=self.mu_gamma * f,
            eta_theta=self.eta_theta * f,
            mu_theta=self.mu_theta * f,
        )

    def to_dict(self) -> dict:
        return {
            "eta_gamma": float(self.eta_gamma),
            "etabar_gamma": float(self.etabar_gamma),
            "mu_gamma": float(self.mu_gamma),
            "eta_theta": self.eta_theta.tolist(),
            "etabar_theta": self.etabar_theta.tolist(),
            "mu_theta": self.mu_theta.tolist(),
            "lambda_gamma": float(self.lambda_gamma),
        }


@dataclass
class GammaFit:
    gamma_hat: np.ndarray
    residuals: np.ndarray
    sigma_eps_hat: float
    objective: float
    max_violation: float = 0.0
    relax_rounds: int = 0


@dataclass
class ThetaFit:
    theta_hat: np.ndarray
    u_hat: np.ndarray
    sigma_u_hat: np.ndarray
    objective: np.ndarray
    max_violation: float = 0.0
    relax_rounds: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


def constraint_violations(A, g, xi, eta, etabar, mu) -> dict:
    """Amount by which ``xi`` violates each constraint family (0 if satisfied)."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    r = g - A @ xi
    return {
        "gradient": max(float(np.abs(A.T @ r).max() / n - eta), 0.0),
        "inner_product": max(float(etabar - g @ r / n), 0.0),
        "residual_sup": max(float(np.abs(r).max() - mu), 0.0),
    }


def is_feasible(A, g, xi, eta, etabar, mu) -> dict:
    """Exact (zero-tolerance) feasibility of ``xi`` per family, plus ``"all"``."""
    v = constraint_violations(A, g, xi, eta, etabar, mu)
    out = {k: v[k] == 0.0 for k in FAMILIES}
    out["all"] = all(out.values())
    return out


def _solve(A, g, eta, etabar, mu, drop=None):
    """Run HiGHS on the split-variable program; ``drop`` omits one family."""
    n, m = A.shape
    c = np.concatenate([np.ones(2 * m), np.zeros(n)])
    blocks = [np.hstack([A, -A, np.eye(n)])]
    lb = [g]
    ub = [g]
    if drop != "gradient" and np.isfinite(eta):
        blocks.append(np.hstack([np.zeros((m, 2 * m)), A.T / n]))
        lb.append(np.full(m, -eta))
        ub.append(np.full(m, eta))
    if drop != "inner_product":
        blocks.append(np.concatenate([np.zeros(2 * m), g / n])[None, :])
        lb.append([etabar])
        ub.append([np.inf])
    rbound = mu if drop != "residual_sup" else np.inf
    bounds = Bounds(
        np.concatenate([np.zeros(2 * m), np.full(n, -rbound)]),
        np.concatenate([np.full(2 * m, np.inf), np.full(n, rbound)]),
    )
    cons = LinearConstraint(
        sparse.csr_array(np.vstack(blocks)), np.concatenate(lb), np.concatenate(ub)
    )
    res = milp(c, constraints=cons, bounds=bounds)
    if res.status == 2:
        return None
    if res.status != 0:
        if drop is None:
            # HiGHS occasionally gives up on badly scaled instances; retry in the other form
            log.debug("milp status %s, retrying with linprog", res.status)
            return _solve_tight(A, g, eta, etabar, mu)
        raise SolverError(f"LP backend failed: {res.message}")
    return res.x[:m] - res.x[m : 2 * m]


def _solve_tight(A, g, eta, etabar, mu):
    # fallback with explicit 1e-10 tolerances; inequality-only form
    n, m = A.shape
    M = A.T @ A / n
    b = A.T @ g / n
    K = np.hstack([M, -M])
    gA = g @ A / n
    A_ub = np.vstack([K, -K, np.concatenate([gA, -gA])[None, :], np.hstack([A, -A]), np.hstack([-A, A])])
    b_ub = np.concatenate([eta + b, eta - b, [g @ g / n - etabar], mu + g, mu - g])
    keep = np.isfinite(b_ub)
    res = linprog(
        np.ones(2 * m),
        A_ub=A_ub[keep],
        b_ub=b_ub[keep],
        bounds=(0, None),
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status == 2:
        return None
    if res.status != 0:
        raise SolverError(f"tight LP re-solve failed: {res.message}")
    return res.x[:m] - res.x[m:]


def _diagnose(A, g, eta, etabar, mu):
    out = []
    for f in FAMILIES:
        try:
            if _solve(A, g, eta, etabar, mu, drop=f) is not None:
                out.append(f)
        except SolverError as exc:
            log.debug("diagnostic solve without %s undetermined: %s", f, exc)
    return out


def l1_constrained_lp(A, g, eta, etabar, mu, tol=FEASIBILITY_TOL, diagnose=True) -> np.ndarray:
    """Minimize ``||xi||_1`` over the three-family feasible set.

    Returns an optimal ``xi``; when the optimum is not unique any optimal
    point may come back.  Raises :class:`InfeasibleError` naming the
    families whose removal would make the program feasible (skipped when
    ``diagnose`` is false).
    """
    A = np.asarray(A, dtype=float)
    g = np.asarray(g, dtype=float)
    if A.ndim != 2 or g.shape != (A.shape[0],):
        raise ParameterError(f"shape mismatch: A {A.shape}, g {g.shape}")
    if not (np.linalg.norm(A, axis=0) > 0).all():
        raise DegenerateError("design has a zero column")
    if eta < 0 or mu <= 0:
        raise ParameterError("need eta >= 0 and mu > 0")

    xi = _solve(A, g, eta, etabar, mu)
    if xi is None:
        families = _diagnose(A, g, eta, etabar, mu) if diagnose else []
        named = ", ".join(families) if families else "joint (no single family)"
        raise InfeasibleError(f"l1 program infeasible; binding: {named}", families=families)
    worst = max(constraint_violations(A, g, xi, eta, etabar, mu).values())
    if worst > tol:
        log.debug("violation %.2e above tol, re-solving with tight tolerances", worst)
        xi = _solve_tight(A, g, eta, etabar, mu)
        worst = max(constraint_violations(A, g, xi, eta, etabar, mu).values())
        if worst > tol:
            raise SolverError(f"solution violates constraints by {worst:.3e}")
    return xi


def fit_gamma(data: GripData, beta0, tuning: TuningParams, auto_relax: bool = False) -> GammaFit:
    """Nuisance fit with the null ``beta = beta0`` imposed."""
    g = data.null_response(beta0)
    last_round = MAX_RELAX_ROUNDS if auto_relax else 0
    for rounds in range(last_round + 1):
        t = tuning.relaxed(rounds) if rounds else tuning
        try:
            gamma = l1_constrained_lp(
                data.x, g, t.eta_gamma, t.etabar_gamma, t.mu_gamma, diagnose=rounds == last_round
            )
            break
        except InfeasibleError as exc:
            last = exc
    else:
        raise InfeasibleError(
            "gamma-LP infeasible: consider larger eta_gamma/mu_gamma or smaller etabar_gamma"
            f" ({last})",
            families=last.families,
        )
    resid = g - data.x @ gamma
    viol = constraint_violations(data.x, g, gamma, t.eta_gamma, t.etabar_gamma, t.mu_gamma)
    return GammaFit(
        gamma_hat=gamma,
        residuals=resid,
        sigma_eps_hat=float(np.sqrt(resid @ resid / data.n)),
        objective=float(np.abs(gamma).sum()),
        max_violation=max(viol.values()),
        relax_rounds=rounds,
    )


def fit_theta(data: GripData, tuning: TuningParams, auto_relax: bool = False) -> ThetaFit:
    """Projection fit of every tested column on the controls, one LP each."""
    if tuning.d != data.d:
        raise ParameterError(f"tuning has {tuning.d} columns, data has {data.d}")
    m = data.x.shape[1]
    theta = np.empty((m, data.d))
    rounds_used = np.zeros(data.d, dtype=int)
    worst = 0.0
    for j in range(data.d):
        g = data.z[:, j]
        eta, etabar, mu = tuning.eta_theta[j], tuning.etabar_theta[j], tuning.mu_theta[j]
        last_round = MAX_RELAX_ROUNDS if auto_relax else 0
        for rounds in range(last_round + 1):
            f = RELAX_FACTOR**rounds
            try:
                theta[:, j] = l1_constrained_lp(data.x, g, eta * f, etabar, mu * f, diagnose=rounds == last_round)
                break
            except InfeasibleError as exc:
                last = exc
        else:
            raise InfeasibleError(
                f"theta-LP infeasible for tested column {j}: {last}",
                families=last.families,
                column=j,
            )
        rounds_used[j] = rounds
        viol = constraint_violations(data.x, g, theta[:, j], eta * f, etabar, mu * f)
        worst = max(worst, *viol.values())
    u = data.z - data.x @ theta
    return ThetaFit(
        theta_hat=theta,
        u_hat=u,
        sigma_u_hat=np.sqrt((u**2).sum(axis=0) / data.n),
        objective=np.abs(theta).sum(axis=0),
        max_violation=worst,
        relax_rounds=rounds_used,
    )


def select_tuning(
    data: GripData,
    beta0,
    lambda_gamma: float = DEFAULT_LAMBDA,
    R: int = DEFAULT_TUNING_REPS,
    rng: np.random.Generator | None = None,
) -> TuningParams:
    """Simulation-calibrated constraint levels.

    ``eta`` is the largest ``|X_j^T xi| / n`` and ``mu`` the largest
    ``|xi_i|`` over ``R`` draws ``xi ~ N(0, I_n)``; the lower bounds are
    ``(1 - lambda)`` times the mean square of the null response (nuisance)
    or of the tested column (projections).
    """
    if R < 1:
        raise ParameterError("R must be >= 1")
    if rng is None:
        rng = np.random.default_rng()
    g = data.null_response(beta0)
    if not np.any(g):
        raise DegenerateError("degenerate residual: Y - Z beta0 is identically zero")
    xi = rng.standard_normal((data.n, R))
    eta = float(np.abs(data.x.T @ xi).max()) / data.n
    mu = float(np.abs(xi).max())
    d = data.d
    return TuningParams(
        eta_gamma=eta,
        etabar_gamma=(1.0 - lambda_gamma) * float(g @ g) / data.n,
        mu_gamma=mu,
        eta_theta=np.full(d, eta),
        etabar_theta=(1.0 - lambda_gamma) * (data.z**2).sum(axis=0) / data.n,
        mu_theta=np.full(d, mu),
        lambda_gamma=lambda_gamma,
    )
