"""Sup-norm test statistics built from per-observation score rows."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, ParameterError
from .estimators import GammaFit, ThetaFit


@dataclass
class TestStatistic:
    """Score rows ``T_ij``, their scaled column sums and the sup-norm.

    ``t_n[j] = sum_i rows[i, j] / sqrt(n)`` and ``t_max = max_j |t_n[j]|``.
    """

    __test__ = False  # not a pytest class

    rows: np.ndarray
    t_n: np.ndarray
    t_max: float

    @classmethod
    def from_rows(cls, rows) -> "TestStatistic":
        rows = np.asarray(rows, dtype=float)
        if rows.ndim != 2:
            raise ParameterError("score rows must form an n x d matrix")
        t_n = rows.sum(axis=0) / np.sqrt(rows.shape[0])
        return cls(rows=rows, t_n=t_n, t_max=float(np.abs(t_n).max()))

    @property
    def n(self) -> int:
        return self.rows.shape[0]


def compute_grip_statistic(gamma_fit: GammaFit, theta_fit: ThetaFit) -> TestStatistic:
    """Studentized products of projection residuals and null residuals."""
    r = np.asarray(gamma_fit.residuals, dtype=float)
    u = np.asarray(theta_fit.u_hat, dtype=float)
    if u.shape[0] != r.size:
        raise ParameterError(f"fits disagree on n: {r.size} vs {u.shape[0]}")
    sig_u = np.asarray(theta_fit.sigma_u_hat, dtype=float)
    if not gamma_fit.sigma_eps_hat > 0:
        raise DegenerateError("degenerate fit: sigma_eps_hat is zero")
    if not (sig_u > 0).all():
        bad = np.flatnonzero(~(sig_u > 0)).tolist()
        raise DegenerateError(f"degenerate fit: sigma_u_hat is zero for columns {bad}")
    rows = u * r[:, None] / (sig_u * gamma_fit.sigma_eps_hat)
    return TestStatistic.from_rows(rows)


def compute_global_statistic(w, y, delta0) -> TestStatistic:
    """Statistic for ``H0: delta* = delta0`` over all ``p`` coefficients.

    Coordinate ``j`` is ``sqrt(n) W_j^T e / (||e|| ||W_j||)`` with
    ``e = Y - W delta0``, i.e. ``sqrt(n)`` times a sample cosine.
    """
    w = np.asarray(w, dtype=float)
    y = np.asarray(y, dtype=float)
    delta0 = np.asarray(delta0, dtype=float)
    if w.ndim != 2 or y.shape != (w.shape[0],) or delta0.shape != (w.shape[1],):
        raise ParameterError(f"shape mismatch: w {w.shape}, y {y.shape}, delta0 {delta0.shape}")
    n = y.size
    e = y - w @ delta0
    e_norm = np.linalg.norm(e)
    if e_norm == 0:
        raise DegenerateError("degenerate residual: Y equals W delta0 exactly")
    col_norm = np.linalg.norm(w, axis=0)
    if not (col_norm > 0).all():
        bad = np.flatnonzero(col_norm == 0).tolist()
        raise DegenerateError(f"degenerate column(s) {bad}: zero norm")
    rows = n * w * e[:, None] / (e_norm * col_norm)
    return TestStatistic.from_rows(rows)


def zc_closed_form_statistic(w, y, d: int):
    """De-sparsified statistic in its null-design closed form.

    With the Lasso estimate at zero and a diagonal nodewise estimate, the
    statistic reduces to ``max_{j<d} |Z_j^T Y| / (n sigma_j^2)`` where
    ``sigma_j^2 = Z_j^T Z_j / n`` and ``Z`` is the first ``d`` columns of
    ``w``.  Returns ``(statistic, weights)`` with ``weights = 1/sigma_j^2``.
    """
    w = np.asarray(w, dtype=float)
    y = np.asarray(y, dtype=float)
    if not 1 <= d <= w.shape[1]:
        raise ParameterError(f"d must lie in [1, {w.shape[1]}]")
    n = y.size
    z = w[:, :d]
    sig2 = (z**2).sum(axis=0) / n
    if not (sig2 > 0).all():
        raise DegenerateError("zero-norm tested column")
    weights = 1.0 / sig2
    return float(np.abs(weights * (z.T @ y) / n).max()), weights
