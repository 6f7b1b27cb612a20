"""Gaussian multiplier bootstrap for sup-norm statistics.

Two multiplier schemes are available: i.i.d. standard normal weights, and
block weights for weakly dependent samples, where the sample is cut into
alternating big blocks of ``q`` observations and small blocks of ``r``
observations.  Every observation in big block ``k`` receives the same
normal weight; observations in small blocks (and the leftover tail) get 0.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .statistic import TestStatistic

DEFAULT_B = 500


@dataclass(frozen=True)
class MultiplierScheme:
    kind: str = "iid"
    q: int | None = None
    r: int | None = None

    def __post_init__(self):
        if self.kind == "iid":
            return
        if self.kind != "block":
            raise ParameterError(f"unknown multiplier scheme {self.kind!r}")
        if self.q is None or self.r is None:
            raise ParameterError("block scheme needs q and r")
        if not (self.q > self.r >= 1):
            raise ParameterError(f"block sizes need q > r >= 1, got q={self.q}, r={self.r}")

    @classmethod
    def block(cls, q: int, r: int) -> "MultiplierScheme":
        return cls("block", int(q), int(r))

    @classmethod
    def default_block(cls, n: int) -> "MultiplierScheme":
        """``q = ceil(n^(2/3))``, ``r = ceil(n^(1/3))``."""
        return cls.block(math.ceil(n ** (2 / 3)), math.ceil(n ** (1 / 3)))

    def to_dict(self) -> dict:
        if self.kind == "iid":
            return {"kind": "iid"}
        return {"kind": "block", "q": self.q, "r": self.r}


@dataclass
class BootstrapResult:
    draws: np.ndarray
    quantile: float
    p_value: float
    reject: bool
    alpha: float
    t_max: float

    @property
    def B(self) -> int:
        return self.draws.size


def _block_layout(n, q, r):
    m = n // (q + r)
    if m < 1:
        raise ParameterError(f"block sizes q={q}, r={r} leave no full block in n={n}")
    idx = np.arange(n)
    block = idx // (q + r)
    mask = (idx % (q + r) < q) & (block < m)
    return m, np.minimum(block, m - 1), mask


def draw_block_multipliers(n: int, q: int, r: int, rng: np.random.Generator) -> np.ndarray:
    """One length-``n`` block multiplier vector (``m = n // (q + r)`` blocks)."""
    m, block, mask = _block_layout(n, q, r)
    values = rng.standard_normal(m)
    return np.where(mask, values[block], 0.0)


def multiplier_matrix(n: int, scheme: MultiplierScheme, B: int, rng: np.random.Generator) -> np.ndarray:
    """``B x n`` matrix of multipliers; row ``b`` is draw ``b``.

    Row ``b`` equals the ``b``-th of ``B`` successive single draws from the
    same generator, so batching does not change the stream.
    """
    if scheme.kind == "iid":
        return rng.standard_normal((B, n))
    m, block, mask = _block_layout(n, scheme.q, scheme.r)
    values = rng.standard_normal((B, m))
    return np.where(mask, values[:, block], 0.0)


def bootstrap_distribution(
    stat: TestStatistic,
    scheme: MultiplierScheme | None = None,
    B: int = DEFAULT_B,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """``B`` draws of ``max_j |sum_i xi_i (T_ij - mean_j)| / sqrt(n)``."""
    if B < 1:
        raise ParameterError("B must be >= 1")
    scheme = scheme or MultiplierScheme()
    rng = rng if rng is not None else np.random.default_rng()
    rows = np.asarray(stat.rows, dtype=float)
    n = rows.shape[0]
    centered = rows - rows.mean(axis=0)
    # the float mean of a constant column need not equal the constant
    centered[:, (rows == rows[0]).all(axis=0)] = 0.0
    xi = multiplier_matrix(n, scheme, B, rng)
    return np.abs(xi @ centered).max(axis=1) / np.sqrt(n)


def quantile_index(B: int, alpha: float) -> int:
    """1-based rank ``ceil(B (1 - alpha))`` of the critical order statistic."""
    # round first so that e.g. 100 * 0.95 does not ceil to 96
    return min(max(math.ceil(round(B * (1.0 - alpha), 9)), 1), B)


def quantile_and_decide(t_max: float, draws, alpha: float) -> BootstrapResult:
    """Critical value, bootstrap p-value and the strict-inequality decision."""
    draws = np.asarray(draws, dtype=float)
    if draws.size == 0:
        raise ParameterError("no bootstrap draws")
    if not 0.0 < alpha < 1.0:
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")
    B = draws.size
    if B < math.ceil(1.0 / alpha):
        warnings.warn(f"B={B} is too small to resolve alpha={alpha}", stacklevel=2)
    q = float(np.sort(draws)[quantile_index(B, alpha) - 1])
    p_value = (1 + int((draws >= t_max).sum())) / (B + 1)
    return BootstrapResult(
        draws=draws,
        quantile=q,
        p_value=p_value,
        reject=bool(t_max > q),
        alpha=alpha,
        t_max=float(t_max),
    )
