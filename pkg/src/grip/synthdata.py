"""Seedable generators for the simulation designs.

Random designs are drawn as ``v @ L.T`` where ``L`` is the lower Cholesky
factor of the target covariance and ``v`` has i.i.d. entries (Gaussian or
Student t).  All randomness flows through :func:`stream`, which hands out
independent Philox substreams keyed by ``(seed, *key)``, so a replication
can be regenerated in isolation and in any order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .errors import ParameterError

COVARIANCE_KINDS = ("identity", "toeplitz", "equicorrelation")
ENTRY_LAWS = ("gaussian", "student_t")
NOISE_KINDS = ("iid", "ar1")
DEFAULT_AR1_PHI = 0.5


def stream(seed: int, *key: int) -> np.random.Generator:
    """Return the generator for substream ``key`` of ``seed``.

    Counter-based (Philox) and derived through ``SeedSequence`` spawn keys,
    so ``stream(s, r)`` is the same for every run and independent of any
    other ``stream(s, r')``.
    """
    if seed < 0 or any(k < 0 for k in key):
        raise ParameterError("seed and stream keys must be non-negative integers")
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


@dataclass(frozen=True)
class CovarianceSpec:
    kind: str
    dim: int
    rho: float = 0.0

    def __post_init__(self):
        if self.kind not in COVARIANCE_KINDS:
            raise ParameterError(f"unknown covariance kind {self.kind!r}")
        if self.dim < 1:
            raise ParameterError("covariance dimension must be >= 1")
        if self.kind == "toeplitz" and not -1.0 < self.rho < 1.0:
            raise ParameterError("Toeplitz rho must lie in (-1, 1)")
        if self.kind == "equicorrelation" and not 0.0 <= self.rho < 1.0:
            raise ParameterError("equicorrelation rho must lie in [0, 1)")


@dataclass(frozen=True)
class DesignSpec:
    covariance: CovarianceSpec
    entry_law: str = "gaussian"
    df: int | None = None
    # rescale t entries to unit variance; the literal design uses them raw
    standardize: bool = False

    def __post_init__(self):
        if self.entry_law not in ENTRY_LAWS:
            raise ParameterError(f"unknown entry law {self.entry_law!r}")
        if self.entry_law == "student_t":
            if self.df is None or self.df < 1:
                raise ParameterError("Student t entries need a positive integer df")
            if self.standardize and self.df <= 2:
                raise ParameterError("cannot standardize t entries with df <= 2")


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "iid"
    sigma: float = 1.0
    phi: float = 0.0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ParameterError(f"unknown noise kind {self.kind!r}")
        if not self.sigma > 0:
            raise ParameterError("noise sigma must be positive")
        if self.kind == "ar1" and not -1.0 < self.phi < 1.0:
            raise ParameterError("AR(1) phi must lie in (-1, 1)")

    @classmethod
    def ar1(cls, phi: float = DEFAULT_AR1_PHI, sigma: float = 1.0) -> "NoiseSpec":
        """Default dependent-error generator for block-bootstrap runs."""
        return cls("ar1", sigma, phi)


@dataclass
class SimDataset:
    """One simulated sample ``y = w @ beta_star + eps``.

    ``test_indices`` are 1-based column labels of ``w``.
    """

    y: np.ndarray
    w: np.ndarray
    beta_star: np.ndarray
    test_indices: np.ndarray
    seed: int
    eps: np.ndarray = field(repr=False)
    key: tuple = ()

    @property
    def control_indices(self) -> np.ndarray:
        """1-based labels of the columns not under test."""
        p = self.w.shape[1]
        return np.setdiff1d(np.arange(1, p + 1), self.test_indices)

    def split(self):
        """Return ``(y, z, x)``: response, tested columns, control columns."""
        return (
            self.y,
            self.w[:, self.test_indices - 1],
            self.w[:, self.control_indices - 1],
        )


def make_covariance(spec: CovarianceSpec) -> np.ndarray:
    idx = np.arange(spec.dim)
    if spec.kind == "identity":
        cov = np.eye(spec.dim)
    elif spec.kind == "toeplitz":
        cov = spec.rho ** np.abs(idx[:, None] - idx[None, :])
    else:
        cov = np.full((spec.dim, spec.dim), spec.rho)
        np.fill_diagonal(cov, 1.0)
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ParameterError(f"covariance {spec} is not positive definite") from exc
    return cov


def covariance_factor(spec: CovarianceSpec) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == make_covariance(spec)``."""
    if spec.kind == "identity":
        return np.eye(spec.dim)
    return np.linalg.cholesky(make_covariance(spec))


def sample_design(
    spec: DesignSpec,
    n: int,
    rng: np.random.Generator,
    factor: np.ndarray | None = None,
) -> np.ndarray:
    """Draw an ``n x dim`` design with rows ``L @ v``.

    ``factor`` may carry a precomputed :func:`covariance_factor` so repeated
    draws skip the Cholesky step.
    """
    if n < 1:
        raise ParameterError("n must be >= 1")
    dim = spec.covariance.dim
    if spec.entry_law == "gaussian":
        v = rng.standard_normal((n, dim))
    else:
        v = rng.standard_t(spec.df, size=(n, dim))
        if spec.standardize:
            v /= np.sqrt(spec.df / (spec.df - 2.0))
    if spec.covariance.kind == "identity":
        return v
    L = covariance_factor(spec.covariance) if factor is None else factor
    return v @ L.T


def qualifying_indices(s: int) -> np.ndarray:
    """1-based indices ``j <= 3s/2`` with ``j`` not a multiple of 3."""
    j = np.arange(1, (3 * s) // 2 + 1)
    return j[j % 3 != 0]


def make_beta_star(s: int, p: int, rng: np.random.Generator) -> np.ndarray:
    """Coefficient vector ``5 a / ||a||_2`` with ``s`` nonzero entries.

    ``a_j ~ U(0, 1)`` on the indices from :func:`qualifying_indices`, zero
    elsewhere.  That index rule yields exactly ``s`` entries for every
    ``s >= 1``.
    """
    if s < 1:
        raise ParameterError("sparsity s must be >= 1 (normalizing a zero vector)")
    if (3 * s) // 2 > p:
        raise ParameterError(f"3s/2 = {(3 * s) // 2} exceeds p = {p}")
    support = qualifying_indices(s)
    a = np.zeros(p)
    a[support - 1] = rng.uniform(0.0, 1.0, size=support.size)
    return 5.0 * a / np.linalg.norm(a)


def sample_noise(spec: NoiseSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` errors.  AR(1) starts from its stationary law."""
    eta = rng.standard_normal(n)
    if spec.kind == "iid":
        return spec.sigma * eta
    e = spec.sigma * np.sqrt(1.0 - spec.phi**2) * eta
    e[0] = spec.sigma * eta[0]
    return lfilter([1.0], [1.0, -spec.phi], e)


def simulate_dataset(
    design: DesignSpec,
    beta: np.ndarray,
    noise: NoiseSpec,
    n: int,
    test_indices,
    seed: int,
    key: tuple = (),
    factor: np.ndarray | None = None,
) -> SimDataset:
    """Simulate ``y = w @ beta + eps`` from substream ``(seed, *key)``.

    The design is drawn before the noise, both from the same substream.
    """
    beta = np.asarray(beta, dtype=float)
    p = design.covariance.dim
    if beta.shape != (p,):
        raise ParameterError(f"beta has shape {beta.shape}, expected ({p},)")
    test_indices = np.asarray(test_indices, dtype=int)
    if test_indices.ndim != 1 or test_indices.size == 0:
        raise ParameterError("test_indices must be a nonempty 1-d index list")
    if np.unique(test_indices).size != test_indices.size:
        raise ParameterError("test_indices must be distinct")
    if test_indices.min() < 1 or test_indices.max() > p:
        raise ParameterError(f"test_indices must lie in [1, {p}]")

    rng = stream(seed, *key)
    w = sample_design(design, n, rng, factor=factor)
    eps = sample_noise(noise, n, rng)
    y = w @ beta + eps
    return SimDataset(
        y=y, w=w, beta_star=beta, test_indices=test_indices, seed=seed, eps=eps, key=tuple(key)
    )
