"""Monte Carlo harness for size, power, feasibility and the sparsity-failure curve.

Replication ``rep`` of sparsity ``s`` draws everything from substreams of
``stream(seed, s, rep, purpose)``, so results do not depend on how
replications are scheduled across workers.  Within one replication the same
sample, tuning draws and projection fits are shared by every deviation
``h``; only the nuisance fit and the bootstrap change with the null.
"""

from __future__ import annotations

import functools
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .bootstrap import DEFAULT_B, MultiplierScheme, quantile_and_decide
from .errors import InfeasibleError, ParameterError, SolverError
from .estimators import DEFAULT_LAMBDA, DEFAULT_TUNING_REPS, FAMILIES, GripData, fit_theta, is_feasible, select_tuning
from .procedure import global_null_test, grip_test
from .statistic import zc_closed_form_statistic
from .synthdata import CovarianceSpec, DesignSpec, NoiseSpec, covariance_factor, make_beta_star, simulate_dataset, stream

log = logging.getLogger(__name__)

MODELS = ("M1", "M2", "M3")
DEFAULT_TEST_SET = (4, 5, 7, 8, 10, 11)

# substream purposes within one replication
_BETA, _DATA, _TUNING, _BOOT = 0, 1, 2, 3


def model_design(model: str, p: int, standardize_t: bool = False) -> DesignSpec:
    """Design of Model 1 (Toeplitz 0.4), 2 (equicorrelation 0.2) or 3 (Model 2 with t(6) entries)."""
    if model == "M1":
        return DesignSpec(CovarianceSpec("toeplitz", p, 0.4))
    if model == "M2":
        return DesignSpec(CovarianceSpec("equicorrelation", p, 0.2))
    if model == "M3":
        return DesignSpec(CovarianceSpec("equicorrelation", p, 0.2), "student_t", df=6, standardize=standardize_t)
    raise ParameterError(f"unknown model {model!r}; expected one of {MODELS}")


@functools.lru_cache(maxsize=8)
def _factor(model: str, p: int) -> np.ndarray:
    return covariance_factor(model_design(model, p).covariance)


def resolve_threads(threads: int | None) -> int:
    """Explicit value, else ``GRIP_THREADS``, else 1."""
    if threads is None:
        threads = int(os.environ.get("GRIP_THREADS", "1"))
    if threads < 1:
        raise ParameterError("threads must be >= 1")
    return threads


def _pmap(func, tasks, threads):
    tasks = list(tasks)
    if threads <= 1 or len(tasks) <= 1:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(threads, len(tasks))) as pool:
        return list(pool.map(func, tasks))


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "M1"
    n: int = 200
    p: int = 500
    sparsity_grid: tuple = (2,)
    h_grid: tuple = (0.0,)
    test_set: tuple = DEFAULT_TEST_SET
    alpha_levels: tuple = (0.05,)
    reps: int = 100
    B: int = DEFAULT_B
    seed: int = 0
    scheme: MultiplierScheme = field(default_factory=MultiplierScheme)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    lambda_gamma: float = DEFAULT_LAMBDA
    tuning_reps: int = DEFAULT_TUNING_REPS
    auto_relax: bool = True
    standardize_t: bool = False

    def __post_init__(self):
        for name in ("sparsity_grid", "h_grid", "test_set", "alpha_levels"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
            if not getattr(self, name):
                raise ParameterError(f"{name} must be nonempty")
        if self.model not in MODELS:
            raise ParameterError(f"unknown model {self.model!r}")
        if self.reps < 1:
            raise ParameterError("reps must be >= 1")
        if self.B < 1:
            raise ParameterError("B must be >= 1")
        if self.seed < 0:
            raise ParameterError("seed must be non-negative")
        if len(set(self.test_set)) != len(self.test_set) or not all(1 <= j <= self.p for j in self.test_set):
            raise ParameterError(f"test_set must be distinct indices in [1, {self.p}]")
        if len(self.test_set) >= self.p:
            raise ParameterError("test_set must leave at least one control column")
        for s in self.sparsity_grid:
            if s < 1 or (3 * s) // 2 > self.p:
                raise ParameterError(f"sparsity {s} outside [1, 2p/3]")
        if not all(0 < a < 1 for a in self.alpha_levels):
            raise ParameterError("alpha levels must lie in (0, 1)")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["scheme"] = self.scheme.to_dict()
        for k in ("sparsity_grid", "h_grid", "test_set", "alpha_levels"):
            out[k] = list(out[k])
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "scheme" in d and isinstance(d["scheme"], dict):
            d["scheme"] = MultiplierScheme(**d["scheme"])
        if "noise" in d and isinstance(d["noise"], dict):
            d["noise"] = NoiseSpec(**d["noise"])
        return cls(**d)


@dataclass
class SizePowerRow:
    model: str
    n: int
    p: int
    s: int
    h: float
    alpha: float
    reps: int
    rejections: int
    infeasible_count: int
    relaxed_count: int
    rejection_rate: float
    max_violation: float
    mean_runtime_s: float


SIZE_POWER_COLUMNS = tuple(SizePowerRow.__dataclass_fields__)


def simulate_replication(config: ExperimentConfig, s: int, rep: int):
    """Regenerate the sample of replication ``rep`` at sparsity ``s``.

    Returns ``(dataset, data)``: the raw :class:`SimDataset` and its
    ``(Y, Z, X)`` split.
    """
    beta = make_beta_star(s, config.p, stream(config.seed, s, rep, _BETA))
    ds = simulate_dataset(
        model_design(config.model, config.p, config.standardize_t),
        beta,
        config.noise,
        config.n,
        config.test_set,
        config.seed,
        key=(s, rep, _DATA),
        factor=_factor(config.model, config.p),
    )
    y, z, x = ds.split()
    return ds, GripData(y, z, x)


def _one_rep(task, config: ExperimentConfig):
    s, rep = task
    t0 = time.perf_counter()
    ds, data = simulate_replication(config, s, rep)
    beta_j = ds.beta_star[ds.test_indices - 1]
    outcomes = []
    theta_fit = None
    theta_failed = False
    for hi, h in enumerate(config.h_grid):
        beta0 = beta_j + h / math.sqrt(config.n)
        tuning = select_tuning(
            data, beta0, config.lambda_gamma, config.tuning_reps, stream(config.seed, s, rep, _TUNING)
        )
        if theta_fit is None and not theta_failed:
            try:
                theta_fit = fit_theta(data, tuning, auto_relax=config.auto_relax)
            except (InfeasibleError, SolverError) as exc:
                log.info("s=%d rep=%d: %s", s, rep, exc)
                theta_failed = True
        if theta_failed:
            outcomes.append(None)
            continue
        try:
            res = grip_test(
                data,
                beta0,
                B=config.B,
                scheme=config.scheme,
                tuning=tuning,
                theta_fit=theta_fit,
                bootstrap_rng=stream(config.seed, s, rep, _BOOT, hi),
                auto_relax=config.auto_relax,
            )
        except (InfeasibleError, SolverError) as exc:
            log.info("s=%d rep=%d h=%g: %s", s, rep, h, exc)
            outcomes.append(None)
            continue
        rejects = tuple(
            quantile_and_decide(res.statistic.t_max, res.bootstrap.draws, a).reject for a in config.alpha_levels
        )
        viol = float(max(res.gamma_fit.max_violation, res.theta_fit.max_violation))
        outcomes.append((rejects, viol, res.relax_rounds > 0))
    return outcomes, time.perf_counter() - t0


def run_size_power(config: ExperimentConfig, threads: int | None = None) -> list[SizePowerRow]:
    """Rejection rates for every ``(s, h, alpha)`` of the grid.

    The harness relaxes infeasible programs by default (``auto_relax``);
    ``relaxed_count`` counts replications that needed it.  Replications still
    infeasible afterwards are tallied in ``infeasible_count`` and left out of
    the rate's denominator.
    """
    threads = resolve_threads(threads)
    tasks = [(s, rep) for s in config.sparsity_grid for rep in range(config.reps)]
    results = _pmap(functools.partial(_one_rep, config=config), tasks, threads)
    rows = []
    for si, s in enumerate(config.sparsity_grid):
        block = results[si * config.reps : (si + 1) * config.reps]
        runtime = float(np.mean([t for _, t in block]))
        for hi, h in enumerate(config.h_grid):
            outs = [o[hi] for o, _ in block]
            ok = [o for o in outs if o is not None]
            infeasible = len(outs) - len(ok)
            viol = max((v for _, v, _ in ok), default=0.0)
            relaxed = sum(x for _, _, x in ok)
            for ai, alpha in enumerate(config.alpha_levels):
                rej = sum(r[ai] for r, _, _ in ok)
                rows.append(
                    SizePowerRow(
                        model=config.model,
                        n=config.n,
                        p=config.p,
                        s=s,
                        h=float(h),
                        alpha=float(alpha),
                        reps=config.reps,
                        rejections=rej,
                        infeasible_count=infeasible,
                        relaxed_count=relaxed,
                        rejection_rate=rej / len(ok) if ok else float("nan"),
                        max_violation=float(viol),
                        mean_runtime_s=runtime,
                    )
                )
    return rows


@dataclass
class Figure1Row:
    s: int
    alpha: float
    rejection_rate: float
    reps: int


FIGURE1_COLUMNS = tuple(Figure1Row.__dataclass_fields__)


def _figure1_rep(task, n, p, alpha_levels, B, seed):
    s, rep = task
    d = p // 2
    rng = stream(seed, s, rep)
    w = rng.standard_normal((n, p))
    eps = rng.standard_normal(n)
    y = w[:, d : d + s].sum(axis=1) / math.sqrt(n) + eps
    stat, weights = zc_closed_form_statistic(w, y, d)
    # null law with known unit error variance: ||n^-1 Theta_Z Z^T xi||_inf
    xi = rng.standard_normal((B, n))
    draws = np.abs(xi @ (w[:, :d] * weights)).max(axis=1) / n
    return tuple(quantile_and_decide(stat, draws, a).reject for a in alpha_levels)


def run_figure1(
    n: int = 300,
    p: int = 700,
    sparsity_grid=(0, 10, 50, 100, 200, 300),
    reps: int = 1000,
    alpha_levels=(0.01, 0.05, 0.10),
    seed: int = 0,
    B: int = DEFAULT_B,
    threads: int | None = None,
) -> list[Figure1Row]:
    """Size of the closed-form de-sparsified test as the nuisance densifies.

    Design and errors are i.i.d. N(0, 1), the tested half carries no signal
    and the first ``s`` control coefficients equal ``n^-1/2``.
    """
    if p % 2:
        raise ParameterError("p must be even (the first p/2 columns are tested)")
    if reps < 1 or B < 1:
        raise ParameterError("reps and B must be >= 1")
    sparsity_grid = tuple(int(s) for s in sparsity_grid)
    if not sparsity_grid or any(not 0 <= s <= p // 2 for s in sparsity_grid):
        raise ParameterError(f"sparsity grid must be nonempty within [0, {p // 2}]")
    alpha_levels = tuple(float(a) for a in alpha_levels)
    tasks = [(s, rep) for s in sparsity_grid for rep in range(reps)]
    func = functools.partial(_figure1_rep, n=n, p=p, alpha_levels=alpha_levels, B=B, seed=seed)
    results = _pmap(func, tasks, resolve_threads(threads))
    rows = []
    for si, s in enumerate(sparsity_grid):
        block = results[si * reps : (si + 1) * reps]
        for ai, alpha in enumerate(alpha_levels):
            rows.append(Figure1Row(s=s, alpha=alpha, rejection_rate=sum(r[ai] for r in block) / reps, reps=reps))
    return rows


def _feasibility_rep(rep, config, s, overrides):
    ds, data = simulate_replication(config, s, rep)
    beta0 = ds.beta_star[ds.test_indices - 1]
    gamma_star = ds.beta_star[ds.control_indices - 1]
    tuning = select_tuning(data, beta0, config.lambda_gamma, config.tuning_reps, stream(config.seed, s, rep, _TUNING))
    if overrides:
        tuning = replace(tuning, **overrides)
    g = data.null_response(beta0)
    return is_feasible(data.x, g, gamma_star, tuning.eta_gamma, tuning.etabar_gamma, tuning.mu_gamma)


def run_feasibility_study(
    model: str = "M1",
    n: int = 200,
    p: int = 500,
    s: int = 2,
    reps: int = 100,
    seed: int = 0,
    test_set=DEFAULT_TEST_SET,
    lambda_gamma: float = DEFAULT_LAMBDA,
    tuning_reps: int = DEFAULT_TUNING_REPS,
    overrides: dict | None = None,
    threads: int | None = None,
) -> dict:
    """Fraction of samples in which the true nuisance vector is feasible.

    The null ``beta0 = beta*_J`` is imposed and tuning follows
    :func:`~grip.estimators.select_tuning`; ``overrides`` replaces selected
    scalar tuning fields (e.g. ``{"eta_gamma": np.inf}``).  Returns rates for
    each constraint family and for all three jointly (key ``"all"``).
    Samples coincide with those of :func:`run_size_power` at equal
    ``(model, n, p, s, seed)``.
    """
    config = ExperimentConfig(
        model=model,
        n=n,
        p=p,
        sparsity_grid=(s,),
        test_set=tuple(test_set),
        reps=reps,
        seed=seed,
        lambda_gamma=lambda_gamma,
        tuning_reps=tuning_reps,
    )
    func = functools.partial(_feasibility_rep, config=config, s=s, overrides=overrides)
    flags = _pmap(func, range(reps), resolve_threads(threads))
    return {k: sum(f[k] for f in flags) / reps for k in (*FAMILIES, "all")}


def _global_null_rep(rep, n, p, alpha, B, seed):
    rng = stream(seed, rep)
    w = rng.standard_normal((n, p))
    y = rng.standard_normal(n)
    return global_null_test(w, y, np.zeros(p), alpha, B, rng=rng).reject


def run_global_null_size(
    n: int = 100,
    p: int = 200,
    reps: int = 500,
    alpha: float = 0.05,
    B: int = DEFAULT_B,
    seed: int = 0,
    threads: int | None = None,
) -> float:
    """Empirical size of the all-coefficients test with identity design and ``delta* = 0``."""
    if reps < 1 or B < 1:
        raise ParameterError("reps and B must be >= 1")
    func = functools.partial(_global_null_rep, n=n, p=p, alpha=alpha, B=B, seed=seed)
    return sum(_pmap(func, range(reps), resolve_threads(threads))) / reps
