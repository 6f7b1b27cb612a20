"""Command-line front end.

    grip test      run the simultaneous test on a CSV file, print JSON
    grip simulate  size/power sweep over (s, h, alpha), print CSV
    grip figure1   size curve of the closed-form de-sparsified test, print CSV

Exit codes: 0 success (whatever the decision), 1 input error, 2 an LP was
infeasible (and ``--auto-relax`` was not given or did not help) or could not
be solved.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np
import tomli_w

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .bootstrap import MultiplierScheme
from .errors import DegenerateError, InfeasibleError, ParameterError, SolverError
from .estimators import GripData
from .experiments import (
    FIGURE1_COLUMNS,
    SIZE_POWER_COLUMNS,
    ExperimentConfig,
    resolve_threads,
    run_figure1,
    run_size_power,
)
from .procedure import grip_test
from .synthdata import DEFAULT_AR1_PHI, NoiseSpec, stream

log = logging.getLogger("grip")

TEST_RESULT_FIELDS = (
    "t_max",
    "t_n",
    "quantile",
    "p_value",
    "reject",
    "alpha",
    "B",
    "sigma_eps_hat",
    "sigma_u_hat",
    "tuning",
    "infeasibility_retries",
    "seed",
    "version",
    "run",
)


class InputError(Exception):
    pass


def config_digest(resolved: dict) -> str:
    blob = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def run_record(command, resolved, seed, t0) -> dict:
    return {
        "command": command,
        "config_digest": config_digest(resolved),
        "seed": seed,
        "version": __version__,
        "wall_time_s": time.perf_counter() - t0,
    }


# --- parsing helpers -------------------------------------------------------


def parse_floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    if isinstance(text, (int, float)):
        return [float(text)]
    try:
        return [float(tok) for tok in str(text).replace(" ", "").split(",") if tok]
    except ValueError as exc:
        raise InputError(f"cannot parse number list {text!r}") from exc


def parse_ints(text) -> list[int]:
    vals = parse_floats(text)
    if any(v != int(v) for v in vals):
        raise InputError(f"expected integers, got {text!r}")
    return [int(v) for v in vals]


def parse_index_spec(text, names: list[str]) -> list[int]:
    """Resolve ``--test`` to 0-based positions within ``names``.

    Tokens are column names, 1-based positions or 1-based ranges ``a-b``.
    A token that is an exact column name is always read as a name.
    """
    out = []
    for tok in (t.strip() for t in str(text).split(",")):
        if not tok:
            continue
        if tok in names:
            out.append(names.index(tok))
            continue
        lo, sep, hi = tok.partition("-")
        try:
            a = int(lo)
            b = int(hi) if sep else a
        except ValueError:
            raise InputError(f"--test: {tok!r} is neither a column name nor a 1-based index/range") from None
        if not 1 <= a <= b <= len(names):
            raise InputError(f"--test: range {tok!r} outside 1..{len(names)}")
        out.extend(range(a - 1, b))
    if not out:
        raise InputError("--test selects no columns")
    if len(set(out)) != len(out):
        raise InputError("--test selects a column twice")
    return out


def read_csv(path) -> tuple[list[str], np.ndarray]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = [h.strip() for h in next(reader)]
            except StopIteration:
                raise InputError(f"{path}: empty file") from None
            rows = []
            for k, rec in enumerate(reader, start=1):
                if not rec:
                    continue
                if len(rec) != len(header):
                    raise InputError(f"{path}: data row {k} has {len(rec)} cells, header has {len(header)}")
                vals = []
                for name, cell in zip(header, rec):
                    try:
                        v = float(cell)
                    except ValueError:
                        v = math.nan
                    if not math.isfinite(v):
                        raise InputError(f"{path}: missing or non-numeric value in data row {k}, column {name!r}")
                    vals.append(v)
                rows.append(vals)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    if len(set(header)) != len(header):
        raise InputError(f"{path}: duplicate column names")
    return header, np.array(rows, dtype=float).reshape(len(rows), len(header))


def parse_beta0(text, d: int) -> np.ndarray:
    path = Path(str(text))
    if path.is_file():
        vals = [float(tok) for tok in path.read_text().replace(",", " ").split()]
    else:
        vals = parse_floats(text)
    if len(vals) == 1:
        vals = vals * d
    if len(vals) != d:
        raise InputError(f"--beta0 has {len(vals)} values, {d} tested columns")
    return np.array(vals)


def parse_block(text, n: int) -> MultiplierScheme:
    if text is None:
        return MultiplierScheme()
    if str(text) == "auto":
        return MultiplierScheme.default_block(n)
    q, r = parse_ints(text)
    return MultiplierScheme.block(q, r)


# --- commands ---------------------------------------------------------------


def cmd_test(args) -> int:
    t0 = time.perf_counter()
    header, table = read_csv(args.data)
    if args.response not in header:
        raise InputError(f"response column {args.response!r} not in header")
    ycol = header.index(args.response)
    cov_names = [h for h in header if h != args.response]
    cov = np.delete(table, ycol, axis=1)
    test_pos = parse_index_spec(args.test, cov_names)
    n, p = cov.shape
    d = len(test_pos)
    if n < 2:
        raise InputError("need at least 2 observations")
    if d >= p:
        raise InputError(f"d = {d} tested columns leaves no controls (p = {p})")
    ctrl_pos = [j for j in range(p) if j not in set(test_pos)]
    data = GripData(table[:, ycol], cov[:, test_pos], cov[:, ctrl_pos])
    beta0 = parse_beta0(args.beta0, d)
    scheme = parse_block(args.block, n)

    result = grip_test(
        data,
        beta0,
        alpha=args.alpha,
        B=args.bootstrap,
        scheme=scheme,
        lambda_gamma=args.lambda_gamma,
        R=args.tuning_reps,
        tuning_rng=stream(args.seed, 0),
        bootstrap_rng=stream(args.seed, 1),
        auto_relax=args.auto_relax,
    )
    resolved = {
        "data_sha256": hashlib.sha256(Path(args.data).read_bytes()).hexdigest(),
        "response": args.response,
        "test": [cov_names[j] for j in test_pos],
        "beta0": beta0.tolist(),
        "alpha": args.alpha,
        "bootstrap": args.bootstrap,
        "seed": args.seed,
        "block": scheme.to_dict(),
        "lambda": args.lambda_gamma,
        "tuning_reps": args.tuning_reps,
        "auto_relax": args.auto_relax,
    }
    out = {
        "t_max": result.statistic.t_max,
        "t_n": result.statistic.t_n.tolist(),
        "quantile": result.bootstrap.quantile,
        "p_value": result.bootstrap.p_value,
        "reject": result.bootstrap.reject,
        "alpha": args.alpha,
        "B": args.bootstrap,
        "sigma_eps_hat": result.gamma_fit.sigma_eps_hat,
        "sigma_u_hat": result.theta_fit.sigma_u_hat.tolist(),
        "tuning": result.tuning.to_dict(),
        "infeasibility_retries": result.relax_rounds,
        "seed": args.seed,
        "version": __version__,
        "run": run_record("test", resolved, args.seed, t0),
    }
    sys.stdout.write(json.dumps(out, indent=2) + "\n")
    return 0


# flag name -> ExperimentConfig field, for flags that map one to one
_SIM_KEYS = ("model", "n", "p", "s", "h", "reps", "alpha", "bootstrap", "seed", "block", "test_set",
             "lambda", "tuning_reps", "auto_relax", "noise", "phi", "standardize_t")


def resolve_simulate(args) -> dict:
    """Merge defaults, the optional TOML file and explicit flags (flags win)."""
    resolved = {
        "model": 1, "n": 200, "p": 500, "s": [2], "h": [0.0], "reps": 100, "alpha": [0.05],
        "bootstrap": 500, "seed": 0, "block": "none", "test_set": [4, 5, 7, 8, 10, 11],
        "lambda": 0.95, "tuning_reps": 30, "auto_relax": True, "noise": "iid", "phi": DEFAULT_AR1_PHI,
        "standardize_t": False,
    }
    if args.config:
        try:
            with open(args.config, "rb") as fh:
                filecfg = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from exc
        unknown = set(filecfg) - set(_SIM_KEYS)
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        resolved.update(filecfg)
    for key in _SIM_KEYS:
        val = getattr(args, key.replace("lambda", "lambda_gamma"))
        if val is not None:
            resolved[key] = val
    # normalize types so file and flag spellings hash identically
    resolved["model"] = int(resolved["model"])
    for key in ("s", "test_set"):
        resolved[key] = parse_ints(resolved[key])
    for key in ("h", "alpha"):
        resolved[key] = parse_floats(resolved[key])
    for key in ("n", "p", "reps", "bootstrap", "seed", "tuning_reps"):
        resolved[key] = int(resolved[key])
    for key in ("lambda", "phi"):
        resolved[key] = float(resolved[key])
    for key in ("auto_relax", "standardize_t"):
        resolved[key] = bool(resolved[key])
    resolved["block"] = str(resolved["block"])
    resolved["noise"] = str(resolved["noise"])
    return resolved


def experiment_config(resolved: dict) -> ExperimentConfig:
    if resolved["model"] not in (1, 2, 3):
        raise InputError("--model must be 1, 2 or 3")
    block = resolved["block"]
    scheme = MultiplierScheme() if block == "none" else parse_block(block, resolved["n"])
    if resolved["noise"] not in ("iid", "ar1"):
        raise InputError("--noise must be iid or ar1")
    noise = NoiseSpec(resolved["noise"], 1.0, resolved["phi"] if resolved["noise"] == "ar1" else 0.0)
    return ExperimentConfig(
        model=f"M{resolved['model']}",
        n=resolved["n"],
        p=resolved["p"],
        sparsity_grid=tuple(resolved["s"]),
        h_grid=tuple(resolved["h"]),
        test_set=tuple(resolved["test_set"]),
        alpha_levels=tuple(resolved["alpha"]),
        reps=resolved["reps"],
        B=resolved["bootstrap"],
        seed=resolved["seed"],
        scheme=scheme,
        noise=noise,
        lambda_gamma=resolved["lambda"],
        tuning_reps=resolved["tuning_reps"],
        auto_relax=resolved["auto_relax"],
        standardize_t=resolved["standardize_t"],
    )


def _write_rows(rows, columns):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in asdict(row).items()})
    sys.stdout.write(buf.getvalue())


def _finish(args, command, resolved, seed, t0):
    if args.record:
        Path(args.record).write_text(json.dumps(run_record(command, resolved, seed, t0), indent=2) + "\n")


def cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    resolved = resolve_simulate(args)
    config = experiment_config(resolved)
    if args.dump_config:
        Path(args.dump_config).write_bytes(tomli_w.dumps(resolved).encode())
    rows = run_size_power(config, threads=args.threads)
    _write_rows(rows, SIZE_POWER_COLUMNS)
    _finish(args, "simulate", resolved, resolved["seed"], t0)
    return 0


def cmd_figure1(args) -> int:
    t0 = time.perf_counter()
    resolved = {
        "n": args.n,
        "p": args.p,
        "s_grid": parse_ints(args.s_grid),
        "reps": args.reps,
        "alpha": parse_floats(args.alpha),
        "bootstrap": args.bootstrap,
        "seed": args.seed,
    }
    if args.p % 2:
        raise InputError("--p must be even")
    rows = run_figure1(
        n=args.n,
        p=args.p,
        sparsity_grid=resolved["s_grid"],
        reps=args.reps,
        alpha_levels=resolved["alpha"],
        seed=args.seed,
        B=args.bootstrap,
        threads=args.threads,
    )
    _write_rows(rows, FIGURE1_COLUMNS)
    _finish(args, "figure1", resolved, args.seed, t0)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="grip", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", help="simultaneous test on a CSV data set")
    t.add_argument("--data", required=True, help="CSV file with a header row")
    t.add_argument("--response", required=True, help="response column name")
    t.add_argument("--test", required=True,
                   help="tested columns: names or 1-based positions/ranges among the non-response columns")
    t.add_argument("--beta0", required=True, help="comma list (or file) of null values, one per tested column")
    t.add_argument("--alpha", type=float, default=0.05)
    t.add_argument("--bootstrap", type=int, default=500, metavar="B")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--block", default=None, metavar="Q,R", help="block multipliers with big/small sizes, or 'auto'")
    t.add_argument("--auto-relax", action="store_true", help="inflate eta and mu on infeasibility (3 rounds x1.5)")
    t.add_argument("--lambda", dest="lambda_gamma", type=float, default=0.95)
    t.add_argument("--tuning-reps", type=int, default=30)
    t.set_defaults(func=cmd_test)

    s = sub.add_parser("simulate", help="size/power sweep for Models 1-3")
    s.add_argument("--config", help="TOML file; keys mirror the flags")
    s.add_argument("--model", type=int)
    s.add_argument("--n", type=int)
    s.add_argument("--p", type=int)
    s.add_argument("--s")
    s.add_argument("--h")
    s.add_argument("--reps", type=int)
    s.add_argument("--alpha")
    s.add_argument("--bootstrap", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--block", help="'none', 'auto' or Q,R")
    s.add_argument("--test-set", dest="test_set")
    s.add_argument("--lambda", dest="lambda_gamma", type=float)
    s.add_argument("--tuning-reps", dest="tuning_reps", type=int)
    s.add_argument("--auto-relax", dest="auto_relax", action=argparse.BooleanOptionalAction, default=None,
                   help="inflate eta and mu on infeasibility (default on for sweeps)")
    s.add_argument("--noise", choices=("iid", "ar1"))
    s.add_argument("--phi", type=float, help="AR(1) coefficient when --noise ar1 (default 0.5)")
    s.add_argument("--standardize-t", dest="standardize_t", action="store_true", default=None)
    s.add_argument("--threads", type=int)
    s.add_argument("--dump-config", help="write the resolved configuration as TOML")
    s.add_argument("--record", help="write the run record as JSON")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("figure1", help="rejection curve of the closed-form de-sparsified test")
    f.add_argument("--n", type=int, default=300)
    f.add_argument("--p", type=int, default=700)
    f.add_argument("--s-grid", dest="s_grid", default="0,10,50,100,200,300")
    f.add_argument("--reps", type=int, default=1000)
    f.add_argument("--alpha", default="0.01,0.05,0.10")
    f.add_argument("--bootstrap", type=int, default=500)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--threads", type=int)
    f.add_argument("--record", help="write the run record as JSON")
    f.set_defaults(func=cmd_figure1)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        if hasattr(args, "threads"):
            args.threads = resolve_threads(args.threads)
        return args.func(args)
    except (InfeasibleError, SolverError) as exc:
        print(f"grip: {exc}", file=sys.stderr)
        return 2
    except (InputError, ParameterError, DegenerateError) as exc:
        print(f"grip: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
