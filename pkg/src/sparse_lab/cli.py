"""Command-line interface.

Data rows go to stdout or to --output; progress and diagnostics go to
stderr. CSV output carries '# key = value' metadata lines above an
RFC-4180 header and rows, with floats printed to 17 significant digits so
they round-trip exactly. JSON output is one object {"meta": ..., "records":
[...]}. Exit codes: 0 success, 1 computational failure, 2 usage error.

A flat key = value config file can stand in for flags: values from
--config FILE are applied first and explicit flags override them. The
environment variable SPARSE_LAB_SEED supplies the default --seed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .decoder import DecoderConfig
from .experiments import EnsembleSpec, run_monte_carlo, sweep_phase_diagram
from .replica import (
    BracketError,
    FixedPointError,
    ObjectiveProbeError,
    SolverConfig,
    SystemParams,
    find_critical_alpha,
    find_critical_rho_x,
    optimize_lambda,
    solve_mse_fixed_point,
    solve_threshold_fixed_point,
)
from .selftest import run_all
from .special import QuadratureError

__all__ = ["main", "build_parser"]

# config keys that map to bare boolean flags
_BOOL_KEYS = {"with-mc"}

_COMPUTE_ERRORS = (FixedPointError, BracketError, ObjectiveProbeError, QuadratureError)


class _UsageError(Exception):
    pass


def _fmt(value: object) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _meta_of(args: argparse.Namespace, **resolved: object) -> dict:
    """Echo the complete configuration the run actually used.

    Every flag of the subcommand appears, with values after config-file
    injection and defaulting; keyword overrides supply values resolved
    outside argparse (the seed). Output routing flags are omitted since
    they do not affect the computation.
    """
    skip = {"command", "func", "format", "output", "config"}
    meta: dict[str, object] = {"command": args.command, "version": __version__}
    for key, value in sorted(vars(args).items()):
        if key in skip:
            continue
        meta["lambda" if key == "lam" else key] = value
    meta.update(resolved)
    return meta


def _json_default(value: object) -> object:
    # numpy scalars carry .item(); anything else falls back to repr
    item = getattr(value, "item", None)
    if callable(item):
        return item()
    return repr(value)


def _emit(args: argparse.Namespace, meta: dict, records: list[dict], columns: list[str]) -> None:
    if args.format == "json":
        text = json.dumps({"meta": meta, "records": records}, indent=2, default=_json_default) + "\n"
    else:
        buf = io.StringIO()
        for key, value in meta.items():
            buf.write(f"# {key} = {_fmt(value)}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for record in records:
            writer.writerow([_fmt(record[column]) for column in columns])
        text = buf.getvalue()
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


def _progress(label: str):
    def callback(done: int, total: int) -> None:
        print(f"{label}: {done}/{total}", file=sys.stderr, flush=True)

    return callback


def _default_seed() -> int:
    raw = os.environ.get("SPARSE_LAB_SEED")
    if raw is None:
        return 12345
    try:
        return int(raw)
    except ValueError as exc:
        raise _UsageError(f"SPARSE_LAB_SEED must be an integer, got {raw!r}") from exc


def _add_output_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="output format")
    p.add_argument("--output", default=None, metavar="PATH", help="write to a file instead of stdout")
    p.add_argument(
        "--config",
        default=None,
        metavar="FILE",
        help="flat key = value file supplying defaults for any flag of this subcommand",
    )


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--damping", type=float, default=0.5, help="iteration damping in [0, 1)")
    p.add_argument("--rel-tol", type=float, default=1e-12, help="fixed point relative tolerance")
    p.add_argument("--max-iters", type=int, default=200_000, help="fixed point sweep budget")
    p.add_argument("--lambda-min", type=float, default=1e-3, help="penalty search bracket, lower end")
    p.add_argument("--lambda-max", type=float, default=1e3, help="penalty search bracket, upper end")
    p.add_argument("--bisection-tol", type=float, default=1e-6, help="bisection interval tolerance")


def _add_system_flags(p: argparse.ArgumentParser, with_variances: bool = True) -> None:
    p.add_argument("--alpha", type=float, default=None, help="measurement ratio M/N")
    p.add_argument("--rho-x", type=float, default=None, help="signal density")
    p.add_argument("--rho-w", type=float, required=True, help="noise density")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0, help="penalty weight")
    if with_variances:
        p.add_argument("--sigma2-x", type=float, default=1.0, help="signal component variance")
        p.add_argument("--sigma2-w", type=float, default=1.0, help="noise component variance")


def _add_decoder_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--step-scale", type=float, default=0.99, help="decoder step size safety factor")
    p.add_argument("--decoder-tol", type=float, default=1e-9, help="decoder certificate tolerance")
    p.add_argument("--decoder-max-iters", type=int, default=100_000, help="decoder sweep budget")


def _add_mc_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=int, default=256, help="signal dimension")
    p.add_argument("--trials", type=int, default=50, help="number of sampled instances")
    p.add_argument("--seed", type=int, default=None, help="base seed (default: SPARSE_LAB_SEED or 12345)")
    p.add_argument("--success-tol", type=float, default=1e-6, help="per-component success threshold")
    p.add_argument(
        "--workers",
        type=int,
        default=os.cpu_count() or 1,
        help="worker processes (default: machine core count)",
    )


def _solver_config(args: argparse.Namespace) -> SolverConfig:
    return SolverConfig(
        damping=args.damping,
        rel_tol=args.rel_tol,
        max_iters=args.max_iters,
        lambda_bracket=(args.lambda_min, args.lambda_max),
        bisection_tol=args.bisection_tol,
    )


def _decoder_config(args: argparse.Namespace) -> DecoderConfig:
    return DecoderConfig(
        step_scale=args.step_scale,
        primal_tol=args.decoder_tol,
        dual_tol=args.decoder_tol,
        max_iters=args.decoder_max_iters,
    )


def _seed_of(args: argparse.Namespace) -> int:
    return args.seed if args.seed is not None else _default_seed()


def _require(args: argparse.Namespace, flag: str, reason: str) -> float:
    value = getattr(args, flag.lstrip("-").replace("-", "_"))
    if value is None:
        raise _UsageError(f"{flag} is required {reason}")
    return value


def _grid(args: argparse.Namespace) -> list[float]:
    count = args.grid_count
    if count < 0:
        raise _UsageError("--grid-count must be nonnegative")
    if count == 0:
        return []
    if count == 1:
        return [args.grid_start]
    start, stop = args.grid_start, args.grid_stop
    if args.grid_scale == "log":
        if not (start > 0.0 and stop > 0.0):
            raise _UsageError("log grids need positive endpoints")
        lo, hi = math.log(start), math.log(stop)
        return [math.exp(lo + i * (hi - lo) / (count - 1)) for i in range(count)]
    return [start + i * (stop - start) / (count - 1) for i in range(count)]


def _add_grid_flags(p: argparse.ArgumentParser, what: str) -> None:
    p.add_argument("--grid-start", type=float, required=True, help=f"first {what} value")
    p.add_argument("--grid-stop", type=float, required=True, help=f"last {what} value")
    p.add_argument("--grid-count", type=int, required=True, help="number of grid points")
    p.add_argument("--grid-scale", choices=("linear", "log"), default="linear", help="grid spacing")


def cmd_threshold(args: argparse.Namespace) -> int:
    cfg = _solver_config(args)
    if args.solve_for == "rho-x":
        alpha = _require(args, "--alpha", "when solving for the critical density")
        rho_x_c = find_critical_rho_x(alpha, args.lam, args.rho_w, cfg)
        alpha_c = alpha
    else:
        rho_x_c = _require(args, "--rho-x", "when solving for the critical measurement ratio")
        alpha_c = find_critical_alpha(args.lam, rho_x_c, args.rho_w, cfg)
    state = solve_threshold_fixed_point(alpha_c, args.lam, rho_x_c, args.rho_w, cfg)
    meta = _meta_of(args)
    record = {
        "solve_for": args.solve_for,
        "alpha_c": alpha_c,
        "rho_x_c": rho_x_c,
        "lambda": args.lam,
        "A": state.A,
        "chi_hat": state.chi_hat,
        "condition_residual": state.condition_residual,
        "iterations": state.iterations,
    }
    _emit(args, meta, [record], list(record.keys()))
    return 0


_CURVE_COLUMNS = [
    "rho_x",
    "alpha",
    "status",
    "mse",
    "chi",
    "m_hat",
    "chi_hat",
    "diag_m",
    "diag_q",
    "iterations",
    "mc_mean_mse",
    "mc_std_error",
    "mc_success_fraction",
    "mc_not_converged",
]


def cmd_mse_curve(args: argparse.Namespace) -> int:
    cfg = _solver_config(args)
    grid = _grid(args)
    if args.axis == "rho-x":
        alpha = _require(args, "--alpha", "when sweeping the signal density")
    else:
        rho_x = _require(args, "--rho-x", "when sweeping the measurement ratio")
    records: list[dict] = []
    progress = _progress("mse-curve")
    for index, value in enumerate(grid):
        if args.axis == "rho-x":
            point = dict(alpha=alpha, rho_x=value)
        else:
            point = dict(alpha=value, rho_x=rho_x)
        params = SystemParams(
            lam=args.lam,
            rho_w=args.rho_w,
            sigma2_x=args.sigma2_x,
            sigma2_w=args.sigma2_w,
            **point,
        )
        record = dict.fromkeys(_CURVE_COLUMNS, math.nan)
        record.update(point)
        try:
            state = solve_mse_fixed_point(params, cfg)
        except FixedPointError:
            record["status"] = "failed"
            record["iterations"] = math.nan
        else:
            record["status"] = "perfect" if state.perfect else "converged"
            record["mse"] = 0.0 if state.perfect else state.mse
            record.update(
                chi=state.chi,
                m_hat=state.m_hat,
                chi_hat=state.chi_hat,
                diag_m=state.diag_m,
                diag_q=state.diag_q,
                iterations=state.iterations,
            )
        if args.with_mc:
            spec = EnsembleSpec(n=args.n, params=params, trials=args.trials, base_seed=_seed_of(args))
            aggregate = run_monte_carlo(
                spec,
                _decoder_config(args),
                success_tol=args.success_tol,
                workers=args.workers,
            )
            record.update(
                mc_mean_mse=aggregate.mean_mse,
                mc_std_error=aggregate.std_error,
                mc_success_fraction=aggregate.success_fraction,
                mc_not_converged=aggregate.not_converged,
            )
        records.append(record)
        progress(index + 1, len(grid))
    _emit(args, _meta_of(args, seed=_seed_of(args)), records, _CURVE_COLUMNS)
    return 0


def cmd_phase_diagram(args: argparse.Namespace) -> int:
    cfg = _solver_config(args)
    try:
        deltas = [float(part) for part in args.deltas.split(",") if part.strip()]
    except ValueError as exc:
        raise _UsageError(f"--deltas must be a comma-separated float list: {exc}") from exc
    if not deltas:
        raise _UsageError("--deltas must name at least one ratio")
    rows = sweep_phase_diagram(
        _grid(args),
        deltas,
        lambda_mode=args.lambda_mode,
        cfg=cfg,
        progress=_progress("phase-diagram"),
    )
    records = [
        {
            "rho_x": row.rho_x,
            "delta": row.delta,
            "rho_w": row.rho_w,
            "alpha_c_fixed": row.alpha_c_fixed,
            "alpha_c_optimal": row.alpha_c_optimal,
            "lambda_star": row.lambda_star,
        }
        for row in rows
    ]
    columns = ["rho_x", "delta", "rho_w", "alpha_c_fixed", "alpha_c_optimal", "lambda_star"]
    _emit(args, _meta_of(args), records, columns)
    return 0


def cmd_optimize_lambda(args: argparse.Namespace) -> int:
    cfg = _solver_config(args)
    if args.objective == "critical-rho-x":
        _require(args, "--alpha", "for the critical-density objective")
    elif args.objective == "critical-alpha":
        _require(args, "--rho-x", "for the critical-ratio objective")
    else:
        _require(args, "--alpha", "for the mse objective")
        _require(args, "--rho-x", "for the mse objective")
    optimum = optimize_lambda(
        args.objective,
        alpha=args.alpha,
        rho_x=args.rho_x,
        rho_w=args.rho_w,
        sigma2_x=args.sigma2_x,
        sigma2_w=args.sigma2_w,
        cfg=cfg,
    )
    meta = _meta_of(args)
    record = {
        "objective": args.objective,
        "alpha": math.nan if args.alpha is None else args.alpha,
        "rho_x": math.nan if args.rho_x is None else args.rho_x,
        "rho_w": args.rho_w,
        "lambda_star": optimum.lambda_star,
        "objective_value": optimum.objective_value,
    }
    _emit(args, meta, [record], list(record.keys()))
    return 0


def cmd_mc(args: argparse.Namespace) -> int:
    params = SystemParams(
        alpha=_require(args, "--alpha", "to size the ensemble"),
        lam=args.lam,
        rho_x=_require(args, "--rho-x", "to sample signals"),
        rho_w=args.rho_w,
        sigma2_x=args.sigma2_x,
        sigma2_w=args.sigma2_w,
    )
    spec = EnsembleSpec(n=args.n, params=params, trials=args.trials, base_seed=_seed_of(args))
    aggregate = run_monte_carlo(
        spec,
        _decoder_config(args),
        success_tol=args.success_tol,
        workers=args.workers,
        progress=_progress("mc"),
    )
    meta = _meta_of(args, seed=_seed_of(args))
    record = {
        "n": spec.n,
        "m": spec.m,
        "trials": aggregate.trials,
        "mean_mse": aggregate.mean_mse,
        "std_error": aggregate.std_error,
        "success_fraction": aggregate.success_fraction,
        "not_converged": aggregate.not_converged,
        "replica_mse": aggregate.replica_mse,
        "replica_perfect": aggregate.replica_perfect,
    }
    _emit(args, meta, [record], list(record.keys()))
    return 0


def cmd_selftest(args: argparse.Namespace) -> int:
    results = run_all()
    for result in results:
        tag = "ok" if result.passed else "FAIL"
        print(f"{tag:4s} {result.name}: {result.detail}", file=sys.stderr)
    failed = sum(1 for r in results if not r.passed)
    print(f"{len(results) - failed}/{len(results)} checks passed", file=sys.stderr)
    meta = _meta_of(args)
    records = [
        {"check": r.name, "passed": r.passed, "detail": r.detail} for r in results
    ]
    _emit(args, meta, records, ["check", "passed", "detail"])
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparse-lab",
        description="Predictions and Monte Carlo validation for L1-penalized L1 reconstruction",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("threshold", help="locate the perfect-recovery boundary")
    p.add_argument("--solve-for", choices=("rho-x", "alpha"), required=True)
    _add_system_flags(p, with_variances=False)
    _add_solver_flags(p)
    _add_output_flags(p)
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("mse-curve", help="asymptotic error along a parameter grid")
    p.add_argument("--axis", choices=("rho-x", "alpha"), default="rho-x")
    _add_system_flags(p)
    _add_grid_flags(p, "axis")
    _add_solver_flags(p)
    p.add_argument("--with-mc", action="store_true", help="decode finite instances at each point")
    _add_mc_flags(p)
    _add_decoder_flags(p)
    _add_output_flags(p)
    p.set_defaults(func=cmd_mse_curve)

    p = sub.add_parser("phase-diagram", help="boundary over a density grid")
    _add_grid_flags(p, "rho_x")
    p.add_argument("--deltas", default="0.2,0.1,0.02", help="comma list of rho_w / rho_x ratios")
    p.add_argument("--lambda-mode", choices=("fixed", "both"), default="both")
    _add_solver_flags(p)
    _add_output_flags(p)
    p.set_defaults(func=cmd_phase_diagram)

    p = sub.add_parser("optimize-lambda", help="tune the penalty weight")
    p.add_argument(
        "--objective",
        choices=("critical-rho-x", "critical-alpha", "mse"),
        required=True,
    )
    _add_system_flags(p)
    _add_solver_flags(p)
    _add_output_flags(p)
    p.set_defaults(func=cmd_optimize_lambda)

    p = sub.add_parser("mc", help="decode a sampled ensemble and compare predictions")
    _add_system_flags(p)
    _add_mc_flags(p)
    _add_decoder_flags(p)
    _add_output_flags(p)
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("selftest", help="run the built-in invariant checks")
    _add_output_flags(p)
    p.set_defaults(func=cmd_selftest)

    return parser


def _read_config(path: str) -> list[tuple[str, str]]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise _UsageError(f"cannot read config file {path!r}: {exc}") from exc
    pairs: list[tuple[str, str]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise _UsageError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        pairs.append((key.strip(), value.strip()))
    return pairs


def _inject_config(argv: list[str]) -> list[str]:
    """Expand --config FILE into flags placed before the explicit ones."""
    path = None
    for i, token in enumerate(argv):
        if token == "--config":
            if i + 1 >= len(argv):
                raise _UsageError("--config needs a file path")
            path = argv[i + 1]
            break
        if token.startswith("--config="):
            path = token.split("=", 1)[1]
            break
    if path is None or not argv or argv[0].startswith("-"):
        return argv
    flags: list[str] = []
    for key, value in _read_config(path):
        name = "--" + key.replace("_", "-")
        if name.lstrip("-") in _BOOL_KEYS:
            if value.lower() in ("true", "1", "yes", "on"):
                flags.append(name)
            elif value.lower() not in ("false", "0", "no", "off"):
                raise _UsageError(f"config key {key!r} expects a boolean, got {value!r}")
        else:
            flags.extend((name, value))
    return [argv[0], *flags, *argv[1:]]


def main(argv: Sequence[str] | None = None) -> int:
    raw_argv = list(sys.argv[1:] if argv is None else argv)
    try:
        processed = _inject_config(raw_argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    parser = build_parser()
    try:
        args = parser.parse_args(processed)
    except SystemExit as exc:
        code = exc.code
        return code if isinstance(code, int) else 2
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _COMPUTE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
