"""
Command-line front end.

    tvipm run --scenario tvqp --preset paper --out results/
    tvipm run --scenario l1ls --seed 7
    tvipm run --scenario robot --preset static --start=-15,-15
    tvipm schema --scenario robot

Artifacts are plot-ready data only: ``trajectory.csv``, its JSON mirror
``trajectory.json`` and, for l1ls, ``report.json``.
"""
import argparse
import csv
import json
import logging
import math
import os
import sys
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import SCENARIOS, RunConfig, load_run_config
from .errors import ConfigError, TvipmError
from .integrator import Mode, Trajectory, check_mode, integrate
from .oracle import ErrorSeries, tracking_error
from .scenarios.custom import build_custom
from .scenarios.l1ls import RNG_NAME, build_l1ls, run_ipm_comparison
from .scenarios.robot import (
    CircularGoal,
    RobotConfig,
    RobotTrajectory,
    StaticGoal,
    reference_workspace,
    robot_simulate,
)
from .scenarios.tvqp import build_tvqp

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
LOG_ENV = "TVIPM_LOG"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IO = 4

logging.basicConfig(
    level=LOG_LEVELS.get(os.environ.get(LOG_ENV, "info").lower(), logging.INFO),
    format="%(asctime)s [%(levelname)s] %(module)s - %(message)s",
    datefmt="%Y-%m-%d %H:%M:%S",
)

SCHEMA: Dict[str, List[Tuple[str, str, str]]] = {
    "tvqp": [
        ("t", "time", "sample time"),
        ("x<i>", "-", "i-th component of the tracked solution x(t)"),
        ("f<i>", "-", "value of the i-th inequality constraint at x(t)"),
        ("s", "-", "slack s(t)"),
        ("c", "-", "barrier parameter c(t)"),
        ("grad_norm", "-", "optimality residual ‖∇xΦ‖ (or ‖∇f0‖, ‖∇zL‖)"),
        ("track_err", "-", "‖x(t) - x*(t)‖ to the static optimum; nan if not sampled"),
    ],
    "custom": [
        ("t", "time", "sample time"),
        ("x<i>", "-", "i-th component of x(t)"),
        ("nu<i>", "-", "i-th equality multiplier (equality and combined modes)"),
        ("y<i>", "-", "i-th filter state (second-order mode)"),
        ("f<i>", "-", "value of the i-th inequality constraint (barrier modes)"),
        ("s", "-", "slack s(t) (barrier modes)"),
        ("c", "-", "barrier parameter c(t) (barrier modes)"),
        ("eq_residual", "-", "‖A(t)x - b(t)‖ (equality and combined modes)"),
        ("grad_norm", "-", "optimality residual of the mode"),
        ("track_err", "-", "‖x(t) - x*(t)‖ to the static optimum; nan if not sampled"),
    ],
    "l1ls": [
        ("method", "-", "snipm or anipm"),
        ("iteration", "count", "iterations taken; 0 is the starting point"),
        ("gap", "-", "duality-gap surrogate η/g(ν); inf when g(ν) <= 0"),
    ],
    "robot": [
        ("t", "s", "sample time"),
        ("xc1", "m", "robot center, first coordinate"),
        ("xc2", "m", "robot center, second coordinate"),
        ("xhat1", "m", "projected-goal estimate, first coordinate"),
        ("xhat2", "m", "projected-goal estimate, second coordinate"),
        ("goal1", "m", "goal position, first coordinate"),
        ("goal2", "m", "goal position, second coordinate"),
        ("margin", "m", "collision margin min_i ‖x_c - x_i‖ - r_i - r"),
        ("min_psi", "-", "smallest barrier residual of the estimate in LF(x_c)"),
        ("grad_norm", "-", "‖∇xΦ‖ at the estimate"),
        ("c", "-", "barrier parameter c(t)"),
        ("s", "-", "slack s(t)"),
    ],
}


@dataclass
class RunResult:
    columns: List[str]
    rows: List[List[Any]]
    report: Optional[Dict[str, Any]] = None
    error: Optional[str] = None
    error_detail: Optional[str] = None
    rng_name: Optional[str] = None
    extra: Dict[str, Any] = field(default_factory=dict)


def _finite_or_none(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def trajectory_table(
    traj: Trajectory, errors: Optional[ErrorSeries] = None, stride: int = 1
) -> Tuple[List[str], List[List[Any]]]:
    """
    Columns and rows of an integrator trajectory; ``errors`` holds the
    tracking errors of every ``stride``-th sample.
    """
    if len(traj) == 0:
        raise ValueError("trajectory has no samples")
    first = traj.samples[0]
    columns = ["t"] + [f"x{i + 1}" for i in range(first.x.shape[0])]
    if first.nu is not None:
        columns += [f"nu{i + 1}" for i in range(first.nu.shape[0])]
    if first.y is not None:
        columns += [f"y{i + 1}" for i in range(first.y.shape[0])]
    barrier = first.c is not None
    if barrier:
        columns += [f"f{i + 1}" for i in range(first.f_ineq.shape[0])]
        columns += ["s", "c"]
    if first.nu is not None:
        columns.append("eq_residual")
    columns += ["grad_norm", "track_err"]

    rows = []
    for k, sample in enumerate(traj.samples):
        row: List[Any] = [sample.t, *map(float, sample.x)]
        if sample.nu is not None:
            row += list(map(float, sample.nu))
        if sample.y is not None:
            row += list(map(float, sample.y))
        if barrier:
            row += list(map(float, sample.f_ineq)) + [sample.s, sample.c]
        if sample.nu is not None:
            row.append(sample.eq_residual)
        error = math.nan
        if errors is not None and k % stride == 0 and k // stride < len(errors):
            error = float(errors.errors[k // stride])
        row += [sample.grad_norm, error]
        rows.append(row)
    return columns, rows


def robot_table(traj: RobotTrajectory) -> Tuple[List[str], List[List[Any]]]:
    if len(traj) == 0:
        raise ValueError("trajectory has no samples")
    columns = [name for name, _, _ in SCHEMA["robot"]]
    rows = [
        [
            sample.t,
            *map(float, sample.x_c),
            *map(float, sample.x_hat),
            *map(float, sample.goal),
            sample.margin,
            sample.min_psi,
            sample.grad_norm,
            sample.c,
            sample.s,
        ]
        for sample in traj.samples
    ]
    return columns, rows


def write_table(columns: Sequence[str], rows: Sequence[Sequence[Any]], fmt, path):
    """
    Writes one CSV (header, then one row per sample, floats with 17
    significant digits) or its JSON mirror, a list of records.
    """
    if not rows:
        raise ValueError("refusing to write an empty trajectory")
    path = Path(path)
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_format_cell(value) for value in row])
    elif fmt == "json":
        records = [
            {name: _finite_or_none(value) for name, value in zip(columns, row)}
            for row in rows
        ]
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(records, handle, indent=1)
            handle.write("\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")


def write_trajectory(traj, fmt: str, path, errors=None, stride: int = 1):
    """
    Writes an integrator or robot trajectory as CSV or JSON.

    :raises ValueError: for an empty trajectory; no file is created.
    """
    if isinstance(traj, RobotTrajectory):
        columns, rows = robot_table(traj)
    else:
        columns, rows = trajectory_table(traj, errors, stride)
    write_table(columns, rows, fmt, path)


def _parse_cell(text: str):
    if text == "":
        return None
    try:
        return float(text)
    except ValueError:
        return text


def read_trajectory(path) -> Tuple[List[str], List[List[Any]]]:
    """
    Reads a file written by :func:`write_table` back into columns and rows.
    Missing JSON values (non-finite floats) come back as ``None``.
    """
    path = Path(path)
    if path.suffix == ".json":
        with open(path, encoding="utf-8") as handle:
            records = json.load(handle)
        columns = list(records[0]) if records else []
        return columns, [[record[name] for name in columns] for record in records]
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        columns = next(reader)
        return columns, [[_parse_cell(cell) for cell in row] for row in reader]


@contextmanager
def _setup_checks():
    """
    Reports a ValueError raised while assembling a run as a ConfigError.
    """
    try:
        yield
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(str(e)) from e


def _start(config: RunConfig, dimension: int) -> np.ndarray:
    if config.start is None:
        return np.zeros(dimension)
    if len(config.start) != dimension:
        raise ConfigError(
            f"start has {len(config.start)} entries, expected {dimension}"
        )
    return np.array(config.start, dtype=float)


def _run_integrator(config: RunConfig) -> RunResult:
    with _setup_checks():
        if config.scenario == "tvqp":
            problem = build_tvqp()
        else:
            problem = build_custom(config.custom)
        mode = Mode(config.mode or "barrier")
        check_mode(problem, mode, config.integrator)
        start = _start(config, problem.dimension)
    traj = integrate(
        problem, mode, config.gains, config.schedules, config.integrator, start
    )
    if len(traj) == 0:
        return RunResult([], [], error=traj.error, error_detail=traj.error_detail)
    errors = tracking_error(traj, problem, config.stride, config.oracle, config.workers)
    columns, rows = trajectory_table(traj, errors, config.stride)
    return RunResult(columns, rows, error=traj.error, error_detail=traj.error_detail)


def _run_l1ls(config: RunConfig) -> RunResult:
    settings = config.l1ls
    with _setup_checks():
        instance, problem = build_l1ls(
            seed=config.seed,
            m=settings.m,
            n=settings.n,
            k_sparsity=settings.k_sparsity,
            noise_sigma=settings.noise_sigma,
            lam=settings.lam,
        )
    methods = ("snipm", "anipm") if config.mode == "compare" else (config.mode,)
    reports = {
        method: run_ipm_comparison(instance, method, config.comparison, problem)
        for method in methods
    }
    rows = [
        [method, iteration, gap]
        for method, report in reports.items()
        for iteration, gap in enumerate(report.gap_trace)
    ]
    summary: Dict[str, Any] = {
        "scenario": "l1ls",
        "seed": config.seed,
        "rng": instance.rng_name,
        "m": settings.m,
        "n": settings.n,
        "k_sparsity": settings.k_sparsity,
        "lambda": settings.lam,
        "gap_target": config.comparison.gap_target,
    }
    for method, report in reports.items():
        summary[f"{method}_iters"] = report.iterations
        summary[f"{method}_converged"] = report.converged
    summary["gap_trace"] = {
        method: [_finite_or_none(gap) for gap in report.gap_trace]
        for method, report in reports.items()
    }
    failed = [method for method, report in reports.items() if not report.converged]
    error = detail = None
    if failed:
        error = "NotConverged"
        detail = f"{', '.join(failed)} did not reach the gap target"
    return RunResult(
        ["method", "iteration", "gap"],
        rows,
        report=summary,
        error=error,
        error_detail=detail,
        rng_name=RNG_NAME,
    )


def _run_robot(config: RunConfig) -> RunResult:
    if config.robot.goal == "moving":
        goal = CircularGoal(radius=15.0, period=2000.0)
    else:
        goal = StaticGoal((0.0, 0.0))
    workspace = reference_workspace(goal, controller_gain=config.robot.gain)
    integrator = config.integrator
    with _setup_checks():
        robot_config = RobotConfig(
            start=tuple(_start(config, 2)),
            tau=integrator.tau,
            t_end=integrator.t_end,
            guard_shrink=integrator.guard_shrink,
            max_backtracks=integrator.max_backtracks,
            record_stride=integrator.record_stride,
        ).validate()
    traj = robot_simulate(workspace, config.gains, config.schedules, robot_config)
    if len(traj) == 0:
        return RunResult([], [], error=traj.error, error_detail=traj.error_detail)
    columns, rows = robot_table(traj)
    return RunResult(columns, rows, error=traj.error, error_detail=traj.error_detail)


RUNNERS = {
    "tvqp": _run_integrator,
    "custom": _run_integrator,
    "l1ls": _run_l1ls,
    "robot": _run_robot,
}


def _store_run(config: RunConfig, result: RunResult, exit_code: int):
    from .store import StoreMixin, open_store, record_run

    rows = [
        {name: _finite_or_none(value) for name, value in zip(result.columns, row)}
        for row in result.rows
    ]
    open_store(config.store)
    try:
        record_run(
            scenario=config.scenario,
            mode=config.mode,
            preset=config.preset,
            seed=config.seed if config.scenario == "l1ls" else None,
            rng_name=result.rng_name,
            config=config.settings,
            status="ok" if exit_code == EXIT_OK else (result.error or "failed"),
            exit_code=exit_code,
            rows=rows,
        )
    finally:
        StoreMixin.store_close()


def run(config: RunConfig) -> int:
    """
    Runs one configured scenario and writes its artifacts.

    :returns: ``0``, or ``3`` when the solver stopped early or did not
        converge; the partial artifacts are written either way.
    """
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    result = RUNNERS[config.scenario](config)

    if result.rows:
        if config.emit in ("csv", "both"):
            write_table(result.columns, result.rows, "csv", out / "trajectory.csv")
        if config.emit in ("json", "both"):
            write_table(result.columns, result.rows, "json", out / "trajectory.json")
    if result.report is not None:
        with open(out / "report.json", "w", encoding="utf-8") as handle:
            json.dump(result.report, handle, indent=1, sort_keys=True)
            handle.write("\n")

    exit_code = EXIT_OK if result.error is None else EXIT_SOLVER
    if config.store:
        try:
            _store_run(config, result, exit_code)
        except Exception:
            logging.exception(f"Could not record the run in {config.store}")
    if result.error is not None:
        _error_record(result.error, result.error_detail or "", exit_code)
    else:
        logging.info(f"Wrote {len(result.rows)} rows to {out}")
    return exit_code


def schema(scenario: Optional[str] = None) -> Dict[str, Any]:
    scenarios = [scenario] if scenario else list(SCHEMA)
    return {
        name: [
            {"column": column, "unit": unit, "meaning": meaning}
            for column, unit, meaning in SCHEMA[name]
        ]
        for name in scenarios
    }


def _error_record(kind: str, message: str, exit_code: int):
    record = {"error": kind, "message": message, "exit_code": exit_code}
    print(json.dumps(record), file=sys.stderr)


def _fail(error: Exception, exit_code: int) -> int:
    _error_record(type(error).__name__, str(error), exit_code)
    return exit_code


FLAG_KEYS = {
    "scenario": "scenario",
    "preset": "preset",
    "seed": "seed",
    "mode": "mode",
    "tau": "integrator.tau",
    "alpha": "gains.alpha",
    "gamma_c": "schedules.gamma_c",
    "gamma_s": "schedules.gamma_s",
    "t_end": "integrator.t_end",
    "start": "start",
    "out": "out",
    "format": "format",
    "stride": "stride",
    "workers": "workers",
    "method": "integrator.method",
    "store": "store",
}


def _overrides(args: argparse.Namespace) -> Dict[str, str]:
    overrides = {
        key: getattr(args, name)
        for name, key in FLAG_KEYS.items()
        if getattr(args, name) is not None
    }
    if args.line_search:
        overrides["integrator.line_search"] = "true"
    return overrides


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tvipm",
        description="Prediction-correction interior point dynamics for "
        "time-varying convex optimization.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run_parser = commands.add_parser("run", help="run one scenario")
    run_parser.add_argument("--scenario", choices=SCENARIOS)
    run_parser.add_argument("--preset", help="paper, desk, static or moving")
    run_parser.add_argument("--config", help="flat key = value settings file")
    run_parser.add_argument("--seed")
    run_parser.add_argument("--mode")
    run_parser.add_argument("--tau")
    run_parser.add_argument("--alpha")
    run_parser.add_argument("--gamma-c", dest="gamma_c")
    run_parser.add_argument("--gamma-s", dest="gamma_s")
    run_parser.add_argument("--t-end", dest="t_end")
    run_parser.add_argument("--start", help="comma-separated, e.g. --start=-15,-15")
    run_parser.add_argument("--out", help="output directory (default .)")
    run_parser.add_argument("--format", choices=("csv", "json", "both"))
    run_parser.add_argument("--stride", help="oracle sample stride")
    run_parser.add_argument("--workers", help="threads for oracle solves")
    run_parser.add_argument("--method", choices=("euler", "rk4"))
    run_parser.add_argument("--line-search", action="store_true")
    run_parser.add_argument("--store", help="SQLite file recording the run")
    run_parser.add_argument(
        "--schema", action="store_true", help="print the output columns and exit"
    )

    schema_parser = commands.add_parser("schema", help="describe output columns")
    schema_parser.add_argument("--scenario", choices=SCENARIOS)
    return parser


def _check_log_level():
    value = os.environ.get(LOG_ENV)
    if value is not None and value.lower() not in LOG_LEVELS:
        raise ConfigError(f"{LOG_ENV} must be one of {', '.join(LOG_LEVELS)}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _check_log_level()
        if args.command == "schema" or args.schema:
            print(json.dumps(schema(args.scenario), indent=1, ensure_ascii=False))
            return EXIT_OK
        config = load_run_config(args.config, _overrides(args))
    except (ConfigError, ValueError) as e:
        return _fail(e, EXIT_CONFIG)
    except OSError as e:
        return _fail(e, EXIT_IO)

    logging.debug(f"Run configuration: {asdict(config)}")
    try:
        return run(config)
    except ConfigError as e:
        return _fail(e, EXIT_CONFIG)
    except (TvipmError, ValueError) as e:
        # raised by the solvers once the configuration was accepted
        return _fail(e, EXIT_SOLVER)
    except OSError as e:
        return _fail(e, EXIT_IO)
