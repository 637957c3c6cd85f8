"""Command-line entry point: ``tariffmrio {validate,fixture,baseline,run,compare}``.

Exit codes: 0 success, 1 validation or convergence failure, 2 I/O or usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import yaml

from . import __version__
from .armington import DEFAULT_SIGMA
from .catalog import default_income_groups, load_income_groups
from .data_io import (
    WorldDataError,
    WorldFileError,
    demo_world_path,
    generate_fixture,
    load_world,
    validate_world,
    world_hash,
    write_world,
)
from .equilibrium import Economy, SolverConfig, solve_baseline, solve_scenario
from .mrio import MRIOError, SolverError
from .prices import DEFAULT_EPSILON
from .reports import (
    CompareError,
    baseline_table,
    build_report,
    compare_runs,
    format_table,
    write_csv,
    write_report,
)
from .scenarios import ScenarioError, builtin_scenario_path, load_baseline_duties, parse_scenario

logger = logging.getLogger("tariffmrio")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
CONFIG_KEYS = {
    "world", "scenarios", "out", "sigma", "epsilon", "damping", "tolerance",
    "max_iterations", "top_k", "groups", "baseline_duties", "jobs",
}
CONFIG_TO_ARG = {"scenarios": "scenario", "tolerance": "tol", "max_iterations": "max_iter"}


class UsageError(Exception):
    pass


def _float_list(text: str):
    """A single number or a comma-separated per-sector list."""
    try:
        values = [float(v) for v in str(text).split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a number or list of numbers: {text!r}") from exc
    return values[0] if len(values) == 1 else values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tariffmrio",
        description="Tariff shock propagation through a multiregional input-output model.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=0,
                        help="progress output on stderr (-vv for debug)")
    world = argparse.ArgumentParser(add_help=False, parents=[common])
    world.add_argument("--world", help="world directory, or 'demo' for the packaged 3x2 fixture")
    world.add_argument("--config", help="YAML run configuration; its values override flags")

    solver = argparse.ArgumentParser(add_help=False)
    solver.add_argument("--sigma", type=_float_list, help=f"Armington elasticity (default {DEFAULT_SIGMA:g})")
    solver.add_argument("--epsilon", type=_float_list, help=f"demand price elasticity (default {DEFAULT_EPSILON:g})")
    solver.add_argument("--damping", type=float, help="update damping in (0, 1] (default 0.5)")
    solver.add_argument("--tol", type=float, help="convergence tolerance (default 1e-9)")
    solver.add_argument("--max-iter", type=int, help="iteration cap (default 200)")
    solver.add_argument("--groups", help="country,group CSV replacing the packaged income groups")
    solver.add_argument("--no-timestamp", action="store_true", help="omit the generation time line")

    p = sub.add_parser("validate", parents=[world], help="check a world directory")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("fixture", parents=[common], help="write a synthetic balanced world")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--countries", type=int, default=3)
    p.add_argument("--sectors", type=int, default=2)
    p.add_argument("--sparsity", type=float, default=0.2)
    p.add_argument("--openness", type=float, default=0.3)
    p.set_defaults(func=cmd_fixture)

    p = sub.add_parser("baseline", parents=[world, solver], help="solve and write the baseline")
    p.add_argument("--out")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("run", parents=[world, solver], help="solve scenarios and write reports")
    p.add_argument("--scenario", action="append",
                   help="scenario YAML, or builtin:scenario1..3 (repeatable)")
    p.add_argument("--out")
    p.add_argument("--top-k", type=int, help="rows in the top country/sector tables (default 15)")
    p.add_argument("--baseline-duties", help="CSV of baseline duties (importer,exporter,sector,rate)")
    p.add_argument("--jobs", type=int, help="scenarios solved concurrently (default 1)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", parents=[common], help="merge completed runs side by side")
    p.add_argument("runs", nargs="+", help="run output directories (one per scenario)")
    p.add_argument("--table", default="employment_by_income_group.csv")
    p.add_argument("--out", help="output CSV (default: stdout)")
    p.set_defaults(func=cmd_compare)
    return parser


def apply_config(args: argparse.Namespace) -> argparse.Namespace:
    path = getattr(args, "config", None)
    if not path:
        return args
    try:
        raw = yaml.safe_load(Path(path).read_text("utf-8")) or {}
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise UsageError(f"malformed config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise UsageError(f"config {path} must be a mapping")
    unknown = set(raw) - CONFIG_KEYS
    if unknown:
        raise UsageError(f"config {path}: unknown keys {sorted(unknown)}")
    for key, value in raw.items():
        dest = CONFIG_TO_ARG.get(key, key)
        if dest == "scenario" and isinstance(value, str):
            value = [value]
        if hasattr(args, dest):
            setattr(args, dest, value)
    return args


def _world_dir(args) -> Path:
    if not args.world:
        raise UsageError("--world is required")
    return demo_world_path() if args.world == "demo" else Path(args.world)


def _solver_config(args) -> SolverConfig:
    kw = {}
    if args.tol is not None:
        kw["tolerance"] = float(args.tol)
    if args.max_iter is not None:
        kw["max_iterations"] = int(args.max_iter)
    if args.damping is not None:
        kw["damping"] = float(args.damping)
    try:
        return SolverConfig(**kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _groups(args) -> dict[str, str]:
    if args.groups:
        try:
            return load_income_groups(args.groups)
        except OSError as exc:
            raise UsageError(f"cannot read income groups: {exc}") from exc
    return default_income_groups()


def _timestamp(args) -> str | None:
    if args.no_timestamp:
        return None
    return datetime.now(timezone.utc).replace(microsecond=0).isoformat()


def _economy(args, ds) -> Economy:
    sigma = DEFAULT_SIGMA if args.sigma is None else args.sigma
    epsilon = DEFAULT_EPSILON if args.epsilon is None else args.epsilon
    return Economy.from_world(ds, sigma, epsilon)


def _scenario_path(ref: str):
    if ref.startswith("builtin:"):
        return builtin_scenario_path(ref.split(":", 1)[1])
    return Path(ref)


def cmd_validate(args) -> int:
    root = _world_dir(args)
    try:
        ds = load_world(root, validate=False)
    except WorldDataError as exc:
        violations = exc.violations
    else:
        violations = validate_world(ds)
    report = {
        "world": str(root),
        "valid": not violations,
        "violations": [v.to_dict() for v in violations],
    }
    print(json.dumps(report, indent=2))
    return EXIT_OK if not violations else EXIT_FAIL


def cmd_fixture(args) -> int:
    try:
        ds = generate_fixture(args.seed, args.countries, args.sectors, args.sparsity, args.openness)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = write_world(ds, args.out)
    logger.info("wrote %dx%d fixture to %s", args.countries, args.sectors, out)
    print(out)
    return EXIT_OK


def cmd_baseline(args) -> int:
    ds = load_world(_world_dir(args))
    economy = _economy(args, ds)
    groups = _groups(args)
    state = solve_baseline(economy, _solver_config(args))
    table = baseline_table(state, ds.satellite, groups)
    header = {
        "scenario": "baseline",
        "world_hash": world_hash(ds),
        "iterations": str(state.iterations),
        "converged": str(state.converged).lower(),
    }
    ts = _timestamp(args)
    if ts:
        header["generated"] = ts
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(table, out / "baseline.csv", header)
        print(out / "baseline.csv")
    else:
        sys.stdout.write(table.to_csv(index=False, float_format="%.3f"))
    return EXIT_OK if state.converged else EXIT_FAIL


def cmd_run(args) -> int:
    if not args.scenario:
        raise UsageError("run needs at least one --scenario")
    if not args.out:
        raise UsageError("run needs --out")
    ds = load_world(_world_dir(args))
    economy = _economy(args, ds)
    groups = _groups(args)
    cfg = _solver_config(args)
    k = 15 if args.top_k is None else int(args.top_k)
    if k < 1:
        raise UsageError("--top-k must be >= 1")
    duties = None
    if args.baseline_duties:
        if not Path(args.baseline_duties).is_file():
            raise UsageError(f"baseline duties file not found: {args.baseline_duties}")
        duties = load_baseline_duties(args.baseline_duties, ds.dims)

    scenarios = []
    for ref in args.scenario:
        path = _scenario_path(ref)
        if not path.is_file():
            raise UsageError(f"scenario file not found: {ref}")
        scenarios.append(parse_scenario(path, ds.dims, groups))
    names = [s.name for s in scenarios]
    if len(set(names)) != len(names):
        raise UsageError(f"duplicate scenario names: {names}")

    base = solve_baseline(economy, cfg)
    ts = _timestamp(args)
    extra = {"world_hash": world_hash(ds), "world": str(args.world)}

    def solve(scenario):
        return solve_scenario(economy, scenario, cfg, groups, duties)

    jobs = max(1, int(args.jobs or 1))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            states = list(pool.map(solve, scenarios))
    else:
        states = [solve(s) for s in scenarios]

    out = Path(args.out)
    failed = []
    for scenario, state in zip(scenarios, states):
        report = build_report(scenario.name, base, state, ds.satellite, groups, k, ts,
                              dict(extra, scenario_file=scenario.source))
        target = write_report(report, out / scenario.name)
        logger.info("%s: %s after %d iterations -> %s", scenario.name, state.status,
                    state.iterations, target)
        print(target)
        if not state.converged:
            failed.append(f"{scenario.name} ({state.status}: {state.message})")
    if failed:
        print("not converged: " + "; ".join(failed), file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_compare(args) -> int:
    for run in args.runs:
        if not (Path(run) / "run.json").is_file():
            raise UsageError(f"not a run directory (no run.json): {run}")
    try:
        table = compare_runs(args.runs, args.table)
    except CompareError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if args.out:
        write_csv(table, args.out)
        print(args.out)
    else:
        sys.stdout.write(format_table(table).to_csv(index=False, lineterminator="\n"))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = apply_config(args)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (WorldFileError, FileNotFoundError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except WorldDataError as exc:
        print(json.dumps({"valid": False, "violations": [v.to_dict() for v in exc.violations]}, indent=2))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (ScenarioError, MRIOError, SolverError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
