"""Command line entry point: ``tfrc-sched {run,solve,validate}``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .fileio import ConfigFileError, emit_csv, parse_config, read_instance
from .harness import Scenario, desk_config, figure_scenario, run_scenario
from .model import Algorithm, ConfigError, SimConfig, finalize
from .offline import expand_to_slots, solve_instance

EXIT_OK, EXIT_USAGE, EXIT_INVALID = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tfrc-sched", description="TFRC-aware downlink scheduling simulator")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    run = sub.add_parser("run", help="run a sweep scenario and write CSV")
    run.add_argument("--config", type=Path)
    run.add_argument("--scenario")
    run.add_argument("--runs", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--desk", action="store_true", help="reduced desk-scale preset")
    run.add_argument("--workers", type=int, help="process count (default: TFRC_SCHED_THREADS)")
    run.add_argument("--out", type=Path, required=True)

    solve = sub.add_parser("solve", help="solve one debug instance")
    solve.add_argument("--instance", type=Path, required=True)
    solve.add_argument("--algorithm", required=True)
    solve.add_argument("--lp", choices=("highs", "simplex"), default="highs")

    validate = sub.add_parser("validate", help="check a config file")
    validate.add_argument("--config", type=Path, required=True)
    return parser


def _load_config(path: Path | None) -> tuple[SimConfig, dict]:
    text = path.read_text() if path is not None else ""
    return parse_config(text)


def _scenario(cfg: SimConfig, overrides: dict, args) -> Scenario:
    scenario_id = args.scenario or overrides.get("scenario_id")
    if scenario_id is None:
        raise UsageError("no scenario given (--scenario or scenario_id=)")
    runs = args.runs or overrides.get("runs")
    points = overrides.get("sweep_points")
    if scenario_id.startswith("fig"):
        sc = figure_scenario(scenario_id, desk=args.desk, runs=runs, base=cfg, points=points)
    else:
        if "sweep_param" not in overrides or not points:
            raise UsageError("custom scenarios need sweep_param and sweep_points")
        sc = Scenario(
            id=scenario_id,
            param=overrides["sweep_param"],
            points=tuple(points),
            algorithms=tuple(overrides.get("algorithms", [cfg.algorithm])),
            base=desk_config(cfg) if args.desk else cfg,
            runs=runs or 200,
            desk_scale=args.desk,
        )
    if "algorithms" in overrides and scenario_id.startswith("fig"):
        sc.algorithms = tuple(overrides["algorithms"])
    if "tfrc_modes" in overrides:
        sc.tfrc_modes = tuple(overrides["tfrc_modes"])
    return sc


def cmd_run(args) -> int:
    cfg, overrides = _load_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    try:
        sc = _scenario(cfg, overrides, args)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    table = run_scenario(sc, seed=cfg.seed, workers=args.workers, progress=sys.stderr)
    emit_csv(table, args.out)
    return EXIT_OK


def cmd_solve(args) -> int:
    try:
        algorithm = Algorithm.parse(args.algorithm)
    except ValueError:
        raise UsageError(f"unknown algorithm {args.algorithm!r}") from None
    if not algorithm.is_offline:
        raise UsageError("solve takes an offline algorithm (DSFRB, DSF_NP, SF_OP)")
    instance = read_instance(args.instance.read_text())
    owner, res = solve_instance(instance, algorithm, method=args.lp)
    schedule = expand_to_slots(instance, owner)
    metrics = finalize(schedule, [r.copy() for r in instance.requests])
    owner2 = owner.reshape(instance.num_channels, instance.num_blocks)
    for c in range(instance.num_channels):
        for b in range(instance.num_blocks):
            if owner2[c, b] >= 0:
                rid = instance.requests[owner2[c, b]].id
                print(f"assign channel={c} block={b} request={rid}")
    for r in instance.requests:
        got = schedule.delivered.get(r.id, 0)
        state = "complete" if got >= r.size_bits else "incomplete"
        print(f"request {r.id} delivered={got} size={r.size_bits} {state}")
    print(f"lp_solves {res.lp_solves}")
    print(f"reward {metrics.total_reward:g}")
    print(f"complete_ratio {metrics.complete_ratio if metrics.complete_ratio is not None else 0:g}")
    return EXIT_OK


def cmd_validate(args) -> int:
    _load_config(args.config)
    print("ok")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required: run, solve or validate")
        handler = {"run": cmd_run, "solve": cmd_solve, "validate": cmd_validate}[args.command]
        return handler(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        for err in exc.errors:
            print(err, file=sys.stderr)
        return EXIT_INVALID
    except ConfigFileError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
