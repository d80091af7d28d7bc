"""Command-line interface.

Subcommands:

* ``predict``: navigation error report on the survey track plus the predicted
  slot topologies of the fleet.
* ``schedule``: one solve of the scenario task; prints T(X) and writes a JSON report.
* ``experiment <kind>``: one of the experiment runners (or ``all``).
* ``validate``: load and check a scenario.

Exit codes: 0 on success, 1 for configuration and model errors, 2 when no
feasible schedule exists.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from .channel import write_topology_csv
from .errors import (
    ConfigError,
    DagError,
    InfeasibleSchedule,
    MappingError,
    NavigationError,
    NoFeasibleSchedule,
    TopologyError,
    TrajectoryError,
)
from .experiments import EXPERIMENT_KINDS, run_experiment
from .mapping import decode_mapping, map_edges
from .reporting import FORMATS, scenario_hash, write_json, write_result
from .scenario import Scenario, load_scenario
from .schedulers import Strategy, solve

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(name)s %(levelname)s %(message)s"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uav-wteg",
        description="Latency-aware DAG task scheduling over a predicted UAV network.",
    )
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="More logging (repeatable)"
    )

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--scenario", default="baseline", help="Scenario file or shipped name (default: baseline)"
    )
    common.add_argument("--seed", type=int, default=None, help="Override the scenario seed")
    common.add_argument("--out", default="results", help="Output directory (default: results)")
    common.add_argument("--format", choices=FORMATS, default="csv", help="Result file format")
    common.add_argument("--workers", type=int, default=1, help="Threads for independent work")
    common.add_argument(
        "--with-timing", action="store_true", help="Add a runtime column to result rows"
    )

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("predict", parents=[common], help="SINS error report and predicted topology")
    schedule = sub.add_parser("schedule", parents=[common], help="Solve the scenario task once")
    schedule.add_argument(
        "--strategy",
        choices=[s.value for s in Strategy],
        default=None,
        help="Solver (default: the scenario's)",
    )
    experiment = sub.add_parser("experiment", parents=[common], help="Run an experiment")
    experiment.add_argument("kind", choices=[*EXPERIMENT_KINDS, "all"])
    sub.add_parser("validate", parents=[common], help="Check a scenario")
    return parser


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING - 10 * min(verbosity, 2)
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr)


def _load(args: argparse.Namespace) -> Scenario:
    scenario = load_scenario(args.scenario, seed=args.seed)
    if args.workers > 1:
        scenario = scenario.with_bpso(workers=args.workers)
    return scenario


def cmd_validate(args: argparse.Namespace) -> int:
    scenario = _load(args)
    tracks = scenario.trajectories
    print(
        f"{scenario.name}: OK ({len(tracks)} UAVs, task {scenario.task.dag.name}, "
        f"hash {scenario_hash(scenario.document)})"
    )
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    scenario = _load(args)
    result = run_experiment("sins-error", scenario, with_timing=args.with_timing)
    path = write_result(result, args.out, args.format)
    topology_path = Path(args.out) / "topology.csv"
    write_topology_csv(scenario.topologies(scenario.predicted_positions()), topology_path)
    print(path)
    print(topology_path)
    return 0


def cmd_schedule(args: argparse.Namespace) -> int:
    scenario = _load(args)
    strategy = Strategy(args.strategy) if args.strategy else scenario.strategy
    problem = scenario.problem(scenario.wteg(scenario.predicted_positions()))
    result = solve(
        strategy, problem, params=scenario.bpso, cloud=scenario.cloud, seed=scenario.seed
    )
    report: Dict[str, Any] = {
        "scenario": scenario.name,
        "scenario_hash": scenario_hash(scenario.document),
        "seed": scenario.seed,
        "strategy": result.strategy,
        "total_s": result.latency,
        "evaluations": result.evaluations,
        "trace": list(result.trace),
        "breakdown": result.breakdown,
    }
    if result.evaluation is not None:
        report["schedule"] = result.evaluation.to_report()
    if result.matrix is not None:
        report["decision_matrix"] = result.matrix.bits.tolist()
        routes = map_edges(decode_mapping(result.matrix, problem), problem)
        report["edges"] = [
            {"from": a, "to": b, "delay_s": r.delay, "path": [list(n) for n in r.path]}
            for (a, b), r in routes.items()
        ]
    path = write_json(report, Path(args.out) / "schedule.json")
    print(f"T(X) = {result.latency!r} s ({result.strategy})")
    print(path)
    return 0


def cmd_experiment(args: argparse.Namespace) -> int:
    scenario = _load(args)
    kinds: List[str] = list(EXPERIMENT_KINDS) if args.kind == "all" else [args.kind]
    for kind in kinds:
        result = run_experiment(kind, scenario, workers=args.workers, with_timing=args.with_timing)
        print(write_result(result, args.out, args.format))
    return 0


COMMANDS = {
    "validate": cmd_validate,
    "predict": cmd_predict,
    "schedule": cmd_schedule,
    "experiment": cmd_experiment,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose)
    try:
        return COMMANDS[args.command](args)
    except (
        ConfigError,
        DagError,
        NavigationError,
        TrajectoryError,
        TopologyError,
        MappingError,
    ) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (InfeasibleSchedule, NoFeasibleSchedule) as e:
        print(f"infeasible: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
