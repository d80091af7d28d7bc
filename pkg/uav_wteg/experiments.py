"""Experiment runners.

Each runner takes a :class:`~uav_wteg.scenario.Scenario` and returns an
:class:`ExperimentResult`: tidy rows, one per sweep point (and strategy), each
carrying the seed and scenario hash that regenerate it. Rows are sorted by their
key columns, so results do not depend on the order work finished in.

Scheduling always happens on the SINS-predicted two-step graph unless a runner
states otherwise.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
import pandas as pd

from .errors import NoFeasibleSchedule
from .mapping import DecisionMatrix, ScheduleEvaluation, SchedulingProblem, compute_latency
from .reporting import scenario_hash
from .scenario import Scenario
from .schedulers import SolverResult, Strategy, solve
from .sins import dead_reckon, simulate_imu
from .task_dag import MEGABIT, TaskDag, load_dag
from .trajectory import survey_track
from .wteg import Node, WtegGraph

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

EXPERIMENT_KINDS = ("datasize", "complexity", "comparison", "success-rate", "sins-error")

COMPARISON_STRATEGIES = (Strategy.BPSO, Strategy.GREEDY_LB, Strategy.WRR, Strategy.PICK_KX)

# Seconds between rows of the navigation error report.
SINS_REPORT_INTERVAL = 1.0


@dataclass
class ExperimentResult:
    """Rows produced by one runner.

    Attributes:
        kind: Experiment name.
        keys: Columns that identify a row; rows are sorted by them.
        rows: One mapping per row.
    """

    kind: str
    keys: Tuple[str, ...]
    rows: List[Dict[str, Any]] = field(default_factory=list)

    def sorted_rows(self) -> List[Dict[str, Any]]:
        return sorted(self.rows, key=lambda r: tuple(r[k] for k in self.keys))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.sorted_rows())

    def select(self, **match: Any) -> List[Dict[str, Any]]:
        """Rows whose columns equal all of ``match``."""
        return [r for r in self.sorted_rows() if all(r.get(k) == v for k, v in match.items())]


@dataclass(frozen=True)
class ExecutionOutcome:
    """What happened when a planned schedule ran on the realized topology.

    Attributes:
        success: Whether all planned transfers found their links and the task
            finished within the two slots.
        failed_hop: First planned hop whose link was missing, as ``(slot, a, b)``.
        realized_links: Slot-2 links that existed, as sorted UAV pairs.
    """

    success: bool
    failed_hop: Optional[Tuple[int, int, int]] = None
    realized_links: Tuple[Tuple[int, int], ...] = ()


def _parallel(fn: Callable[[T], R], items: Sequence[T], workers: int) -> List[R]:
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _stamp(scenario: Scenario, row: Dict[str, Any], started: Optional[float]) -> Dict[str, Any]:
    row["seed"] = scenario.seed
    row["scenario_hash"] = scenario_hash(scenario.document)
    if started is not None:
        row["runtime_s"] = time.perf_counter() - started
    return row


def _dag(scenario: Scenario, ref: str) -> TaskDag:
    """The scenario task for its own reference (with its overrides), else a loaded DAG."""
    if ref == scenario.task.ref:
        return scenario.task.dag
    return load_dag(ref, scenario.base_dir)


def _dags(scenario: Scenario) -> List[Tuple[str, TaskDag]]:
    return [(ref, _dag(scenario, ref)) for ref in scenario.experiments.dags]


def _planning_graph(scenario: Scenario) -> WtegGraph:
    return scenario.wteg(scenario.predicted_positions())


def _run(
    strategy: Strategy, scenario: Scenario, problem: SchedulingProblem, seed: int
) -> Tuple[Optional[SolverResult], str]:
    try:
        result = solve(
            strategy,
            problem,
            params=replace(scenario.bpso, seed=seed),
            cloud=scenario.cloud,
            seed=seed,
        )
    except NoFeasibleSchedule as e:
        logger.warning("%s found no feasible schedule: %s", strategy.value, e)
        return None, "infeasible"
    return result, "ok"


def critical_cache_delay(evaluation: ScheduleEvaluation, slot_duration: float) -> float:
    """Total time data waited in a cache along the chain that fixed the finish time."""
    if not evaluation.feasible or not evaluation.timings:
        return 0.0
    by_id = {t.subtask: t for t in evaluation.timings}
    current = evaluation.timings[-1]
    waited = 0.0
    while current.routes:
        binding = max(current.routes, key=lambda pr: pr[1].arrival)
        pred, route = binding
        if route.arrival < current.t_accu:
            break
        if route.cache_ready is not None:
            waited += slot_duration - route.cache_ready
        current = by_id[pred]
    return waited


def run_latency_vs_datasize(
    scenario: Scenario, workers: int = 1, with_timing: bool = False
) -> ExperimentResult:
    """Cloud, local and collaborative latency over the source data sweep."""
    wteg = _planning_graph(scenario)
    architectures = (
        ("cloud", Strategy.CLOUD),
        ("local", Strategy.LOCAL),
        ("collaborative", Strategy.BPSO),
    )
    points = [
        (ref, dag, mb, label, strategy)
        for ref, dag in _dags(scenario)
        for mb in scenario.experiments.datasize_mb
        for label, strategy in architectures
    ]

    def point(item: Tuple[str, TaskDag, float, str, Strategy]) -> Dict[str, Any]:
        ref, dag, mb, label, strategy = item
        started = time.perf_counter() if with_timing else None
        problem = scenario.problem(wteg, dag, mb * MEGABIT)
        result, status = _run(strategy, scenario, problem, scenario.seed)
        row = {
            "dag": ref,
            "source_mb": mb,
            "architecture": label,
            "latency_s": result.latency if result else math.nan,
            "status": status,
        }
        logger.info("datasize %s %.3g Mb %s: %s", ref, mb, label, row["latency_s"])
        return _stamp(scenario, row, started)

    rows = _parallel(point, points, workers)
    return ExperimentResult("datasize", ("dag", "source_mb", "architecture"), rows)


def run_latency_vs_complexity(
    scenario: Scenario, workers: int = 1, with_timing: bool = False
) -> ExperimentResult:
    """Latency surface over complexity multiplier and source data size.

    Each row also reports the cache wait on the critical chain and whether any
    subtask runs past the first slot.
    """
    wteg = _planning_graph(scenario)
    ref = scenario.experiments.dags[0]
    base = _dag(scenario, ref)
    points = [
        (mb, m)
        for mb in scenario.experiments.complexity_datasize_mb
        for m in scenario.experiments.complexity_multipliers
    ]

    def point(item: Tuple[float, float]) -> Dict[str, Any]:
        mb, m = item
        started = time.perf_counter() if with_timing else None
        problem = scenario.problem(wteg, base.with_complexity(m), mb * MEGABIT)
        result, status = _run(scenario.strategy, scenario, problem, scenario.seed)
        evaluation = result.evaluation if result else None
        row = {
            "dag": ref,
            "source_mb": mb,
            "multiplier": m,
            "latency_s": result.latency if result else math.nan,
            "cache_delay_s": (
                critical_cache_delay(evaluation, scenario.slot_duration) if evaluation else 0.0
            ),
            "crosses_slot": bool(
                evaluation
                and any(t.finish > scenario.slot_duration for t in evaluation.timings)
            ),
            "status": status,
        }
        logger.info("complexity %.3g Mb x%.2g: %s", mb, m, row["latency_s"])
        return _stamp(scenario, row, started)

    rows = _parallel(point, points, workers)
    return ExperimentResult("complexity", ("dag", "source_mb", "multiplier"), rows)


def run_algorithm_comparison(
    scenario: Scenario, workers: int = 1, with_timing: bool = False
) -> ExperimentResult:
    """BPSO against WRR, Greedy-LB and Pick-KX over several seeds per data size.

    Rows hold mean and standard deviation over the feasible runs and BPSO's
    relative improvement over each strategy in percent.
    """
    wteg = _planning_graph(scenario)
    n_seeds = scenario.experiments.comparison_seeds
    seeds = [scenario.seed + i for i in range(n_seeds)]
    rows = []
    for ref, dag in _dags(scenario):
        for mb in scenario.experiments.comparison_datasize_mb:
            started = time.perf_counter() if with_timing else None
            problem = scenario.problem(wteg, dag, mb * MEGABIT)
            samples: Dict[Strategy, List[float]] = {}
            for strategy in COMPARISON_STRATEGIES:
                runs = _parallel(
                    lambda s, st=strategy: _run(st, scenario, problem, s)[0], seeds, workers
                )
                samples[strategy] = [r.latency for r in runs if r is not None]
            bpso = samples[Strategy.BPSO]
            bpso_mean = float(np.mean(bpso)) if bpso else math.nan
            for strategy, values in samples.items():
                mean = float(np.mean(values)) if values else math.nan
                improvement = (
                    100.0 * (mean - bpso_mean) / mean
                    if values and bpso and mean > 0
                    else math.nan
                )
                row = {
                    "dag": ref,
                    "source_mb": mb,
                    "strategy": strategy.value,
                    "mean_s": mean,
                    "std_s": float(np.std(values)) if values else math.nan,
                    "min_s": float(np.min(values)) if values else math.nan,
                    "max_s": float(np.max(values)) if values else math.nan,
                    "runs": len(seeds),
                    "failures": len(seeds) - len(values),
                    "bpso_improvement_pct": improvement,
                }
                rows.append(_stamp(scenario, row, started))
            logger.info("comparison %s %.3g Mb: BPSO mean %.6g s", ref, mb, bpso_mean)
    return ExperimentResult("comparison", ("dag", "source_mb", "strategy"), rows)


def planned_hops(evaluation: ScheduleEvaluation) -> List[Tuple[int, int, int]]:
    """Every inter-UAV hop of a schedule's routes as ``(slot, a, b)``, deduplicated."""
    hops = set()
    for route in evaluation.edge_routes().values():
        path: Sequence[Node] = route.path
        for (a, ka), (b, kb) in zip(path, path[1:]):
            if ka == kb and a != b:
                hops.add((ka, a, b))
    return sorted(hops)


def slot2_links(evaluation: ScheduleEvaluation) -> List[Tuple[int, int]]:
    """Distinct undirected slot-2 links a schedule relies on."""
    return sorted({(min(a, b), max(a, b)) for k, a, b in planned_hops(evaluation) if k == 2})


def execute_on(
    x: DecisionMatrix, plan: ScheduleEvaluation, realized: SchedulingProblem
) -> ExecutionOutcome:
    """Run a planned schedule on the realized two-step graph."""
    wteg = realized.wteg
    links = tuple(
        (i + 1, j + 1)
        for i in range(wteg.n)
        for j in range(i + 1, wteg.n)
        if math.isfinite(wteg.slot2[i, j])
    )
    for k, a, b in planned_hops(plan):
        delays = wteg.slot1 if k == 1 else wteg.slot2
        if not math.isfinite(delays[a - 1, b - 1]):
            return ExecutionOutcome(False, (k, a, b), links)
    return ExecutionOutcome(compute_latency(x, realized).feasible, None, links)


def execute_bernoulli(
    plan: ScheduleEvaluation, candidates: Sequence[Tuple[int, int]], rng: np.random.Generator
) -> ExecutionOutcome:
    """Realize each candidate slot-2 link with probability 1/2 and run the plan.

    The plan is assumed to keep its timing whenever its links exist.
    """
    kept = rng.random(len(candidates)) < 0.5
    realized = tuple(link for link, keep in zip(candidates, kept) if keep)
    present = set(realized)
    for k, a, b in planned_hops(plan):
        if k == 2 and (min(a, b), max(a, b)) not in present:
            return ExecutionOutcome(False, (k, a, b), realized)
    return ExecutionOutcome(True, None, realized)


def _solve_plan(
    scenario: Scenario, problem: SchedulingProblem
) -> Optional[Tuple[DecisionMatrix, ScheduleEvaluation]]:
    result, _ = _run(scenario.strategy, scenario, problem, scenario.seed)
    if result is None or result.matrix is None or result.evaluation is None:
        return None
    return result.matrix, result.evaluation


def trial_noise_seed(seed: int, trial: int) -> int:
    return int(np.random.SeedSequence([seed, trial]).generate_state(1)[0])


def run_success_rate(
    scenario: Scenario, workers: int = 1, with_timing: bool = False
) -> ExperimentResult:
    """Share of task requests that reach the receiver, with and without prediction.

    With prediction, every request plans on the graph built from its own
    dead-reckoned positions and runs on the true graph. Without prediction, the
    plan assumes the slot-1 topology persists; in the ``physical`` model it runs
    on the true graph, in the ``bernoulli`` model every slot-1 link survives into
    slot 2 with probability 1/2.
    """
    cfg = scenario.experiments
    ref = cfg.dags[0]
    dag = _dag(scenario, ref)
    truth = scenario.truth_positions()
    truth_graph = scenario.wteg(truth)
    static = scenario.wteg(np.stack([truth[0], truth[0]]))
    candidates = [
        (i + 1, j + 1)
        for i in range(static.n)
        for j in range(i + 1, static.n)
        if math.isfinite(static.slot2[i, j])
    ]
    trials = list(range(cfg.success_trials))
    predictions = _parallel(
        lambda t: scenario.wteg(scenario.predicted_positions(trial_noise_seed(scenario.seed, t))),
        trials,
        workers,
    )

    rows = []
    for index, mb in enumerate(cfg.success_datasize_mb):
        started = time.perf_counter() if with_timing else None
        bits = mb * MEGABIT
        realized = scenario.problem(truth_graph, dag, bits)

        plans: Dict[bytes, Optional[Tuple[DecisionMatrix, ScheduleEvaluation]]] = {}
        with_sins = 0
        for graph in predictions:
            key = np.isfinite(graph.slot1).tobytes() + np.isfinite(graph.slot2).tobytes()
            if key not in plans:
                plans[key] = _solve_plan(scenario, scenario.problem(graph, dag, bits))
            plan = plans[key]
            if plan is not None and execute_on(plan[0], plan[1], realized).success:
                with_sins += 1

        blind = _solve_plan(scenario, scenario.problem(static, dag, bits))
        links: List[Tuple[int, int]] = []
        if blind is None:
            without_sins = 0
        elif cfg.success_model == "bernoulli":
            rng = np.random.default_rng(np.random.SeedSequence([scenario.seed, index]))
            links = slot2_links(blind[1])
            without_sins = sum(
                execute_bernoulli(blind[1], candidates, rng).success for _ in trials
            )
        else:
            links = slot2_links(blind[1])
            outcome = execute_on(blind[0], blind[1], realized)
            without_sins = len(trials) if outcome.success else 0

        n = len(trials)
        for label, successes, planned in (
            ("with-sins", with_sins, any(p is not None for p in plans.values())),
            ("without-sins", without_sins, blind is not None),
        ):
            row = {
                "dag": ref,
                "source_mb": mb,
                "model": cfg.success_model,
                "strategy": label,
                "trials": n,
                "successes": successes,
                "success_rate_pct": 100.0 * successes / n,
                "slot2_links": len(links) if label == "without-sins" else math.nan,
                "expected_rate_pct": (
                    100.0 * 0.5 ** len(links)
                    if label == "without-sins" and cfg.success_model == "bernoulli" and planned
                    else math.nan
                ),
                "status": "ok" if planned else "no-schedule",
            }
            rows.append(_stamp(scenario, row, started))
        logger.info(
            "success rate %.3g Mb: with SINS %d/%d, without %d/%d",
            mb,
            with_sins,
            n,
            without_sins,
            n,
        )
    return ExperimentResult("success-rate", ("dag", "source_mb", "strategy"), rows)


def run_sins_error_report(
    scenario: Scenario, workers: int = 1, with_timing: bool = False
) -> ExperimentResult:
    """Attitude, velocity and position error of free inertial navigation on the survey track."""
    cfg = scenario.experiments
    started = time.perf_counter() if with_timing else None
    truth = survey_track(scenario.earth)
    trace = simulate_imu(truth, scenario.imu_errors, cfg.sins_sample_dt_s, cfg.sins_duration_s)
    states = dead_reckon(truth.state(0.0), trace, scenario.earth)
    stride = max(1, int(round(SINS_REPORT_INTERVAL / (2.0 * cfg.sins_sample_dt_s))))
    rows = []
    for state in states[::stride]:
        t = state.timestamp
        true_state = truth.state(t)
        enu = scenario.earth.local_displacement(true_state.position, state.position)
        est, ref = state.euler, true_state.euler
        row = {
            "t_s": round(t, 9),
            "east_err_m": float(enu[0]),
            "north_err_m": float(enu[1]),
            "up_err_m": float(enu[2]),
            "position_err_m": float(np.linalg.norm(enu)),
            "velocity_err_mps": float(np.linalg.norm(state.velocity - true_state.velocity)),
            "pitch_err_rad": est.pitch - ref.pitch,
            "roll_err_rad": est.roll - ref.roll,
            "yaw_err_rad": math.remainder(est.yaw - ref.yaw, 2.0 * math.pi),
        }
        rows.append(_stamp(scenario, row, started))
    logger.info(
        "SINS report: %d rows, final position error %.3g m", len(rows), rows[-1]["position_err_m"]
    )
    return ExperimentResult("sins-error", ("t_s",), rows)


RUNNERS: Dict[str, Callable[..., ExperimentResult]] = {
    "datasize": run_latency_vs_datasize,
    "complexity": run_latency_vs_complexity,
    "comparison": run_algorithm_comparison,
    "success-rate": run_success_rate,
    "sins-error": run_sins_error_report,
}


def run_experiment(
    kind: str, scenario: Scenario, workers: int = 1, with_timing: bool = False
) -> ExperimentResult:
    try:
        runner = RUNNERS[kind]
    except KeyError:
        raise ValueError(f"Unknown experiment {kind!r}; choose from {list(RUNNERS)}") from None
    return runner(scenario, workers=workers, with_timing=with_timing)


def run_all(
    scenario: Scenario, workers: int = 1, kinds: Iterable[str] = EXPERIMENT_KINDS
) -> Dict[str, ExperimentResult]:
    """Run several experiments on one scenario."""
    return {kind: run_experiment(kind, scenario, workers) for kind in kinds}

