"""Schedule search: binary PSO plus load-balancing and single-site baselines.

Every collaborative solver ends in :func:`~uav_wteg.mapping.schedule_from_assignment`:
solvers choose a UAV per subtask and the placement on that UAV is completed to
the earliest feasible one (slot 1, slot 1 with a slot-2 replica, slot 2). Starting
a subtask later on the same UAV never lowers T(X), so this loses no optimum.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy.special import expit

from .errors import NoFeasibleSchedule
from .mapping import (
    DecisionMatrix,
    ScheduleEvaluation,
    SchedulingProblem,
    schedule_from_assignment,
)

logger = logging.getLogger(__name__)

Assignment = Tuple[int, ...]


class Strategy(Enum):
    BPSO = "bpso"
    WRR = "wrr"
    GREEDY_LB = "greedy-lb"
    PICK_KX = "pick-kx"
    CLOUD = "cloud"
    LOCAL = "local"

    @property
    def collaborative(self) -> bool:
        return self not in (Strategy.CLOUD, Strategy.LOCAL)


@dataclass(frozen=True)
class BpsoParams:
    """Swarm settings.

    Attributes:
        swarm_size: Number of particles M.
        iterations: Number of velocity/position updates I (0 keeps the initial swarm).
        inertia: Inertia weight mu.
        c1: Cognitive learning factor alpha_1.
        c2: Social learning factor alpha_2.
        v_max: Velocity clamp.
        seed: Master seed; each particle draws from its own spawned stream.
        workers: Threads used for fitness evaluation.
    """

    swarm_size: int = 100
    iterations: int = 100
    inertia: float = 1.5
    c1: float = 1.0
    c2: float = 1.0
    v_max: float = 6.0
    seed: int = 0
    workers: int = 1

    def __post_init__(self) -> None:
        if self.swarm_size < 1:
            raise ValueError(f"Swarm size must be >= 1, got {self.swarm_size}")
        if self.iterations < 0:
            raise ValueError(f"Iterations must be >= 0, got {self.iterations}")
        if not self.inertia > 0:
            raise ValueError(f"Inertia must be positive, got {self.inertia}")
        if self.c1 < 0 or self.c2 < 0:
            raise ValueError("Learning factors must be non-negative")
        if not self.v_max > 0:
            raise ValueError(f"v_max must be positive, got {self.v_max}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")


@dataclass(frozen=True)
class CloudParams:
    """Remote cloud reached over a backhaul link.

    Attributes:
        capacity: Cloud CPU capacity in cycles/s.
        backhaul: Backhaul rate in bit/s, used for both uplink and downlink.
    """

    capacity: float = 10e9
    backhaul: float = 2e6

    def __post_init__(self) -> None:
        if not self.capacity > 0 or not self.backhaul > 0:
            raise ValueError("Cloud capacity and backhaul rate must be positive")


@dataclass(frozen=True)
class SolverResult:
    """Outcome of one solver run.

    Attributes:
        strategy: Solver name.
        matrix: Best decision matrix (``None`` for cloud/local computing).
        latency: Best T(X) in seconds.
        evaluation: Evaluation of ``matrix``.
        trace: Global-best fitness after initialization and after each iteration.
        evaluations: Number of distinct schedules evaluated.
        breakdown: Named latency components (cloud and local computing).
    """

    strategy: str
    matrix: Optional[DecisionMatrix]
    latency: float
    evaluation: Optional[ScheduleEvaluation] = None
    trace: Tuple[float, ...] = ()
    evaluations: int = 0
    breakdown: Dict[str, float] = field(default_factory=dict)


def _row_columns(problem: SchedulingProblem, row: int) -> List[int]:
    """Columns a row's start replica may occupy."""
    starts = {p.start for p in problem.row_options(row)}
    return sorted(DecisionMatrix.column(d, k, problem.n) for d, k in starts)


class _Swarm:
    def __init__(self, problem: SchedulingProblem, params: BpsoParams) -> None:
        self.problem = problem
        self.params = params
        self.rows = [_row_columns(problem, r) for r in range(problem.l)]
        self.memo: Dict[Assignment, Tuple[DecisionMatrix, ScheduleEvaluation]] = {}
        self.executor = (
            ThreadPoolExecutor(max_workers=params.workers) if params.workers > 1 else None
        )

    def close(self) -> None:
        if self.executor is not None:
            self.executor.shutdown()

    def evaluate(
        self, assignments: Sequence[Assignment]
    ) -> List[Tuple[DecisionMatrix, ScheduleEvaluation]]:
        missing = sorted(set(assignments) - set(self.memo))
        if self.executor is None:
            results = [schedule_from_assignment(self.problem, a) for a in missing]
        else:
            results = list(
                self.executor.map(lambda a: schedule_from_assignment(self.problem, a), missing)
            )
        self.memo.update(zip(missing, results))
        return [self.memo[a] for a in assignments]

    def decode(
        self, s: NDArray[np.float64], bits: NDArray[np.bool_], rng: np.random.Generator
    ) -> Assignment:
        """Pick each row's UAV from the highest-probability set bit among its columns."""
        n = self.problem.n
        width = 2 * n
        uavs = []
        for r, cols in enumerate(self.rows):
            idx = np.asarray(cols) + r * width
            pool = idx[bits[idx]]
            if len(pool) == 0:
                pool = idx
            best = pool[s[pool] == s[pool].max()]
            chosen = int(best[0] if len(best) == 1 else rng.choice(best))
            uavs.append((chosen - r * width) % n + 1)
        return tuple(uavs)


def bpso_solve(problem: SchedulingProblem, params: Optional[BpsoParams] = None) -> SolverResult:
    """Minimize T(X) with a binary particle swarm.

    Velocities follow ``V <- mu V + a1 b1 (pbest - X) + a2 b2 (gbest - X)`` with fresh
    uniform ``b1``, ``b2`` per dimension, clamped to ``[-v_max, v_max]``. A bit is set
    when ``sigmoid(V) >= rand``. Each sampled row is repaired by keeping the UAV of
    its highest-probability set bit (ties drawn at random) and completing the
    schedule; the repaired matrix becomes the particle position.

    Raises:
        NoFeasibleSchedule: If no particle ever reaches a feasible schedule.
    """
    params = params or BpsoParams()
    m, dims = params.swarm_size, problem.l * 2 * problem.n
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(params.seed).spawn(m)]
    swarm = _Swarm(problem, params)
    try:
        velocity = np.stack([rng.uniform(-params.v_max, params.v_max, dims) for rng in rngs])
        initial = [
            tuple(
                opts[int(rng.integers(len(opts)))].uav
                for opts in (problem.row_options(r) for r in range(problem.l))
            )
            for rng in rngs
        ]
        results = swarm.evaluate(initial)
        position = np.stack([x.flat() for x, _ in results]).astype(float)
        fitness = np.array([e.total for _, e in results])

        pbest, pbest_fit = position.copy(), fitness.copy()
        g = int(np.argmin(pbest_fit))
        gbest, gbest_fit, gbest_result = pbest[g].copy(), float(pbest_fit[g]), results[g]
        trace = [gbest_fit]

        for it in range(params.iterations):
            assignments = []
            for i, rng in enumerate(rngs):
                b1 = rng.random(dims)
                b2 = rng.random(dims)
                velocity[i] = np.clip(
                    params.inertia * velocity[i]
                    + params.c1 * b1 * (pbest[i] - position[i])
                    + params.c2 * b2 * (gbest - position[i]),
                    -params.v_max,
                    params.v_max,
                )
                s = expit(velocity[i])
                bits = s >= rng.random(dims)
                assignments.append(swarm.decode(s, bits, rng))

            results = swarm.evaluate(assignments)
            for i, (x, e) in enumerate(results):
                position[i] = x.flat()
                if e.total < pbest_fit[i]:
                    pbest[i], pbest_fit[i] = position[i].copy(), e.total
                    if e.total < gbest_fit:
                        gbest, gbest_fit, gbest_result = position[i].copy(), e.total, (x, e)
            trace.append(gbest_fit)
            logger.debug("BPSO iteration %d: best %.6g s", it + 1, gbest_fit)
    finally:
        swarm.close()

    if math.isinf(gbest_fit):
        raise NoFeasibleSchedule(
            f"No feasible schedule among {len(swarm.memo)} evaluated assignments"
        )
    x, e = gbest_result
    logger.info(
        "BPSO best %.6g s after %d iterations (%d distinct schedules)",
        gbest_fit,
        params.iterations,
        len(swarm.memo),
    )
    return SolverResult(Strategy.BPSO.value, x, e.total, e, tuple(trace), len(swarm.memo))


def _finish(strategy: Strategy, problem: SchedulingProblem, uavs: Sequence[int]) -> SolverResult:
    x, e = schedule_from_assignment(problem, uavs)
    if not e.feasible:
        raise NoFeasibleSchedule(f"{strategy.value}: {e.reason}: {e.detail}")
    logger.info("%s latency %.6g s", strategy.value, e.total)
    return SolverResult(strategy.value, x, e.total, e, (e.total,), 1)


def wrr_assign(weights: Sequence[float], count: int) -> List[int]:
    """Smooth weighted round robin over UAVs 1..N; ties go to the lowest id."""
    w = np.asarray(weights, dtype=float)
    current = np.zeros_like(w)
    picks = []
    for _ in range(count):
        current += w
        d = int(np.argmax(current))
        current[d] -= w.sum()
        picks.append(d + 1)
    return picks


def wrr_solve(problem: SchedulingProblem) -> SolverResult:
    """Weighted round robin with weights ``rho_d / min(rho)``, ignoring links."""
    caps = problem.capacities
    picks = wrr_assign(caps / caps.min(), problem.l - 2)
    uavs = [problem.initiator, *picks, problem.terminal_receiver]
    return _finish(Strategy.WRR, problem, uavs)


def greedy_lb_solve(problem: SchedulingProblem) -> SolverResult:
    """Give each subtask to the UAV with the least assigned compute time."""
    dag, caps = problem.dag, problem.capacities
    load = np.zeros(problem.n)
    uavs = []
    for row, sid in enumerate(problem.order):
        anchor = problem.anchor(row)
        d = anchor if anchor is not None else int(np.argmin(load)) + 1
        load[d - 1] += dag[sid].work / caps[d - 1]
        uavs.append(d)
    return _finish(Strategy.GREEDY_LB, problem, uavs)


def pick_kx_solve(problem: SchedulingProblem, seed: int = 0) -> SolverResult:
    """Uniform random UAV per intermediate subtask."""
    rng = np.random.default_rng(seed)
    picks = rng.integers(1, problem.n + 1, size=problem.l - 2)
    uavs = [problem.initiator, *(int(d) for d in picks), problem.terminal_receiver]
    return _finish(Strategy.PICK_KX, problem, uavs)


def cloud_solve(problem: SchedulingProblem, cloud: Optional[CloudParams] = None) -> SolverResult:
    """Upload the source data, run every subtask in the cloud, download the result."""
    cloud = cloud or CloudParams()
    dag = problem.dag
    first, last = dag[problem.order[0]], dag[problem.order[-1]]
    assert first.data_bits is not None
    breakdown = {
        "uplink_s": first.data_bits / cloud.backhaul,
        "compute_s": sum(s.work for s in dag.subtasks) / cloud.capacity,
        "downlink_s": last.output_bits / cloud.backhaul,
    }
    total = sum(breakdown.values())
    logger.info("cloud latency %.6g s", total)
    return SolverResult(Strategy.CLOUD.value, None, total, breakdown=breakdown)


def local_solve(problem: SchedulingProblem) -> SolverResult:
    """Run every subtask in sequence on the initiator."""
    rho = float(problem.capacities[problem.initiator - 1])
    compute = sum(s.work for s in problem.dag.subtasks) / rho
    logger.info("local latency %.6g s", compute)
    return SolverResult(Strategy.LOCAL.value, None, compute, breakdown={"compute_s": compute})


def solve(
    strategy: Strategy,
    problem: SchedulingProblem,
    *,
    params: Optional[BpsoParams] = None,
    cloud: Optional[CloudParams] = None,
    seed: int = 0,
) -> SolverResult:
    """Run one strategy. ``seed`` drives Pick-KX; BPSO takes its seed from ``params``."""
    if strategy is Strategy.BPSO:
        return bpso_solve(problem, params)
    if strategy is Strategy.WRR:
        return wrr_solve(problem)
    if strategy is Strategy.GREEDY_LB:
        return greedy_lb_solve(problem)
    if strategy is Strategy.PICK_KX:
        return pick_kx_solve(problem, seed)
    if strategy is Strategy.CLOUD:
        return cloud_solve(problem, cloud)
    return local_solve(problem)
