"""Decision matrices and the end-to-end latency model.

A schedule maps every subtask to one UAV in slot 1 or 2, optionally with a replica
on the same UAV in slot 2 (``chi = 1``) when its work crosses the slot boundary.
It is encoded as an ``l x 2N`` binary matrix whose rows follow the DAG's
topological order and whose column ``(k - 1) * N + d - 1`` stands for UAV ``d`` in
slot ``k``.

Evaluation is one forward sweep in topological order. A subtask starts once all
predecessor data has arrived, its UAV's CPU is free and its first slot has begun;
it finishes ``T_comp = D * delta * xi / rho`` later. Data moves over time-consistent
WTEG routes (:meth:`WtegGraph.timed_route`). A schedule is infeasible when a route
does not exist, a slot-1-only subtask runs past the slot boundary, or anything
finishes after the second slot.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import (
    EnumerationBoundExceeded,
    HorizonExceeded,
    InfeasibleSchedule,
    MappingError,
    NotValidated,
    ReplicaNotSameUav,
    RowSumInvalid,
    RuleViolation,
    TopologyError,
    UnreachablePair,
)
from .task_dag import TaskDag, topological_order
from .wteg import Node, Route, WtegGraph

logger = logging.getLogger(__name__)

# Slack used when comparing finish times with slot boundaries.
TIME_TOLERANCE = 1e-12

MAX_ENUMERATION_SUBTASKS = 5
MAX_ENUMERATION_UAVS = 4


@dataclass(frozen=True, order=True)
class Placement:
    """Where one subtask runs: UAV ``uav`` from slot ``slot``, with ``chi`` replicas.

    Raises:
        MappingError: On an invalid UAV, slot or replica count.
        HorizonExceeded: If the replica would fall beyond slot 2.
    """

    uav: int
    slot: int
    chi: int = 0

    def __post_init__(self) -> None:
        if self.uav < 1:
            raise MappingError(f"UAV ids start at 1, got {self.uav}")
        if self.slot not in (1, 2):
            raise MappingError(f"Slot must be 1 or 2, got {self.slot}")
        if self.chi not in (0, 1):
            raise MappingError(f"Replica count must be 0 or 1, got {self.chi}")
        if self.slot + self.chi > 2:
            raise HorizonExceeded(f"Replica of slot {self.slot} would fall beyond slot 2")

    def __str__(self) -> str:
        slots = "slot 1-2" if self.chi else f"slot {self.slot}"
        return f"u{self.uav} {slots}"

    @property
    def start(self) -> Node:
        return (self.uav, self.slot)

    @property
    def end(self) -> Node:
        return (self.uav, self.slot + self.chi)

    @property
    def nodes(self) -> Tuple[Node, ...]:
        return tuple((self.uav, k) for k in range(self.slot, self.slot + self.chi + 1))


@dataclass(frozen=True, eq=False)
class SchedulingProblem:
    """Everything needed to evaluate schedules of one task on one WTEG.

    Attributes:
        dag: Validated DAG with propagated data sizes.
        wteg: Two-step graph of the predicted topology.
        capacities: CPU capacity of each UAV in cycles/s.
        initiator: UAV holding the input data (start subtask anchor).
        receiver: UAV receiving the result (terminal subtask anchor); defaults
            to the last UAV.
    """

    dag: TaskDag
    wteg: WtegGraph
    capacities: NDArray[np.float64]
    initiator: int = 1
    receiver: Optional[int] = None
    order: Tuple[str, ...] = field(init=False)

    def __post_init__(self) -> None:
        if not self.dag.validated or not self.dag.propagated:
            raise NotValidated("Scheduling needs a validated DAG with propagated data sizes")
        caps = np.asarray(self.capacities, dtype=float)
        if caps.shape != (self.wteg.n,):
            raise TopologyError(f"Need {self.wteg.n} capacities, got shape {caps.shape}")
        if np.any(caps <= 0):
            raise ValueError(f"Capacities must be positive: {caps}")
        receiver = self.wteg.n if self.receiver is None else self.receiver
        for name, uav in (("initiator", self.initiator), ("receiver", receiver)):
            if not 1 <= uav <= self.wteg.n:
                raise TopologyError(f"{name} u{uav} is not in the fleet of {self.wteg.n}")
        object.__setattr__(self, "capacities", caps)
        object.__setattr__(self, "receiver", receiver)
        object.__setattr__(self, "order", tuple(topological_order(self.dag)))

    @property
    def l(self) -> int:  # noqa: E743
        return len(self.order)

    @property
    def n(self) -> int:
        return self.wteg.n

    @property
    def terminal_receiver(self) -> int:
        assert self.receiver is not None
        return self.receiver

    def with_dag(self, dag: TaskDag) -> SchedulingProblem:
        return replace(self, dag=dag)

    def with_wteg(self, wteg: WtegGraph) -> SchedulingProblem:
        return replace(self, wteg=wteg)

    def anchor(self, row: int) -> Optional[int]:
        """The UAV a row is pinned to, or ``None`` for intermediate subtasks."""
        if row == 0:
            return self.initiator
        if row == self.l - 1:
            return self.terminal_receiver
        return None

    def row_options(self, row: int) -> List[Placement]:
        """Every rule-valid placement of the subtask in ``row``."""
        if row == 0:
            return [Placement(self.initiator, 1, 0), Placement(self.initiator, 1, 1)]
        uavs = [self.terminal_receiver] if row == self.l - 1 else range(1, self.n + 1)
        return [p for d in uavs for p in uav_options(d)]


def uav_options(uav: int) -> List[Placement]:
    """The three placements on one UAV, in fallback order."""
    return [Placement(uav, 1, 0), Placement(uav, 1, 1), Placement(uav, 2, 0)]


class DecisionMatrix:
    """Binary ``l x 2N`` schedule encoding.

    Args:
        bits: 0/1 matrix of shape ``(l, 2N)``.

    Raises:
        MappingError: If the matrix is not 2-D with an even number of columns or
            holds values other than 0 and 1.
    """

    def __init__(self, bits: ArrayLike) -> None:
        arr = np.asarray(bits)
        if arr.ndim != 2 or arr.shape[1] % 2 or arr.shape[1] == 0:
            raise MappingError(f"Decision matrix must be l x 2N, got shape {arr.shape}")
        if not np.all((arr == 0) | (arr == 1)):
            raise MappingError("Decision matrix entries must be 0 or 1")
        self.bits = arr.astype(np.int8)
        self.bits.setflags(write=False)

    def __repr__(self) -> str:
        return f"DecisionMatrix({self.bits.tolist()})"

    def __eq__(self, other: object) -> bool:
        return isinstance(other, DecisionMatrix) and np.array_equal(self.bits, other.bits)

    def __hash__(self) -> int:
        return hash((self.bits.shape, self.bits.tobytes()))

    @property
    def l(self) -> int:  # noqa: E743
        return int(self.bits.shape[0])

    @property
    def n(self) -> int:
        return int(self.bits.shape[1] // 2)

    @staticmethod
    def column(uav: int, slot: int, n: int) -> int:
        return (slot - 1) * n + uav - 1

    @classmethod
    def from_placements(cls, placements: Sequence[Placement], n: int) -> DecisionMatrix:
        bits = np.zeros((len(placements), 2 * n), dtype=np.int8)
        for row, p in enumerate(placements):
            if p.uav > n:
                raise MappingError(f"u{p.uav} is not in the fleet of {n}")
            for uav, slot in p.nodes:
                bits[row, cls.column(uav, slot, n)] = 1
        return cls(bits)

    @classmethod
    def from_flat(cls, flat: ArrayLike, l: int, n: int) -> DecisionMatrix:  # noqa: E741
        return cls(np.asarray(flat).reshape(l, 2 * n))

    def flat(self) -> NDArray[np.int8]:
        """Row-major bit vector, as used for particle positions."""
        return self.bits.reshape(-1).copy()

    def row_placement(self, row: int) -> Placement:
        """Decode one row.

        Raises:
            RowSumInvalid: If the row does not hold one or two set bits.
            ReplicaNotSameUav: If two bits are not the same UAV in slots 1 and 2.
        """
        cols = np.flatnonzero(self.bits[row])
        n = self.n
        if len(cols) not in (1, 2):
            raise RowSumInvalid(f"Row {row} has {len(cols)} set entries, expected 1 or 2")
        first = int(cols[0])
        if len(cols) == 1:
            return Placement(first % n + 1, first // n + 1, 0)
        second = int(cols[1])
        if first >= n or second != first + n:
            raise ReplicaNotSameUav(
                f"Row {row} maps to columns {first} and {second}, which are not one UAV "
                "in consecutive slots"
            )
        return Placement(first + 1, 1, 1)

    def placements(self) -> List[Placement]:
        return [self.row_placement(r) for r in range(self.l)]

    def chi(self, row: int) -> int:
        return int(self.bits[row].sum()) - 1


def decode_mapping(x: DecisionMatrix, problem: SchedulingProblem) -> Dict[str, Placement]:
    """Turn a decision matrix into per-subtask placements, enforcing the mapping rules.

    Raises:
        MappingError: If the matrix shape does not match the problem.
        RowSumInvalid: If a row has the wrong number of entries.
        ReplicaNotSameUav: If replicas sit on different UAVs.
        RuleViolation: If the start or terminal subtask is not on its anchor UAV,
            or the start subtask does not begin in slot 1.
    """
    if x.bits.shape != (problem.l, 2 * problem.n):
        raise MappingError(
            f"Decision matrix shape {x.bits.shape} does not match "
            f"{problem.l} subtasks x {2 * problem.n} nodes"
        )
    placements = x.placements()
    first, last = placements[0], placements[-1]
    if first.uav != problem.initiator or first.slot != 1:
        raise RuleViolation(
            f"Start subtask must begin on initiator u{problem.initiator} in slot 1, "
            f"got u{first.uav} slot {first.slot}"
        )
    if last.uav != problem.terminal_receiver:
        raise RuleViolation(
            f"Terminal subtask must run on receiver u{problem.terminal_receiver}, "
            f"got u{last.uav}"
        )
    return dict(zip(problem.order, placements))


@dataclass(frozen=True)
class SubtaskTiming:
    """Timing of one subtask in an evaluated schedule."""

    subtask: str
    placement: Placement
    t_accu: float
    t_comp: float
    finish: float
    routes: Tuple[Tuple[str, Route], ...] = ()


@dataclass(frozen=True)
class ScheduleEvaluation:
    """Result of evaluating one schedule.

    Attributes:
        timings: Per-subtask timings in evaluation order (partial when infeasible).
        consumed: Per-UAV time into slot 1 at which cached data became ready
            (``inf`` where nothing was cached).
        total: Completion time of the terminal subtask, ``inf`` when infeasible.
        reason: ``None`` when feasible, otherwise ``"unreachable"``,
            ``"replica-required"`` or ``"horizon-overrun"``.
        detail: Human-readable description of the failure.
    """

    timings: Tuple[SubtaskTiming, ...]
    consumed: Tuple[float, ...]
    total: float
    reason: Optional[str] = None
    detail: str = ""

    @property
    def feasible(self) -> bool:
        return self.reason is None

    def timing(self, subtask: str) -> SubtaskTiming:
        for t in self.timings:
            if t.subtask == subtask:
                return t
        raise KeyError(subtask)

    def edge_routes(self) -> Dict[Tuple[str, str], Route]:
        """Route of every evaluated DAG edge, keyed by ``(predecessor, successor)``."""
        return {(pred, t.subtask): route for t in self.timings for pred, route in t.routes}

    def raise_if_infeasible(self) -> None:
        if self.reason == "unreachable":
            raise UnreachablePair(self.detail)
        if self.reason is not None:
            raise InfeasibleSchedule(self.reason, self.detail)

    def to_report(self) -> Dict[str, Any]:
        """Plain structure for JSON output (infinite values become ``None``)."""

        def num(v: float) -> Optional[float]:
            return float(v) if math.isfinite(v) else None

        return {
            "total_s": num(self.total),
            "feasible": self.feasible,
            "reason": self.reason,
            "detail": self.detail,
            "consumed_s": [num(c) for c in self.consumed],
            "subtasks": [
                {
                    "id": t.subtask,
                    "uav": t.placement.uav,
                    "slots": [k for _, k in t.placement.nodes],
                    "t_accu_s": t.t_accu,
                    "t_comp_s": t.t_comp,
                    "finish_s": t.finish,
                    "paths": {
                        pred: [list(node) for node in route.path] for pred, route in t.routes
                    },
                }
                for t in self.timings
            ],
        }


class _Sweep:
    """Incremental evaluation state: subtasks are placed one at a time in order."""

    def __init__(self, problem: SchedulingProblem) -> None:
        self.problem = problem
        self.cpu_free = np.zeros(problem.n)
        self.consumed = np.full(problem.n, np.inf)
        self.finish: Dict[str, float] = {}
        self.placed: Dict[str, Placement] = {}
        self.timings: List[SubtaskTiming] = []

    def copy(self) -> _Sweep:
        other = _Sweep.__new__(_Sweep)
        other.problem = self.problem
        other.cpu_free = self.cpu_free.copy()
        other.consumed = self.consumed.copy()
        other.finish = dict(self.finish)
        other.placed = dict(self.placed)
        other.timings = list(self.timings)
        return other

    def place(self, sid: str, p: Placement) -> Optional[Tuple[str, str]]:
        """Place ``sid``; return ``(reason, detail)`` if that makes the schedule infeasible."""
        problem = self.problem
        dag, wteg = problem.dag, problem.wteg
        dt = wteg.slot_duration
        arrival = (p.slot - 1) * dt
        routes = []
        for pred in dag.predecessors(sid):
            src = self.placed[pred].end
            route = wteg.timed_route(src, p.start, dag[pred].output_bits, self.finish[pred])
            if not route.reachable:
                return ("unreachable", f"{pred}->{sid}: no route from {src} to {p.start}")
            routes.append((pred, route))
            arrival = max(arrival, route.arrival)

        t_accu = max(arrival, float(self.cpu_free[p.uav - 1]))
        t_comp = dag[sid].work / float(problem.capacities[p.uav - 1])
        finish = t_accu + t_comp
        if p.slot == 1 and p.chi == 0 and finish > dt + TIME_TOLERANCE:
            return ("replica-required", f"{sid} on u{p.uav} finishes at {finish:.6g}s in slot 2")
        if finish > wteg.horizon + TIME_TOLERANCE:
            return ("horizon-overrun", f"{sid} on u{p.uav} finishes at {finish:.6g}s")

        for _, route in routes:
            if route.cache_ready is not None:
                relay = route.cache_uav
                assert relay is not None
                prev = self.consumed[relay - 1]
                self.consumed[relay - 1] = (
                    route.cache_ready if math.isinf(prev) else max(prev, route.cache_ready)
                )
        self.cpu_free[p.uav - 1] = finish
        self.finish[sid] = finish
        self.placed[sid] = p
        self.timings.append(SubtaskTiming(sid, p, t_accu, t_comp, finish, tuple(routes)))
        return None

    def result(self, failure: Optional[Tuple[str, str]] = None) -> ScheduleEvaluation:
        consumed = tuple(float(c) for c in self.consumed)
        if failure is not None:
            return ScheduleEvaluation(tuple(self.timings), consumed, math.inf, *failure)
        total = self.finish[self.problem.order[-1]]
        return ScheduleEvaluation(tuple(self.timings), consumed, total)


def compute_latency(
    x: DecisionMatrix, problem: SchedulingProblem, strict: bool = False
) -> ScheduleEvaluation:
    """Evaluate the end-to-end latency T(X) of a schedule.

    Args:
        x: Decision matrix.
        problem: Task, graph and capacities.
        strict: Raise instead of returning an infeasible evaluation.

    Raises:
        MappingError: If ``x`` breaks the mapping rules (see :func:`decode_mapping`).
        InfeasibleSchedule: Only with ``strict``, when the schedule cannot run.
    """
    placements = decode_mapping(x, problem)
    sweep = _Sweep(problem)
    failure = None
    for sid in problem.order:
        failure = sweep.place(sid, placements[sid])
        if failure is not None:
            break
    evaluation = sweep.result(failure)
    if strict:
        evaluation.raise_if_infeasible()
    return evaluation


def map_edges(
    b: Dict[str, Placement], problem: SchedulingProblem
) -> Dict[Tuple[str, str], Route]:
    """WTEG route of every DAG edge for a decoded mapping.

    Edges are routed exactly as :func:`compute_latency` routes them: from the end
    replica of the predecessor, once its output is ready, to the start replica of
    the successor, weighted by the predecessor's output size, with cache waits
    timed against the slot boundary.

    Raises:
        UnreachablePair: If some edge has no route.
        InfeasibleSchedule: If the mapping fails for another reason before every
            edge is routed.
    """
    sweep = _Sweep(problem)
    for sid in problem.order:
        failure = sweep.place(sid, b[sid])
        if failure is not None:
            sweep.result(failure).raise_if_infeasible()
    return sweep.result().edge_routes()


def complete_schedule(
    problem: SchedulingProblem, preferred: Sequence[Placement]
) -> Tuple[DecisionMatrix, ScheduleEvaluation]:
    """Build a rule-valid schedule close to per-row preferred placements.

    Rows are placed in order. Each row first tries its preferred placement (moved
    to the anchor UAV for the start and terminal subtasks), then the other
    placements on the same UAV: slot 1, slot 1 with a slot-2 replica, slot 2. The
    first one keeping the schedule feasible is taken; if none does, the preferred
    placement is kept and the evaluation reports the reason of the last candidate
    tried, with the failure of every candidate in its detail.
    """
    if len(preferred) != problem.l:
        raise MappingError(f"Need {problem.l} preferred placements, got {len(preferred)}")
    sweep = _Sweep(problem)
    chosen: List[Placement] = []
    failure = None
    for row, sid in enumerate(problem.order):
        wanted = _anchored(problem, row, preferred[row])
        if failure is not None:
            chosen.append(wanted)
            continue
        valid = problem.row_options(row)
        candidates = [wanted] + [
            p for p in uav_options(wanted.uav) if p != wanted and p in valid
        ]
        tried: List[Tuple[Placement, Tuple[str, str]]] = []
        for candidate in candidates:
            trial = sweep.copy()
            outcome = trial.place(sid, candidate)
            if outcome is None:
                sweep = trial
                chosen.append(candidate)
                break
            tried.append((candidate, outcome))
        else:
            reason = tried[-1][1][0]
            failure = (reason, "; ".join(f"{c}: {detail}" for c, (_, detail) in tried))
            chosen.append(wanted)
    return DecisionMatrix.from_placements(chosen, problem.n), sweep.result(failure)


def _anchored(problem: SchedulingProblem, row: int, p: Placement) -> Placement:
    anchor = problem.anchor(row)
    if anchor is None or p.uav == anchor:
        if row == 0 and p.slot != 1:
            return Placement(p.uav, 1, 0)
        return p
    if row == 0:
        return Placement(anchor, 1, p.chi if p.slot == 1 else 0)
    return Placement(anchor, p.slot, p.chi)


def schedule_from_assignment(
    problem: SchedulingProblem, uavs: Sequence[int]
) -> Tuple[DecisionMatrix, ScheduleEvaluation]:
    """Schedule each subtask (in topological order) on the given UAV.

    Entries for the start and terminal subtasks are replaced by their anchors.
    """
    return complete_schedule(problem, [Placement(int(d), 1, 0) for d in uavs])


def enumeration_size(l: int, n: int) -> int:  # noqa: E741
    """Number of rule-valid decision matrices for ``l`` subtasks on ``n`` UAVs."""
    return 2 * 3 * (3 * n) ** (l - 2)


def enumerate_feasible(
    problem: SchedulingProblem,
    max_subtasks: int = MAX_ENUMERATION_SUBTASKS,
    max_uavs: int = MAX_ENUMERATION_UAVS,
) -> List[Tuple[DecisionMatrix, float]]:
    """Every rule-valid decision matrix with its latency (``inf`` if infeasible).

    Raises:
        EnumerationBoundExceeded: If the instance exceeds the size bounds.
    """
    if problem.l > max_subtasks or problem.n > max_uavs:
        raise EnumerationBoundExceeded(
            f"{problem.l} subtasks on {problem.n} UAVs exceeds the enumeration bound "
            f"({max_subtasks} subtasks, {max_uavs} UAVs)"
        )
    options = [problem.row_options(row) for row in range(problem.l)]
    results = []
    for combo in itertools.product(*options):
        x = DecisionMatrix.from_placements(combo, problem.n)
        results.append((x, compute_latency(x, problem).total))
    logger.debug("Enumerated %d schedules", len(results))
    return results


def optimum(results: Sequence[Tuple[DecisionMatrix, float]]) -> Tuple[DecisionMatrix, float]:
    """The lowest-latency entry of an enumeration (first one on ties)."""
    return min(results, key=lambda r: r[1])
