"""Tests for decision matrices and the latency model."""

import itertools
import math

import networkx as nx
import numpy as np
import pytest

from tests.conftest import full_mesh, make_dag, make_wteg, no_links
from uav_wteg.errors import (
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
from uav_wteg.mapping import (
    DecisionMatrix,
    Placement,
    SchedulingProblem,
    complete_schedule,
    compute_latency,
    decode_mapping,
    enumerate_feasible,
    enumeration_size,
    map_edges,
    optimum,
    schedule_from_assignment,
)
from uav_wteg.task_dag import Subtask, TaskDag
from uav_wteg.wteg import shortest_path

INF = math.inf
P = Placement


def chain_problem(chain2, slot1=None, slot2=None, dt=4.0, caps=(1e9, 1e9), receiver=2):
    wteg = make_wteg(full_mesh(2) if slot1 is None else slot1, slot2, slot_duration=dt)
    return SchedulingProblem(chain2, wteg, np.array(caps), 1, receiver)


def latency(problem, placements, strict=False):
    x = DecisionMatrix.from_placements(placements, problem.n)
    return compute_latency(x, problem, strict)


def slot_per_bit(m, a, b):
    """Cheapest per-bit cost from a to b over every simple path of one slot."""
    if a == b:
        return 0.0
    g = nx.DiGraph()
    n = m.shape[0]
    g.add_nodes_from(range(n))
    g.add_edges_from((i, j) for i in range(n) for j in range(n) if i != j and m[i, j] < INF)
    costs = [
        sum(m[u, v] for u, v in zip(p, p[1:])) for p in nx.all_simple_paths(g, a - 1, b - 1)
    ]
    return min(costs, default=INF)


def reference_arrival(slot1, slot2, dt, src, dst, payload, ready):
    (a, ks), (b, kd) = src, dst
    depart = max(ready, (ks - 1) * dt)
    if ks > kd or (ks == 1 and depart > dt):
        return INF
    if ks == kd:
        arrival = depart + slot_per_bit(slot1 if ks == 1 else slot2, a, b) * payload
        return INF if ks == 1 and arrival > dt else arrival
    arrivals = [
        dt + slot_per_bit(slot2, r, b) * payload
        for r in range(1, slot1.shape[0] + 1)
        if depart + slot_per_bit(slot1, a, r) * payload <= dt
    ]
    return min(arrivals, default=INF)


def reference_latency(problem, placements, slot1, slot2):
    """Latency worked out from per-slot path enumeration instead of the library's routes."""
    dt = problem.wteg.slot_duration
    dag = problem.dag
    cpu = [0.0] * problem.n
    placed, finish = {}, {}
    for sid, p in zip(problem.order, placements):
        arrival = (p.slot - 1) * dt
        for pred in dag.predecessors(sid):
            q = placed[pred]
            arrival = max(
                arrival,
                reference_arrival(
                    slot1,
                    slot2,
                    dt,
                    (q.uav, q.slot + q.chi),
                    (p.uav, p.slot),
                    dag[pred].output_bits,
                    finish[pred],
                ),
            )
        if math.isinf(arrival):
            return INF
        done = max(arrival, cpu[p.uav - 1]) + dag[sid].work / problem.capacities[p.uav - 1]
        if (p.slot == 1 and p.chi == 0 and done > dt) or done > 2 * dt:
            return INF
        cpu[p.uav - 1] = done
        placed[sid], finish[sid] = p, done
    return finish[problem.order[-1]]


def random_slot(rng, n):
    m = rng.uniform(1e-8, 1e-7, (n, n))
    m[rng.random((n, n)) < 0.3] = INF
    np.fill_diagonal(m, 0.0)
    return m


class TestPlacement:
    """Test placement values."""

    def test_invalid(self):
        """Test rejected UAVs, slots and replica counts."""
        with pytest.raises(MappingError):
            P(0, 1)
        with pytest.raises(MappingError):
            P(1, 3)
        with pytest.raises(MappingError):
            P(1, 1, 2)
        with pytest.raises(HorizonExceeded):
            P(1, 2, 1)

    def test_nodes(self):
        """Test start, end and occupied nodes."""
        p = P(2, 1, 1)
        assert (p.start, p.end) == ((2, 1), (2, 2))
        assert p.nodes == ((2, 1), (2, 2))
        assert P(3, 2).nodes == ((3, 2),)


class TestDecisionMatrix:
    """Test the binary schedule encoding."""

    def test_invalid_matrices(self):
        """Test shape and entry validation."""
        with pytest.raises(MappingError, match="shape"):
            DecisionMatrix([1, 0])
        with pytest.raises(MappingError, match="shape"):
            DecisionMatrix([[1, 0, 0]])
        with pytest.raises(MappingError, match="0 or 1"):
            DecisionMatrix([[2, 0]])

    @pytest.mark.parametrize(
        "row,expected",
        [([1, 0, 0, 0], P(1, 1)), ([0, 0, 0, 1], P(2, 2)), ([1, 0, 1, 0], P(1, 1, 1))],
    )
    def test_row_placement(self, row, expected):
        """Test decoding of valid rows on two UAVs."""
        assert DecisionMatrix([row]).row_placement(0) == expected

    def test_invalid_rows(self):
        """Test row sums and replicas on different UAVs."""
        with pytest.raises(RowSumInvalid):
            DecisionMatrix([[0, 0, 0, 0]]).row_placement(0)
        with pytest.raises(RowSumInvalid):
            DecisionMatrix([[1, 1, 1, 0]]).row_placement(0)
        with pytest.raises(ReplicaNotSameUav):
            DecisionMatrix([[1, 0, 0, 1]]).row_placement(0)
        with pytest.raises(ReplicaNotSameUav):
            DecisionMatrix([[1, 1, 0, 0]]).row_placement(0)

    def test_placements_and_flat(self):
        """Test building from placements and the flat particle encoding."""
        placements = [P(1, 1, 1), P(3, 2), P(2, 1)]
        x = DecisionMatrix.from_placements(placements, 3)
        assert x.bits.tolist() == [[1, 0, 0, 1, 0, 0], [0, 0, 0, 0, 0, 1], [0, 1, 0, 0, 0, 0]]
        assert x.placements() == placements
        assert [x.chi(r) for r in range(3)] == [1, 0, 0]
        assert DecisionMatrix.column(2, 2, 3) == 4
        again = DecisionMatrix.from_flat(x.flat(), 3, 3)
        assert again == x and hash(again) == hash(x)
        assert len({x, again}) == 1
        with pytest.raises(MappingError, match="fleet"):
            DecisionMatrix.from_placements([P(4, 1)], 3)


class TestSchedulingProblem:
    """Test problem validation and row options."""

    def test_invalid(self, chain2):
        """Test rejected DAGs, capacities and anchors."""
        wteg = make_wteg(full_mesh(2))
        raw = TaskDag([Subtask("a"), Subtask("b")], [("a", "b")])
        with pytest.raises(NotValidated):
            SchedulingProblem(raw, wteg, np.array([1e9, 1e9]))
        with pytest.raises(TopologyError, match="capacities"):
            SchedulingProblem(chain2, wteg, np.array([1e9]))
        with pytest.raises(ValueError, match="positive"):
            SchedulingProblem(chain2, wteg, np.array([1e9, 0.0]))
        with pytest.raises(TopologyError, match="initiator"):
            SchedulingProblem(chain2, wteg, np.array([1e9, 1e9]), initiator=3)

    def test_defaults(self, chain2):
        """Test that the receiver defaults to the last UAV."""
        problem = SchedulingProblem(chain2, make_wteg(full_mesh(3)), np.ones(3))
        assert problem.terminal_receiver == 3
        assert problem.order == ("w1", "w2")
        assert (problem.l, problem.n) == (2, 3)

    def test_row_options(self, mesh3_problem):
        """Test the rule-valid placements of each row."""
        assert mesh3_problem.row_options(0) == [P(1, 1, 0), P(1, 1, 1)]
        assert mesh3_problem.row_options(3) == [P(3, 1, 0), P(3, 1, 1), P(3, 2, 0)]
        assert len(mesh3_problem.row_options(1)) == 9
        assert mesh3_problem.anchor(1) is None

    def test_decode_mapping_rules(self, chain2):
        """Test anchoring of the start and terminal subtasks."""
        problem = chain_problem(chain2)
        b = decode_mapping(DecisionMatrix.from_placements([P(1, 1), P(2, 2)], 2), problem)
        assert b == {"w1": P(1, 1), "w2": P(2, 2)}
        for bad in ([P(2, 1), P(2, 1)], [P(1, 2), P(2, 2)], [P(1, 1), P(1, 1)]):
            with pytest.raises(RuleViolation):
                decode_mapping(DecisionMatrix.from_placements(bad, 2), problem)
        with pytest.raises(MappingError, match="does not match"):
            decode_mapping(DecisionMatrix.from_placements([P(1, 1)] * 3, 2), problem)


class TestComputeLatency:
    """Test end-to-end latency of hand-checked schedules."""

    def test_two_uav_chain(self, chain2):
        """Test compute, transfer and compute on two UAVs."""
        evaluation = latency(chain_problem(chain2), [P(1, 1), P(2, 1)])
        assert evaluation.feasible
        assert evaluation.total == pytest.approx(0.35)
        w2 = evaluation.timing("w2")
        assert w2.t_accu == pytest.approx(0.198)
        assert w2.t_comp == pytest.approx(0.152)
        assert w2.routes[0][1].path == ((1, 1), (2, 1))
        assert all(math.isinf(c) for c in evaluation.consumed)
        with pytest.raises(KeyError):
            evaluation.timing("w9")

    def test_same_uav_chain(self, chain2):
        """Test that a local hand-over costs nothing."""
        evaluation = latency(chain_problem(chain2, receiver=1), [P(1, 1), P(1, 1)])
        assert evaluation.total == pytest.approx(0.342)

    def test_forced_cache(self, chain2):
        """Test a slot-2 subtask whose input waits in the cache."""
        problem = chain_problem(chain2, receiver=1)
        evaluation = latency(problem, [P(1, 1), P(1, 2)])
        assert evaluation.total == pytest.approx(4.152)
        route = evaluation.timing("w2").routes[0][1]
        assert route.delay == pytest.approx(3.81)
        assert route.cache_uav == 1
        assert evaluation.consumed[0] == pytest.approx(0.19)
        assert math.isinf(evaluation.consumed[1])
        cached = problem.wteg.with_consumed(evaluation.consumed)
        delay, _ = shortest_path(cached, (1, 1), (1, 2), chain2["w1"].output_bits)
        assert delay == pytest.approx(3.81)

    def test_slot2_start_waits_for_boundary(self, chain2):
        """Test a replica followed by a slot-2 successor."""
        evaluation = latency(chain_problem(chain2, dt=0.3), [P(1, 1, 1), P(2, 2)])
        assert evaluation.total == pytest.approx(0.46)

    @pytest.mark.parametrize(
        "dt,placements,reason",
        [
            (0.1, [P(1, 1), P(2, 1)], "replica-required"),
            (0.1, [P(1, 1, 1), P(2, 2)], "horizon-overrun"),
            (0.3, [P(1, 1, 1), P(2, 1)], "unreachable"),
        ],
    )
    def test_infeasible(self, chain2, dt, placements, reason):
        """Test infeasibility reasons."""
        evaluation = latency(chain_problem(chain2, dt=dt), placements)
        assert not evaluation.feasible
        assert evaluation.reason == reason
        assert evaluation.total == INF
        assert evaluation.to_report()["total_s"] is None

    def test_strict(self, chain2):
        """Test that strict evaluation raises on infeasible schedules."""
        with pytest.raises(InfeasibleSchedule) as info:
            latency(chain_problem(chain2, dt=0.1), [P(1, 1), P(2, 1)], strict=True)
        assert info.value.reason == "replica-required"
        with pytest.raises(UnreachablePair):
            latency(chain_problem(chain2, no_links(2)), [P(1, 1), P(2, 1)], strict=True)

    def test_report(self, chain2):
        """Test the plain report structure."""
        report = latency(chain_problem(chain2), [P(1, 1), P(2, 1)]).to_report()
        assert report["feasible"] and report["reason"] is None
        assert report["total_s"] == pytest.approx(0.35)
        assert report["consumed_s"] == [None, None]
        assert [s["id"] for s in report["subtasks"]] == ["w1", "w2"]
        assert report["subtasks"][1]["paths"] == {"w1": [[1, 1], [2, 1]]}

    def test_matches_reference_model(self):
        """Test every schedule of random small instances against a reference evaluator."""
        rng = np.random.default_rng(11)
        shapes = [
            [("w1", "w2"), ("w2", "w3")],
            [("w1", "a"), ("w1", "b"), ("a", "w4"), ("b", "w4")],
            [("w1", "w2"), ("w2", "w3"), ("w3", "w4")],
        ]
        checked = 0
        for _ in range(8):
            n = int(rng.integers(2, 4))
            slot1, slot2 = random_slot(rng, n), random_slot(rng, n)
            dag = make_dag(shapes[int(rng.integers(len(shapes)))])
            dt = float(rng.uniform(0.2, 1.2))
            wteg = make_wteg(slot1, slot2, slot_duration=dt)
            problem = SchedulingProblem(dag, wteg, rng.uniform(0.5e9, 2e9, n), 1, n)
            options = [problem.row_options(r) for r in range(problem.l)]
            for combo in itertools.product(*options):
                got = latency(problem, combo).total
                expected = reference_latency(problem, combo, slot1, slot2)
                if math.isinf(expected):
                    assert math.isinf(got)
                else:
                    assert got == pytest.approx(expected, rel=1e-9)
                checked += 1
        assert checked > 100


class TestMapEdges:
    """Test per-edge routes of a decoded mapping."""

    def test_same_slot(self, chain2):
        """Test the route of the single edge inside slot 1."""
        problem = chain_problem(chain2)
        route = map_edges({"w1": P(1, 1), "w2": P(2, 1)}, problem)[("w1", "w2")]
        assert route.delay == pytest.approx(0.008)
        assert route.path == ((1, 1), (2, 1))

    def test_cache_wait_is_timed(self, chain2):
        """Test that data sent in slot 1 waits on the receiver only until the boundary."""
        problem = chain_problem(chain2)
        route = map_edges({"w1": P(1, 1), "w2": P(2, 2)}, problem)[("w1", "w2")]
        assert route.path == ((1, 1), (2, 1), (2, 2))
        assert route.delay == pytest.approx(3.81)
        assert route.cache_ready == pytest.approx(0.198)

    def test_matches_evaluation(self, mesh3_problem):
        """Test that every edge route equals the one the latency model used."""
        checked = 0
        for x, total in enumerate_feasible(mesh3_problem):
            if math.isinf(total):
                continue
            routes = map_edges(decode_mapping(x, mesh3_problem), mesh3_problem)
            assert routes == compute_latency(x, mesh3_problem).edge_routes()
            assert set(routes) == set(mesh3_problem.dag.edges)
            checked += 1
        assert checked > 10

    def test_unreachable(self, chain2):
        """Test that a missing path raises."""
        problem = chain_problem(chain2, no_links(2))
        with pytest.raises(UnreachablePair):
            map_edges({"w1": P(1, 1), "w2": P(2, 2)}, problem)

    def test_other_failures(self, chain2):
        """Test that a mapping failing before its edges are routed raises."""
        problem = chain_problem(chain2, dt=0.09)
        with pytest.raises(InfeasibleSchedule, match="replica-required"):
            map_edges({"w1": P(1, 1), "w2": P(2, 1)}, problem)


class TestCompletion:
    """Test schedule completion and repair."""

    def test_repair_adds_replica_and_moves_slot(self, chain2):
        """Test that overrunning rows fall back to other placements on the same UAV."""
        problem = chain_problem(chain2, dt=0.09, caps=(2e9, 2e9))
        x, evaluation = complete_schedule(problem, [P(1, 1), P(2, 1)])
        assert x.placements() == [P(1, 1, 1), P(2, 2)]
        assert evaluation.total == pytest.approx(0.179)

    def test_preferred_kept_when_feasible(self, chain2):
        """Test that feasible preferences are taken as they are."""
        x, evaluation = complete_schedule(chain_problem(chain2), [P(1, 1), P(2, 1)])
        assert x.placements() == [P(1, 1), P(2, 1)]
        assert evaluation.total == pytest.approx(0.35)

    def test_failure_is_reported(self, chain2):
        """Test that an unrepairable schedule keeps its failure."""
        problem = chain_problem(chain2, no_links(2))
        x, evaluation = complete_schedule(problem, [P(1, 1), P(2, 1)])
        assert not evaluation.feasible
        assert x.placements()[1].uav == 2
        with pytest.raises(MappingError):
            complete_schedule(problem, [P(1, 1)])

    def test_failure_names_every_candidate(self, chain2):
        """Test that the reason is the last candidate's and the detail lists them all."""
        problem = chain_problem(chain2, dt=0.2, caps=(1e9, 1e8))
        _, evaluation = complete_schedule(problem, [P(1, 1), P(2, 1)])
        assert evaluation.reason == "horizon-overrun"
        tried = evaluation.detail.split("; ")
        assert [t.split(": ")[0] for t in tried] == ["u2 slot 1", "u2 slot 1-2", "u2 slot 2"]
        assert "in slot 2" in tried[0]

    def test_assignment_is_anchored(self, chain2):
        """Test that start and terminal entries move to their anchors."""
        x, evaluation = schedule_from_assignment(chain_problem(chain2), [2, 1])
        assert x.placements() == [P(1, 1), P(2, 1)]
        assert evaluation.total == pytest.approx(0.35)


class TestEnumeration:
    """Test exhaustive enumeration."""

    def test_size(self, mesh3_problem):
        """Test the number of enumerated schedules."""
        assert enumeration_size(4, 3) == 486
        results = enumerate_feasible(mesh3_problem)
        assert len(results) == 486
        assert len({x for x, _ in results}) == 486
        best_x, best = optimum(results)
        assert math.isfinite(best)
        assert best == min(t for _, t in results)
        assert compute_latency(best_x, mesh3_problem).total == best

    def test_bound(self, mesh3_problem):
        """Test that large instances are refused."""
        with pytest.raises(EnumerationBoundExceeded):
            enumerate_feasible(mesh3_problem, max_subtasks=3)
        with pytest.raises(EnumerationBoundExceeded):
            enumerate_feasible(mesh3_problem, max_uavs=2)
