"""Shared fixtures: small hand-built problems and compact scenarios."""

from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
import pytest
import yaml

from uav_wteg.mapping import SchedulingProblem
from uav_wteg.scenario import Scenario, scenario_from_mapping
from uav_wteg.task_dag import Subtask, TaskDag, validate
from uav_wteg.wteg import WtegGraph

INF = np.inf


def make_dag(
    edges: Sequence[Tuple[str, str]],
    source_bits: float = 1e6,
    scaling: float = 0.8,
    complexity: float = 237.5,
) -> TaskDag:
    """Validated DAG with propagated sizes; subtasks are declared in first-seen order."""
    ids: List[str] = []
    for u, v in edges:
        for sid in (u, v):
            if sid not in ids:
                ids.append(sid)
    subtasks = [Subtask(sid, scaling=scaling, complexity=complexity) for sid in ids]
    return validate(TaskDag(subtasks, edges, "test")).with_source(source_bits)


def make_wteg(slot1: Any, slot2: Any = None, slot_duration: float = 4.0) -> WtegGraph:
    s1 = np.asarray(slot1, dtype=float)
    s2 = s1 if slot2 is None else np.asarray(slot2, dtype=float)
    return WtegGraph(slot_duration, s1, s2, np.zeros(s1.shape[0]))


def full_mesh(n: int, per_bit: float = 1e-8) -> np.ndarray:
    m = np.full((n, n), per_bit)
    np.fill_diagonal(m, 0.0)
    return m


def no_links(n: int) -> np.ndarray:
    m = np.full((n, n), INF)
    np.fill_diagonal(m, 0.0)
    return m


@pytest.fixture
def chain2() -> TaskDag:
    """Two-subtask chain, 1 Mb source, default complexity and scaling."""
    return make_dag([("w1", "w2")])


@pytest.fixture
def diamond() -> TaskDag:
    return make_dag([("w1", "a"), ("w1", "b"), ("a", "w4"), ("b", "w4")])


@pytest.fixture
def mesh3_problem(diamond: TaskDag) -> SchedulingProblem:
    """Diamond task on three fully linked UAVs."""
    return SchedulingProblem(
        diamond, make_wteg(full_mesh(3), slot_duration=1.0), np.array([1e9, 1.2e9, 0.8e9]), 1, 3
    )


def write_yaml(path: Path, data: Dict[str, Any]) -> Path:
    path.write_text(yaml.safe_dump(data, sort_keys=False), encoding="utf-8")
    return path


def _uav(east: float, north: float = 0.0) -> Dict[str, Any]:
    return {"offset_m": [east, north]}


STATIONARY = [{"kind": "cruise", "duration_s": 10.0, "speed_mps": 0.0, "heading_deg": 0.0}]


def quad_document(dag_file: str) -> Dict[str, Any]:
    """Four UAVs on a 2 km square running the diamond task."""
    return {
        "name": "quad",
        "seed": 3,
        "slot_duration_s": 4.0,
        "fleet": {
            "segments": STATIONARY,
            "uavs": [_uav(0.0), _uav(2000.0), _uav(0.0, 2000.0), _uav(2000.0, 2000.0)],
            "capacities_mhz": [800, 1200, 1000, 600],
            "initiator": 1,
            "receiver": 4,
        },
        "imu_errors": {"model": "calibrated"},
        "task": {"dag": dag_file, "source_mb": 5.0},
        "solver": {"name": "bpso", "swarm_size": 30, "iterations": 20},
        "experiments": {
            "datasize_mb": [0, 1, 3, 5],
            "comparison_datasize_mb": [1, 5],
            "comparison_seeds": 20,
            "complexity_multipliers": [0.2, 1.0, 1.8],
            "complexity_datasize_mb": [1],
        },
    }


def pair_document(dag_file: str) -> Dict[str, Any]:
    """Two stationary UAVs 5 km apart with a 0.2 s slot and a two-subtask chain.

    Sending 4 Mb between them takes about 0.0635 s.
    """
    return {
        "name": "pair",
        "seed": 5,
        "slot_duration_s": 0.2,
        "fleet": {
            "segments": STATIONARY,
            "uavs": [_uav(0.0), _uav(5000.0)],
            "capacities_mhz": [1000, 1000],
            "initiator": 1,
            "receiver": 2,
            "sample_dt_s": 0.05,
        },
        "imu_errors": {"model": "calibrated"},
        "task": {"dag": dag_file, "source_mb": 5.0, "complexity_cycles_per_bit": 20.0},
        "solver": {"name": "greedy-lb", "swarm_size": 10, "iterations": 5},
        "experiments": {
            "complexity_multipliers": [1.4, 1.6, 1.8],
            "complexity_datasize_mb": [5],
            "success_datasize_mb": [1, 5],
            "success_trials": 200,
            "success_model": "bernoulli",
            "sins_duration_s": 20.0,
        },
    }


@pytest.fixture
def dag_files(tmp_path: Path) -> Dict[str, Path]:
    chain = write_yaml(
        tmp_path / "chain.yaml",
        {"name": "chain", "subtasks": ["w1", "w2"], "edges": [["w1", "w2"]]},
    )
    diamond = write_yaml(
        tmp_path / "diamond.yaml",
        {
            "name": "diamond",
            "subtasks": ["w1", "a", "b", "w4"],
            "edges": [["w1", "a"], ["w1", "b"], ["a", "w4"], ["b", "w4"]],
        },
    )
    return {"chain": chain, "diamond": diamond}


@pytest.fixture
def quad_scenario(tmp_path: Path, dag_files: Dict[str, Path]) -> Scenario:
    return scenario_from_mapping(quad_document("diamond.yaml"), "quad", tmp_path)


@pytest.fixture
def pair_scenario(tmp_path: Path, dag_files: Dict[str, Path]) -> Scenario:
    return scenario_from_mapping(pair_document("chain.yaml"), "pair", tmp_path)


@pytest.fixture
def pair_file(tmp_path: Path, dag_files: Dict[str, Path]) -> Path:
    return write_yaml(tmp_path / "pair.yaml", pair_document("chain.yaml"))
