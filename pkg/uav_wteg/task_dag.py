"""Task DAGs: subtasks with data sizes, CPU demands and scaling factors.

A task has a single start subtask and a single terminal subtask. Input data enters
at the start subtask; every other subtask receives the sum of its predecessors'
scaled outputs (``D_i = sum(D_j * xi_j)``). CPU demand follows from the computation
complexity: ``C_i = delta_i * D_i``.

Two DAGs ship with the package under ``data/dags``: ``phi1`` (6 subtasks) and
``phi2`` (9 subtasks). Both can be loaded by name.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import networkx as nx
import yaml

from .errors import (
    ConfigError,
    CycleDetected,
    DagError,
    MultipleSinks,
    MultipleSources,
    NotValidated,
    OrphanNode,
)

logger = logging.getLogger(__name__)

DEFAULT_COMPLEXITY = 1900 / 8
DEFAULT_SCALING = 0.8
MEGABIT = 1e6

DAG_DIR = Path(__file__).parent / "data" / "dags"


@dataclass(frozen=True)
class Subtask:
    """One subtask of a task DAG.

    Attributes:
        id: Unique name.
        scaling: Output/input data ratio xi in (0, 1].
        complexity: CPU cycles per input bit (delta).
        data_bits: Input data size D in bits, set by propagation.
    """

    id: str
    scaling: float = DEFAULT_SCALING
    complexity: float = DEFAULT_COMPLEXITY
    data_bits: Optional[float] = None

    def __post_init__(self) -> None:
        if not self.id:
            raise DagError("Subtask id must not be empty")
        if not 0.0 < self.scaling <= 1.0:
            raise DagError(f"Scaling of {self.id} must be in (0, 1], got {self.scaling}")
        if self.complexity < 0:
            raise DagError(f"Complexity of {self.id} must be >= 0, got {self.complexity}")
        if self.data_bits is not None and self.data_bits < 0:
            raise DagError(f"Data size of {self.id} must be >= 0, got {self.data_bits}")

    @property
    def cycles(self) -> float:
        """Required CPU cycles C = delta * D."""
        if self.data_bits is None:
            raise NotValidated(f"Data size of {self.id} has not been propagated")
        return self.complexity * self.data_bits

    @property
    def output_bits(self) -> float:
        """Data handed to each successor, D * xi."""
        if self.data_bits is None:
            raise NotValidated(f"Data size of {self.id} has not been propagated")
        return self.data_bits * self.scaling

    @property
    def work(self) -> float:
        """Cycles charged for execution, D * delta * xi."""
        return self.cycles * self.scaling


class TaskDag:
    """An immutable task graph.

    Subtasks keep the order they were given in; that order breaks ties in the
    topological order. Use :func:`validate` and :func:`propagate_data_sizes` to
    obtain a DAG ready for scheduling.

    Args:
        subtasks: Subtasks in declaration order.
        edges: Precedence edges as ``(predecessor, successor)`` ids.
        name: Optional label.
    """

    def __init__(
        self,
        subtasks: Sequence[Subtask],
        edges: Iterable[Tuple[str, str]],
        name: str = "",
        *,
        _validated: bool = False,
    ) -> None:
        self.name = name
        self._subtasks: Dict[str, Subtask] = {}
        for s in subtasks:
            if s.id in self._subtasks:
                raise DagError(f"Duplicate subtask id: {s.id}")
            self._subtasks[s.id] = s
        self._position = {sid: i for i, sid in enumerate(self._subtasks)}
        self._graph = nx.DiGraph()
        self._graph.add_nodes_from(self._subtasks)
        for u, v in edges:
            for end in (u, v):
                if end not in self._subtasks:
                    raise DagError(f"Edge ({u}, {v}) references unknown subtask {end}")
            self._graph.add_edge(u, v)
        self._validated = _validated

    def __repr__(self) -> str:
        edges = self._graph.number_of_edges()
        return f"TaskDag({self.name!r}, {len(self)} subtasks, {edges} edges)"

    def __len__(self) -> int:
        return len(self._subtasks)

    def __getitem__(self, sid: str) -> Subtask:
        return self._subtasks[sid]

    @property
    def subtasks(self) -> List[Subtask]:
        return list(self._subtasks.values())

    @property
    def edges(self) -> List[Tuple[str, str]]:
        pos = self._position
        return sorted(self._graph.edges, key=lambda e: (pos[e[0]], pos[e[1]]))

    @property
    def validated(self) -> bool:
        return self._validated

    @property
    def propagated(self) -> bool:
        return all(s.data_bits is not None for s in self._subtasks.values())

    @property
    def start(self) -> str:
        return self._single(self.sources(), MultipleSources, "start")

    @property
    def terminal(self) -> str:
        return self._single(self.sinks(), MultipleSinks, "terminal")

    @staticmethod
    def _single(ids: List[str], error: type, role: str) -> str:
        if len(ids) != 1:
            raise error(f"Expected exactly one {role} subtask, found {ids}")
        return ids[0]

    def sources(self) -> List[str]:
        return [s for s in self._subtasks if self._graph.in_degree(s) == 0]

    def sinks(self) -> List[str]:
        return [s for s in self._subtasks if self._graph.out_degree(s) == 0]

    def predecessors(self, sid: str) -> List[str]:
        """The predecessor set of a subtask, in declaration order."""
        return sorted(self._graph.predecessors(sid), key=self._position.__getitem__)

    def successors(self, sid: str) -> List[str]:
        return sorted(self._graph.successors(sid), key=self._position.__getitem__)

    def graph(self) -> nx.DiGraph:
        """A copy of the underlying graph."""
        return self._graph.copy()

    def _rebuild(self, subtasks: Sequence[Subtask]) -> TaskDag:
        return TaskDag(subtasks, self._graph.edges, self.name, _validated=self._validated)

    def with_complexity(self, multiplier: float) -> TaskDag:
        """Scale every subtask's complexity (data sizes are kept)."""
        if multiplier < 0:
            raise DagError(f"Complexity multiplier must be >= 0, got {multiplier}")
        return self._rebuild(
            [replace(s, complexity=s.complexity * multiplier) for s in self.subtasks]
        )

    def with_uniform_complexity(self, complexity: float) -> TaskDag:
        return self._rebuild([replace(s, complexity=complexity) for s in self.subtasks])

    def with_uniform_scaling(self, scaling: float) -> TaskDag:
        """Use one scaling factor for every subtask; re-propagate sizes afterwards."""
        return self._rebuild([replace(s, scaling=scaling, data_bits=None) for s in self.subtasks])

    def with_source(self, source_bits: float) -> TaskDag:
        """Re-propagate data sizes from a new start-subtask input size."""
        return propagate_data_sizes(self, source_bits)

    def to_mapping(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "subtasks": [
                {
                    "id": s.id,
                    "scaling": s.scaling,
                    "complexity_cycles_per_bit": s.complexity,
                }
                for s in self.subtasks
            ],
            "edges": [list(e) for e in self.edges],
        }


def validate(dag: TaskDag) -> TaskDag:
    """Check the DAG structure and return it marked as validated.

    Raises:
        DagError: If the DAG has fewer than two subtasks.
        CycleDetected: If there is a directed cycle (including self-loops).
        OrphanNode: If a subtask has no edges at all, or does not lie on a
            start-to-terminal path.
        MultipleSources: If there is not exactly one start subtask.
        MultipleSinks: If there is not exactly one terminal subtask.
    """
    g = dag.graph()
    if len(dag) < 2:
        raise DagError(f"A task needs at least two subtasks, got {len(dag)}")
    if not nx.is_directed_acyclic_graph(g):
        cycle = nx.find_cycle(g)
        raise CycleDetected(f"Cycle through {[u for u, _ in cycle]}")
    isolated = [s.id for s in dag.subtasks if g.degree(s.id) == 0]
    if isolated:
        raise OrphanNode(f"Subtasks without any edge: {isolated}")
    start, terminal = dag.start, dag.terminal
    on_path = (nx.descendants(g, start) | {start}) & (nx.ancestors(g, terminal) | {terminal})
    orphans = [s.id for s in dag.subtasks if s.id not in on_path]
    if orphans:
        raise OrphanNode(f"Subtasks not on a {start}->{terminal} path: {orphans}")
    return TaskDag(dag.subtasks, g.edges, dag.name, _validated=True)


def topological_order(dag: TaskDag) -> List[str]:
    """Deterministic topological order; ties go to the earlier-declared subtask.

    Raises:
        NotValidated: If ``dag`` has not been validated.
    """
    if not dag.validated:
        raise NotValidated("Validate the DAG before ordering it")
    position = {s.id: i for i, s in enumerate(dag.subtasks)}
    return list(nx.lexicographical_topological_sort(dag.graph(), key=position.__getitem__))


def propagate_data_sizes(dag: TaskDag, source_bits: float) -> TaskDag:
    """Set every subtask's input size from the start subtask's ``source_bits``.

    Raises:
        NotValidated: If ``dag`` has not been validated.
        DagError: If ``source_bits`` is negative.
    """
    if not dag.validated:
        raise NotValidated("Validate the DAG before propagating data sizes")
    if source_bits < 0:
        raise DagError(f"Source data size must be >= 0, got {source_bits}")
    sizes: Dict[str, float] = {}
    for sid in topological_order(dag):
        preds = dag.predecessors(sid)
        if not preds:
            sizes[sid] = float(source_bits)
        else:
            sizes[sid] = sum(sizes[p] * dag[p].scaling for p in preds)
    return TaskDag(
        [replace(s, data_bits=sizes[s.id]) for s in dag.subtasks],
        dag.edges,
        dag.name,
        _validated=True,
    )


def dag_from_mapping(data: Mapping[str, Any], source: str = "dag") -> TaskDag:
    """Build (and validate) a DAG from a parsed YAML document.

    Top-level ``scaling`` and ``complexity_cycles_per_bit`` set defaults that
    individual subtasks may override.

    Raises:
        ConfigError: If the document is malformed.
        DagError: If the structure is invalid.
    """
    if not isinstance(data, Mapping):
        raise ConfigError("DAG document must be a mapping", source)
    default_scaling = data.get("scaling", DEFAULT_SCALING)
    default_complexity = data.get("complexity_cycles_per_bit", DEFAULT_COMPLEXITY)
    raw_subtasks = data.get("subtasks")
    if not isinstance(raw_subtasks, list) or not raw_subtasks:
        raise ConfigError("a non-empty list is required", f"{source}.subtasks")
    subtasks = []
    for i, entry in enumerate(raw_subtasks):
        key = f"{source}.subtasks[{i}]"
        if isinstance(entry, str):
            entry = {"id": entry}
        if not isinstance(entry, Mapping) or "id" not in entry:
            raise ConfigError("each subtask needs an id", key)
        try:
            subtasks.append(
                Subtask(
                    id=str(entry["id"]),
                    scaling=float(entry.get("scaling", default_scaling)),
                    complexity=float(entry.get("complexity_cycles_per_bit", default_complexity)),
                )
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid subtask: {e}", key) from e
    edges = []
    for i, edge in enumerate(data.get("edges") or []):
        if not isinstance(edge, (list, tuple)) or len(edge) != 2:
            raise ConfigError("edges are [predecessor, successor] pairs", f"{source}.edges[{i}]")
        edges.append((str(edge[0]), str(edge[1])))
    dag = TaskDag(subtasks, edges, str(data.get("name", Path(source).stem)))
    return validate(dag)


def load_dag(ref: Union[str, Path], base_dir: Optional[Path] = None) -> TaskDag:
    """Load a DAG by shipped name (``"phi1"``) or from a YAML file.

    Relative paths are resolved against ``base_dir`` first, then the shipped DAG
    directory.

    Raises:
        ConfigError: If the file cannot be found or parsed.
    """
    path = Path(ref)
    candidates = []
    if path.is_absolute():
        candidates.append(path)
    else:
        if base_dir is not None:
            candidates.append(base_dir / path)
        candidates.append(path)
        candidates.append(DAG_DIR / path)
        candidates.append(DAG_DIR / f"{path}.yaml")
    for candidate in candidates:
        if candidate.is_file():
            return _load_dag_file(str(candidate.resolve()))
    raise ConfigError(f"DAG file not found: {ref}", "task.dag")


@lru_cache(maxsize=16)
def _load_dag_file(path: str) -> TaskDag:
    try:
        with open(path, encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot read DAG file {path}: {e}", "task.dag") from e
    dag = dag_from_mapping(data, Path(path).stem)
    logger.debug("Loaded %r from %s", dag, path)
    return dag


def dump_dag(dag: TaskDag, path: Union[str, Path]) -> None:
    """Write a DAG in the loader's YAML format."""
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(dag.to_mapping(), f, sort_keys=False)


def shipped_dags() -> List[str]:
    return sorted(p.stem for p in DAG_DIR.glob("*.yaml"))
