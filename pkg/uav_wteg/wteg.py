"""Two-step weighted time-expanded graph (WTEG).

Each UAV appears once per slot. Within a slot, nodes are joined by transmission
edges weighted with the per-bit delay of the link; between the slots, every UAV has
one virtual cache edge from its slot-1 copy to its slot-2 copy, weighted with the
time left in slot 1 once the data is ready on that UAV. There are no edges from
slot 2 back to slot 1.

Nodes are ``(uav, slot)`` tuples with 1-based UAV ids and slots 1 and 2. In the
assembled ``2N x 2N`` matrix, node ``(d, k)`` has index ``(k - 1) * N + d - 1``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from numpy.typing import ArrayLike, NDArray

from .channel import SlotTopology
from .errors import InfeasibleSchedule, TopologyError

logger = logging.getLogger(__name__)

Node = Tuple[int, int]
Path = Tuple[Node, ...]

# Slack used when comparing times against slot boundaries.
SLOT_TOLERANCE = 1e-12


def cache_delay(slot_duration: float, consumed: float) -> float:
    """Virtual cache delay of a node whose data became ready ``consumed`` s into the slot.

    Raises:
        TopologyError: If ``consumed`` is negative.
        InfeasibleSchedule: If ``consumed`` exceeds the slot duration.
    """
    if consumed < 0:
        raise TopologyError(f"Consumed time must be non-negative, got {consumed}")
    if consumed > slot_duration + SLOT_TOLERANCE:
        raise InfeasibleSchedule(
            "slot-overrun", f"consumed {consumed:.6g}s exceeds the {slot_duration}s slot"
        )
    return max(slot_duration - consumed, 0.0)


@dataclass(frozen=True)
class Route:
    """A time-consistent transfer between two replica nodes.

    Attributes:
        arrival: Absolute time the data is available at the destination node.
        delay: ``arrival - ready``, including any wait at the source.
        path: Visited nodes, empty when unreachable.
        cache_ready: For routes crossing the slot boundary, the time the data was
            ready on the caching UAV.
    """

    arrival: float
    delay: float
    path: Path
    cache_ready: Optional[float] = None

    @property
    def cache_uav(self) -> Optional[int]:
        for a, b in zip(self.path, self.path[1:]):
            if a[1] != b[1]:
                return a[0]
        return None

    @property
    def reachable(self) -> bool:
        return math.isfinite(self.arrival)

    def slot2_hops(self) -> List[Tuple[int, int]]:
        """Inter-UAV hops of this route that happen in slot 2."""
        return [
            (a[0], b[0])
            for a, b in zip(self.path, self.path[1:])
            if a[1] == 2 and b[1] == 2 and a[0] != b[0]
        ]


UNREACHABLE = Route(math.inf, math.inf, ())


@dataclass(frozen=True, eq=False)
class WtegGraph:
    """Two consecutive slot topologies joined by cache edges.

    Attributes:
        slot_duration: Slot length in seconds.
        slot1: Per-bit delay matrix of slot 1 (``inf`` where no link).
        slot2: Per-bit delay matrix of slot 2.
        consumed: Time already used in slot 1 on each UAV when its data is cached;
            ``inf`` means no data is cached there (no cache edge).
    """

    slot_duration: float
    slot1: NDArray[np.float64]
    slot2: NDArray[np.float64]
    consumed: NDArray[np.float64]
    _routes: Dict[Tuple[int, int, int], Tuple[float, Path]] = field(
        init=False, repr=False
    )

    def __post_init__(self) -> None:
        if self.slot_duration <= 0:
            raise TopologyError(f"Slot duration must be positive, got {self.slot_duration}")
        s1 = np.asarray(self.slot1, dtype=float)
        s2 = np.asarray(self.slot2, dtype=float)
        if s1.ndim != 2 or s1.shape != s2.shape or s1.shape[0] != s1.shape[1]:
            raise TopologyError(f"Slot matrices differ in shape: {s1.shape} vs {s2.shape}")
        consumed = np.asarray(self.consumed, dtype=float)
        if consumed.shape != (s1.shape[0],):
            raise TopologyError(f"Need one consumed time per UAV, got shape {consumed.shape}")
        for value in consumed[np.isfinite(consumed)]:
            cache_delay(self.slot_duration, float(value))
        object.__setattr__(self, "slot1", s1)
        object.__setattr__(self, "slot2", s2)
        object.__setattr__(self, "consumed", consumed)
        object.__setattr__(self, "_routes", self._slot_routes())

    @property
    def n(self) -> int:
        return int(self.slot1.shape[0])

    @property
    def horizon(self) -> float:
        return 2.0 * self.slot_duration

    def index(self, node: Node) -> int:
        d, k = node
        if not (1 <= d <= self.n and k in (1, 2)):
            raise TopologyError(f"No such node: {node}")
        return (k - 1) * self.n + d - 1

    def node(self, index: int) -> Node:
        return (index % self.n + 1, index // self.n + 1)

    @property
    def cache_block(self) -> NDArray[np.float64]:
        block = np.full((self.n, self.n), np.inf)
        for i, c in enumerate(self.consumed):
            if math.isfinite(c):
                block[i, i] = cache_delay(self.slot_duration, float(c))
        return block

    @property
    def matrix(self) -> NDArray[np.float64]:
        """The assembled ``2N x 2N`` delay matrix."""
        lower = np.full((self.n, self.n), np.inf)
        return np.block([[self.slot1, self.cache_block], [lower, self.slot2]])

    def with_consumed(self, consumed: ArrayLike) -> WtegGraph:
        """Return the same topologies with a new cache block."""
        return WtegGraph(self.slot_duration, self.slot1, self.slot2, np.asarray(consumed))

    def as_networkx(self) -> nx.DiGraph:
        """Directed graph view; edges carry ``per_bit`` or ``fixed`` delay attributes."""
        g = nx.DiGraph()
        g.add_nodes_from((d, k) for k in (1, 2) for d in range(1, self.n + 1))
        for k, delays in ((1, self.slot1), (2, self.slot2)):
            for i in range(self.n):
                for j in range(self.n):
                    if i != j and math.isfinite(delays[i, j]):
                        g.add_edge((i + 1, k), (j + 1, k), per_bit=float(delays[i, j]), fixed=0.0)
        for i, w in enumerate(np.diag(self.cache_block)):
            if math.isfinite(w):
                g.add_edge((i + 1, 1), (i + 1, 2), per_bit=0.0, fixed=float(w))
        return g

    def path_delay(self, path: Sequence[Node], payload_bits: float) -> float:
        """Delay of an explicit path for a payload, ``inf`` if an edge is missing."""
        m = self.matrix
        total = 0.0
        for a, b in zip(path, path[1:]):
            w = float(m[self.index(a), self.index(b)])
            if not math.isfinite(w):
                return math.inf
            total += w if a[1] != b[1] else w * payload_bits
        return total

    def _slot_routes(self) -> Dict[Tuple[int, int, int], Tuple[float, Path]]:
        routes: Dict[Tuple[int, int, int], Tuple[float, Path]] = {}
        for k, delays in ((1, self.slot1), (2, self.slot2)):
            g = nx.Graph() if np.array_equal(delays, delays.T) else nx.DiGraph()
            g.add_nodes_from(range(1, self.n + 1))
            for i in range(self.n):
                for j in range(self.n):
                    if i != j and math.isfinite(delays[i, j]):
                        g.add_edge(i + 1, j + 1, weight=float(delays[i, j]))
            for a in range(1, self.n + 1):
                for b in range(1, self.n + 1):
                    try:
                        path = min(nx.all_shortest_paths(g, a, b, weight="weight"))
                    except nx.NetworkXNoPath:
                        continue
                    per_bit = sum(float(delays[u - 1, v - 1]) for u, v in zip(path, path[1:]))
                    routes[(k, a, b)] = (per_bit, tuple((u, k) for u in path))
        return routes

    def slot_route(self, k: int, a: int, b: int) -> Optional[Tuple[float, Path]]:
        """Per-bit shortest route from UAV ``a`` to ``b`` inside slot ``k``."""
        return self._routes.get((k, a, b))

    def timed_route(self, src: Node, dst: Node, payload_bits: float, ready: float) -> Route:
        """Route data ready at ``src`` at absolute time ``ready`` to ``dst``.

        Departure is delayed to the start of the source slot if needed. Slot-1
        transmissions must complete within slot 1; data for a slot-2 destination may
        be relayed in slot 1, cached on the relay until the boundary and forwarded
        in slot 2, whichever arrives first.
        """
        (a, ks), (b, kd) = src, dst
        self.index(src)
        self.index(dst)
        dt = self.slot_duration
        depart = max(ready, (ks - 1) * dt)
        if ks > kd or (ks == 1 and depart > dt + SLOT_TOLERANCE):
            return UNREACHABLE

        if ks == kd:
            found = self.slot_route(ks, a, b)
            if found is None:
                return UNREACHABLE
            per_bit, path = found
            arrival = depart + per_bit * payload_bits
            if ks == 1 and arrival > dt + SLOT_TOLERANCE:
                return UNREACHABLE
            return Route(arrival, arrival - ready, path)

        best: Optional[Tuple[float, Path, float]] = None
        for relay in range(1, self.n + 1):
            first = self.slot_route(1, a, relay)
            second = self.slot_route(2, relay, b)
            if first is None or second is None:
                continue
            if depart + first[0] * payload_bits > dt + SLOT_TOLERANCE:
                continue
            cached = depart + first[0] * payload_bits
            arrival = dt + second[0] * payload_bits
            path = first[1] + second[1]
            if best is None or (arrival, path) < best[:2]:
                best = (arrival, path, cached)
        if best is None:
            return UNREACHABLE
        return Route(best[0], best[0] - ready, best[1], best[2])


def assemble_two_step(
    g_k: SlotTopology,
    g_k1: SlotTopology,
    consumed: Optional[ArrayLike],
    slot_duration: float,
) -> WtegGraph:
    """Join two slot topologies into a two-step WTEG.

    Args:
        g_k: Topology of the first slot.
        g_k1: Topology of the second slot.
        consumed: Per-UAV time used in the first slot before caching; ``None``
            means zero everywhere.
        slot_duration: Slot length in seconds.

    Raises:
        TopologyError: If the topologies have different sizes.
        InfeasibleSchedule: If a consumed time exceeds the slot.
    """
    if g_k.n != g_k1.n:
        raise TopologyError(f"Slot topologies differ in size: {g_k.n} vs {g_k1.n}")
    c = np.zeros(g_k.n) if consumed is None else np.asarray(consumed, dtype=float)
    return WtegGraph(slot_duration, g_k.delays, g_k1.delays, c)


def shortest_path(
    g: WtegGraph, src: Node, dst: Node, payload_bits: float
) -> Tuple[float, List[Node]]:
    """Minimum-delay path for a payload on the assembled graph.

    Transmission edges cost ``per_bit * payload_bits``; cache edges cost their fixed
    delay. Ties are broken by the lexicographically smallest node sequence.
    Unreachable pairs give ``(inf, [])``.
    """
    g.index(src)
    g.index(dst)
    if src == dst:
        return 0.0, [src]
    if src[1] > dst[1]:
        return math.inf, []
    graph = g.as_networkx()

    def weight(u: Node, v: Node, data: Dict[str, float]) -> float:
        return data["per_bit"] * payload_bits + data["fixed"]

    try:
        path = min(nx.all_shortest_paths(graph, src, dst, weight=weight))
    except nx.NetworkXNoPath:
        return math.inf, []
    return g.path_delay(path, payload_bits), list(path)
