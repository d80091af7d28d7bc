"""Line-of-sight link budget and per-slot UAV topologies.

The delay of sending one bit between two UAVs follows the free-space path loss
scaled by a LoS attenuation factor, the received power, the SNR and the Shannon
capacity of the link. All internal math is in linear units; dB and dBm values are
converted once when a configuration is parsed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Union

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike, NDArray
from scipy.constants import speed_of_light

from .errors import ConfigError, TopologyError

logger = logging.getLogger(__name__)

# Separations below this are treated as this value (the far-field model diverges at 0).
MIN_DISTANCE_M = 1.0

TOPOLOGY_COLUMNS = ["i", "j", "k", "d_m", "pi_s_per_bit"]


def db_to_linear(db: float) -> float:
    return float(10.0 ** (db / 10.0))


def dbm_to_watts(dbm: float) -> float:
    return float(10.0 ** (dbm / 10.0) / 1000.0)


@dataclass(frozen=True)
class ChannelParams:
    """Radio parameters shared by every UAV-to-UAV link (linear units).

    Attributes:
        transmit_power: P_t in watts.
        tx_gain: Transmit antenna gain (linear).
        rx_gain: Receive antenna gain (linear).
        carrier: Carrier frequency in Hz.
        bandwidth: Channel bandwidth in Hz.
        noise_power: Noise power in watts.
        los_factor: LoS attenuation factor (linear, >= 1).
        max_range: Maximum communication distance in metres.
    """

    transmit_power: float = 0.05
    tx_gain: float = db_to_linear(3.0)
    rx_gain: float = db_to_linear(3.0)
    carrier: float = 2.4e9
    bandwidth: float = 20e6
    noise_power: float = dbm_to_watts(-100.0)
    los_factor: float = 1.0
    max_range: float = 6000.0

    def __post_init__(self) -> None:
        for name in (
            "transmit_power",
            "tx_gain",
            "rx_gain",
            "carrier",
            "bandwidth",
            "noise_power",
            "max_range",
        ):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"Channel parameter {name} must be positive, got {value}")
        if not self.los_factor >= 1.0:
            raise ValueError(f"LoS attenuation factor must be >= 1, got {self.los_factor}")

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], prefix: str = "channel") -> ChannelParams:
        """Parse a scenario ``channel`` section given in Table-style units.

        Recognised keys: ``transmit_power_w``, ``tx_gain_db``, ``rx_gain_db``,
        ``carrier_hz``, ``bandwidth_hz``, ``noise_dbm``, ``los_attenuation_db``,
        ``max_range_m``. Missing keys keep their defaults.

        Raises:
            ConfigError: On unknown keys or invalid values, naming the key.
        """
        defaults = cls()
        converters = {
            "transmit_power_w": ("transmit_power", float),
            "tx_gain_db": ("tx_gain", db_to_linear),
            "rx_gain_db": ("rx_gain", db_to_linear),
            "carrier_hz": ("carrier", float),
            "bandwidth_hz": ("bandwidth", float),
            "noise_dbm": ("noise_power", dbm_to_watts),
            "los_attenuation_db": ("los_factor", db_to_linear),
            "max_range_m": ("max_range", float),
        }
        values = {
            field_name: getattr(defaults, field_name) for field_name, _ in converters.values()
        }
        for key, raw in data.items():
            if key not in converters:
                raise ConfigError("unknown channel parameter", f"{prefix}.{key}")
            field_name, convert = converters[key]
            try:
                values[field_name] = convert(raw)
            except (TypeError, ValueError) as e:
                raise ConfigError(f"not a number: {raw!r}", f"{prefix}.{key}") from e
        try:
            return cls(**values)
        except ValueError as e:
            raise ConfigError(str(e), prefix) from e


def distance(p_i: ArrayLike, p_j: ArrayLike) -> float:
    """Euclidean distance in metres between two Cartesian positions."""
    return float(np.linalg.norm(np.asarray(p_i, dtype=float) - np.asarray(p_j, dtype=float)))


def link_exists(d: float, params: ChannelParams) -> bool:
    """Whether two UAVs ``d`` metres apart can communicate (boundary inclusive)."""
    return bool(0.0 <= d <= params.max_range)


def snr(d: float, params: ChannelParams) -> float:
    """Linear SNR of a LoS link of length ``d`` metres."""
    d_eff = max(d, MIN_DISTANCE_M)
    loss = (4.0 * math.pi * d_eff * params.carrier / speed_of_light) ** 2 * params.los_factor
    received = params.transmit_power * params.tx_gain * params.rx_gain / loss
    return received / params.noise_power


def capacity(d: float, params: ChannelParams) -> float:
    """Shannon rate in bit/s, zero when there is no link."""
    if not link_exists(d, params):
        return 0.0
    return params.bandwidth * math.log2(1.0 + snr(d, params))


def per_bit_delay(d: float, params: ChannelParams) -> float:
    """Seconds needed to send one bit over ``d`` metres; ``inf`` beyond range.

    Distances under one metre use the one-metre SNR.

    Examples:
        >>> round(per_bit_delay(1000.0, ChannelParams()) * 1e9, 2)
        6.56
    """
    if d < 0:
        raise ValueError(f"Distance must be non-negative, got {d}")
    rate = capacity(d, params)
    return math.inf if rate == 0.0 else 1.0 / rate


@dataclass(frozen=True, eq=False)
class SlotTopology:
    """Links and per-bit delays between all UAV pairs in one time slot.

    Attributes:
        k: Slot index (1-based).
        positions: Cartesian positions, shape ``(N, 3)``.
        distances: Pairwise distances in metres.
        links: 0/1 link matrix, symmetric with zero diagonal.
        delays: Per-bit delay in s/bit; ``inf`` where there is no link.
    """

    k: int
    positions: NDArray[np.float64]
    distances: NDArray[np.float64]
    links: NDArray[np.int_]
    delays: NDArray[np.float64]

    def __post_init__(self) -> None:
        n = self.links.shape[0]
        if self.delays.shape != (n, n) or self.links.shape != (n, n):
            raise TopologyError("Link and delay matrices must be square and equal-sized")
        if np.any(np.diag(self.links)) or np.any(np.diag(self.delays) != 0.0):
            raise TopologyError("Topology diagonal must be zero")
        if not np.array_equal(self.links, self.links.T):
            raise TopologyError("Link matrix must be symmetric")
        off = ~np.eye(n, dtype=bool)
        if not np.array_equal(np.isfinite(self.delays)[off], self.links[off] == 1):
            raise TopologyError("Per-bit delay must be finite exactly where a link exists")

    @property
    def n(self) -> int:
        return int(self.links.shape[0])

    def neighbours(self, i: int) -> NDArray[np.intp]:
        """Zero-based indices linked to zero-based UAV ``i``."""
        return np.flatnonzero(self.links[i])

    def to_frame(self) -> pd.DataFrame:
        """Adjacency list with 1-based UAV ids, one row per directed link."""
        rows = [
            (i + 1, j + 1, self.k, float(self.distances[i, j]), float(self.delays[i, j]))
            for i in range(self.n)
            for j in self.neighbours(i)
        ]
        return pd.DataFrame(rows, columns=TOPOLOGY_COLUMNS)


def build_slot_topology(positions: ArrayLike, params: ChannelParams, k: int) -> SlotTopology:
    """Compute links and per-bit delays for every UAV pair in slot ``k``.

    Raises:
        TopologyError: If fewer than two positions are given.
    """
    pos = np.asarray(positions, dtype=float)
    if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 2:
        raise TopologyError(f"Need at least two 3-D positions, got shape {pos.shape}")
    n = pos.shape[0]
    distances = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    links = np.zeros((n, n), dtype=int)
    delays = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d = float(distances[i, j])
            pi = per_bit_delay(d, params)
            links[i, j] = links[j, i] = int(math.isfinite(pi))
            delays[i, j] = delays[j, i] = pi
    logger.debug("Slot %d: %d links among %d UAVs", k, int(links.sum()) // 2, n)
    return SlotTopology(k, pos, distances, links, delays)


def write_topology_csv(topologies: Iterable[SlotTopology], path: Union[str, Path]) -> None:
    """Write the adjacency lists of several slots into one CSV file."""
    frames = [t.to_frame() for t in topologies]
    table = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(
        columns=TOPOLOGY_COLUMNS
    )
    table.to_csv(path, index=False)
