"""Scenario documents: fleet, radio, task, solver and experiment settings.

A scenario is a YAML file with explicit units in its key names. Loading validates
every value, converts dB figures to linear units and yields frozen dataclasses;
any problem raises :class:`~uav_wteg.errors.ConfigError` naming the offending key.

Shipped scenarios live in ``data/scenarios`` and can be referenced by name.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import yaml
from numpy.typing import NDArray

from .channel import ChannelParams, SlotTopology, build_slot_topology
from .earth import EarthModel
from .errors import ConfigError, DagError, NavigationError, TrajectoryError
from .mapping import SchedulingProblem
from .schedulers import BpsoParams, CloudParams, Strategy
from .sins import ImuErrorModel, ImuSample, NavState, predict_slot_positions, simulate_imu
from .task_dag import MEGABIT, TaskDag, load_dag
from .trajectory import Segment, Trajectory
from .wteg import WtegGraph, assemble_two_step

logger = logging.getLogger(__name__)

SCENARIO_DIR = Path(__file__).parent / "data" / "scenarios"

MHZ = 1e6

SUCCESS_MODELS = ("physical", "bernoulli")


def _section(data: Mapping[str, Any], key: str, allowed: Sequence[str]) -> Dict[str, Any]:
    value = data.get(key) or {}
    if not isinstance(value, Mapping):
        raise ConfigError("must be a mapping", key)
    unknown = sorted(set(value) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown keys {unknown}", key)
    return dict(value)


def _number(
    value: Any, key: str, *, positive: bool = False, minimum: Optional[float] = None
) -> float:
    try:
        number = float(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"not a number: {value!r}", key) from e
    if not np.isfinite(number):
        raise ConfigError(f"must be finite, got {value!r}", key)
    if positive and number <= 0:
        raise ConfigError(f"must be positive, got {value!r}", key)
    if minimum is not None and number < minimum:
        raise ConfigError(f"must be >= {minimum}, got {value!r}", key)
    return number


def _integer(value: Any, key: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"must be an integer, got {value!r}", key)
    if value < minimum:
        raise ConfigError(f"must be >= {minimum}, got {value}", key)
    return value


def _numbers(value: Any, key: str, **kwargs: Any) -> Tuple[float, ...]:
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError("must be a non-empty list", key)
    return tuple(_number(v, f"{key}[{i}]", **kwargs) for i, v in enumerate(value))


@dataclass(frozen=True, eq=False)
class FleetConfig:
    """UAV fleet layout, motion and compute capacities.

    Attributes:
        reference: Geodetic ``[L, lambda, h]`` (rad, rad, m) that offsets refer to.
        offsets: Initial (east, north, up) offset of each UAV in metres, ``(N, 3)``.
        segments: Truth motion segments of each UAV.
        capacities: CPU capacity of each UAV in cycles/s.
        initiator: 1-based id of the task initiator.
        receiver: 1-based id of the result receiver.
        sample_dt: IMU sub-sample interval in seconds.
    """

    reference: NDArray[np.float64]
    offsets: NDArray[np.float64]
    segments: Tuple[Tuple[Segment, ...], ...]
    capacities: NDArray[np.float64]
    initiator: int
    receiver: int
    sample_dt: float

    @property
    def n(self) -> int:
        return int(self.offsets.shape[0])


@dataclass(frozen=True)
class TaskConfig:
    """The task to schedule: a validated DAG and its source data size."""

    dag: TaskDag
    source_bits: float
    complexity_multiplier: float = 1.0
    ref: str = ""

    def prepared(
        self, dag: Optional[TaskDag] = None, source_bits: Optional[float] = None
    ) -> TaskDag:
        """The DAG with complexity applied and data sizes propagated."""
        base = (dag or self.dag).with_complexity(self.complexity_multiplier)
        return base.with_source(self.source_bits if source_bits is None else source_bits)


@dataclass(frozen=True)
class ExperimentConfig:
    """Sweep settings of the experiment runners."""

    dags: Tuple[str, ...] = ()
    datasize_mb: Tuple[float, ...] = (0.0, 1.0, 2.0, 3.0, 4.0, 5.0)
    complexity_multipliers: Tuple[float, ...] = (0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.8)
    complexity_datasize_mb: Tuple[float, ...] = (1.0, 2.0, 3.0, 4.0, 5.0)
    comparison_datasize_mb: Tuple[float, ...] = (1.0, 2.0, 3.0, 4.0, 5.0)
    comparison_seeds: int = 20
    success_datasize_mb: Tuple[float, ...] = tuple(float(d) for d in range(1, 11))
    success_trials: int = 200
    success_model: str = "physical"
    sins_duration_s: float = 240.0
    sins_sample_dt_s: float = 0.05


@dataclass(frozen=True, eq=False)
class Scenario:
    """A complete, validated scenario.

    Attributes:
        name: Scenario label.
        seed: Master seed for every random stream.
        slot_duration: Time-slot length in seconds.
        earth: Earth model.
        channel: Radio parameters.
        fleet: Fleet layout and motion.
        imu_errors: Sensor error model used for position prediction.
        task: Task to schedule.
        strategy: Default solver.
        bpso: Swarm settings.
        cloud: Cloud computing settings.
        experiments: Sweep settings.
        document: The parsed document the scenario was built from.
        base_dir: Directory relative references were resolved against.
    """

    name: str
    seed: int
    slot_duration: float
    earth: EarthModel
    channel: ChannelParams
    fleet: FleetConfig
    imu_errors: ImuErrorModel
    task: TaskConfig
    strategy: Strategy = Strategy.BPSO
    bpso: BpsoParams = field(default_factory=BpsoParams)
    cloud: CloudParams = field(default_factory=CloudParams)
    experiments: ExperimentConfig = field(default_factory=ExperimentConfig)
    document: Mapping[str, Any] = field(default_factory=dict)
    base_dir: Optional[Path] = None

    def with_seed(self, seed: int) -> Scenario:
        """The same scenario driven by another master seed."""
        document = dict(self.document)
        document["seed"] = seed
        return scenario_from_mapping(document, self.name, self.base_dir)

    def with_bpso(self, **changes: Any) -> Scenario:
        return replace(self, bpso=replace(self.bpso, **changes))

    @cached_property
    def trajectories(self) -> List[Trajectory]:
        fleet = self.fleet
        return [
            Trajectory(
                self.earth.enu_offset_to_geodetic(fleet.reference, offset), segments, self.earth
            )
            for offset, segments in zip(fleet.offsets, fleet.segments)
        ]

    @property
    def horizon(self) -> float:
        return 2.0 * self.slot_duration

    def truth_positions(self) -> NDArray[np.float64]:
        """True ECEF positions at the start of slots 1 and 2, shape ``(2, N, 3)``."""
        times = np.array([0.0, self.slot_duration])
        return np.stack(
            [self.earth.geodetic_to_ecef(t.position(times)) for t in self.trajectories], axis=1
        )

    def imu_traces(
        self, noise_seed: Optional[int] = None
    ) -> List[Tuple[NavState, List[ImuSample]]]:
        """Initial state and simulated IMU trace of every UAV over both slots.

        UAV ``d`` draws its noise from stream ``noise_seed + d - 1`` (``noise_seed``
        defaults to the scenario seed).
        """
        base = self.seed if noise_seed is None else noise_seed
        fleet = []
        for d, truth in enumerate(self.trajectories):
            err = self.imu_errors.with_seed(base + d)
            trace = simulate_imu(truth, err, self.fleet.sample_dt, self.horizon)
            fleet.append((truth.state(0.0), trace))
        return fleet

    def predicted_positions(self, noise_seed: Optional[int] = None) -> NDArray[np.float64]:
        """Dead-reckoned ECEF positions at the start of slots 1 and 2."""
        return predict_slot_positions(self.imu_traces(noise_seed), self.slot_duration, self.earth)

    def topologies(self, positions: NDArray[np.float64]) -> Tuple[SlotTopology, SlotTopology]:
        return (
            build_slot_topology(positions[0], self.channel, 1),
            build_slot_topology(positions[1], self.channel, 2),
        )

    def wteg(self, positions: NDArray[np.float64]) -> WtegGraph:
        g1, g2 = self.topologies(positions)
        return assemble_two_step(g1, g2, None, self.slot_duration)

    def problem(
        self,
        wteg: WtegGraph,
        dag: Optional[TaskDag] = None,
        source_bits: Optional[float] = None,
    ) -> SchedulingProblem:
        """A scheduling problem for this scenario's task (or ``dag``) on ``wteg``."""
        return SchedulingProblem(
            self.task.prepared(dag, source_bits),
            wteg,
            self.fleet.capacities,
            self.fleet.initiator,
            self.fleet.receiver,
        )


_TOP_LEVEL = (
    "name",
    "seed",
    "slot_duration_s",
    "earth",
    "channel",
    "fleet",
    "imu_errors",
    "task",
    "solver",
    "cloud",
    "experiments",
)


def _earth(data: Mapping[str, Any]) -> EarthModel:
    s = _section(data, "earth", ["gravity_mps2"])
    gravity = s.get("gravity_mps2")
    return EarthModel(
        gravity=None if gravity is None else _number(gravity, "earth.gravity_mps2", positive=True)
    )


def _fleet(data: Mapping[str, Any], earth: EarthModel, seed: int) -> FleetConfig:
    s = _section(
        data,
        "fleet",
        [
            "reference",
            "uavs",
            "segments",
            "capacities_mhz",
            "capacity_range_mhz",
            "initiator",
            "receiver",
            "sample_dt_s",
        ],
    )
    ref = s.get("reference") or {}
    if not isinstance(ref, Mapping):
        raise ConfigError("must be a mapping", "fleet.reference")
    reference = np.array(
        [
            np.radians(_number(ref.get("lat_deg", 29.0), "fleet.reference.lat_deg")),
            np.radians(_number(ref.get("lon_deg", 106.0), "fleet.reference.lon_deg")),
            _number(ref.get("height_m", 450.0), "fleet.reference.height_m"),
        ]
    )
    if abs(reference[0]) > np.radians(89.0):
        raise ConfigError("too close to a pole", "fleet.reference.lat_deg")

    uavs = s.get("uavs")
    if not isinstance(uavs, list) or len(uavs) < 2:
        raise ConfigError("at least two UAVs are required", "fleet.uavs")
    default_segments = s.get("segments")
    offsets = []
    segments = []
    for i, entry in enumerate(uavs):
        key = f"fleet.uavs[{i}]"
        if not isinstance(entry, Mapping):
            raise ConfigError("must be a mapping", key)
        offset = entry.get("offset_m")
        if not isinstance(offset, (list, tuple)) or len(offset) not in (2, 3):
            raise ConfigError("offset_m must be [east, north] or [east, north, up]", key)
        values = [_number(v, f"{key}.offset_m") for v in offset]
        offsets.append(values + [0.0] * (3 - len(values)))
        raw = entry.get("segments", default_segments)
        if not isinstance(raw, list) or not raw:
            raise ConfigError("no trajectory segments", f"{key}.segments")
        try:
            segments.append(tuple(Segment.from_mapping(seg) for seg in raw))
            # Builds once to surface continuity errors at load time.
            Trajectory(reference, segments[-1], earth)
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"invalid segments: {e}", f"{key}.segments") from e
    n = len(offsets)

    if "capacities_mhz" in s:
        caps = _numbers(s["capacities_mhz"], "fleet.capacities_mhz", positive=True)
        if len(caps) != n:
            raise ConfigError(f"need {n} values, got {len(caps)}", "fleet.capacities_mhz")
        capacities = np.array(caps) * MHZ
    else:
        bounds = _numbers(
            s.get("capacity_range_mhz", [500, 1200]), "fleet.capacity_range_mhz", positive=True
        )
        if len(bounds) != 2:
            raise ConfigError("range must be [low, high]", "fleet.capacity_range_mhz")
        lo, hi = bounds
        if hi < lo:
            raise ConfigError("range must be [low, high]", "fleet.capacity_range_mhz")
        capacities = np.random.default_rng(seed).uniform(lo, hi, n) * MHZ

    initiator = _integer(s.get("initiator", 1), "fleet.initiator", 1)
    receiver = _integer(s.get("receiver", n), "fleet.receiver", 1)
    for key, uav in (("fleet.initiator", initiator), ("fleet.receiver", receiver)):
        if uav > n:
            raise ConfigError(f"u{uav} is not in the fleet of {n}", key)
    return FleetConfig(
        reference=reference,
        offsets=np.array(offsets),
        segments=tuple(segments),
        capacities=capacities,
        initiator=initiator,
        receiver=receiver,
        sample_dt=_number(s.get("sample_dt_s", 0.05), "fleet.sample_dt_s", positive=True),
    )


def _imu_errors(data: Mapping[str, Any], seed: int) -> ImuErrorModel:
    s = _section(
        data,
        "imu_errors",
        ["model", "gyro_bias_rps", "accel_bias_mps2", "gyro_noise", "accel_noise"],
    )
    model = s.pop("model", "calibrated" if not s else "custom")
    if model == "calibrated":
        if s:
            raise ConfigError("calibrated model takes no parameters", "imu_errors")
        return ImuErrorModel.calibrated(seed)
    if model == "none":
        return ImuErrorModel(seed=seed)
    if model != "custom":
        raise ConfigError(f"unknown model {model!r}", "imu_errors.model")
    try:
        return ImuErrorModel(
            gyro_bias=np.array(s.get("gyro_bias_rps", [0.0, 0.0, 0.0]), dtype=float),
            accel_bias=np.array(s.get("accel_bias_mps2", [0.0, 0.0, 0.0]), dtype=float),
            gyro_noise=_number(s.get("gyro_noise", 0.0), "imu_errors.gyro_noise", minimum=0.0),
            accel_noise=_number(s.get("accel_noise", 0.0), "imu_errors.accel_noise", minimum=0.0),
            seed=seed,
        )
    except (NavigationError, ValueError) as e:
        raise ConfigError(str(e), "imu_errors") from e


def _task(data: Mapping[str, Any], base_dir: Optional[Path]) -> TaskConfig:
    s = _section(
        data,
        "task",
        ["dag", "source_mb", "complexity_cycles_per_bit", "complexity_multiplier", "scaling"],
    )
    ref = str(s.get("dag", "phi1"))
    dag = load_dag(ref, base_dir)
    if "complexity_cycles_per_bit" in s:
        dag = dag.with_uniform_complexity(
            _number(s["complexity_cycles_per_bit"], "task.complexity_cycles_per_bit", minimum=0.0)
        )
    if "scaling" in s:
        try:
            dag = dag.with_uniform_scaling(_number(s["scaling"], "task.scaling", positive=True))
        except DagError as e:
            raise ConfigError(str(e), "task.scaling") from e
    return TaskConfig(
        dag=dag,
        ref=ref,
        source_bits=_number(s.get("source_mb", 5.0), "task.source_mb", minimum=0.0) * MEGABIT,
        complexity_multiplier=_number(
            s.get("complexity_multiplier", 1.0), "task.complexity_multiplier", minimum=0.0
        ),
    )


def _solver(data: Mapping[str, Any], seed: int) -> Tuple[Strategy, BpsoParams]:
    s = _section(
        data,
        "solver",
        ["name", "swarm_size", "iterations", "inertia", "c1", "c2", "v_max", "workers"],
    )
    try:
        strategy = Strategy(s.pop("name", "bpso"))
    except ValueError as e:
        choices = [x.value for x in Strategy]
        raise ConfigError(f"unknown solver; choose from {choices}", "solver.name") from e
    ints = {"swarm_size": 1, "iterations": 0, "workers": 1}
    values: Dict[str, Any] = {}
    for key, raw in s.items():
        if key in ints:
            values[key] = _integer(raw, f"solver.{key}", ints[key])
        else:
            values[key] = _number(raw, f"solver.{key}")
    try:
        return strategy, BpsoParams(seed=seed, **values)
    except ValueError as e:
        raise ConfigError(str(e), "solver") from e


def _cloud(data: Mapping[str, Any]) -> CloudParams:
    s = _section(data, "cloud", ["capacity_mhz", "backhaul_mbps"])
    return CloudParams(
        capacity=_number(s.get("capacity_mhz", 10000.0), "cloud.capacity_mhz", positive=True)
        * MHZ,
        backhaul=_number(s.get("backhaul_mbps", 2.0), "cloud.backhaul_mbps", positive=True)
        * MEGABIT,
    )


def _experiments(data: Mapping[str, Any], task_dag: str) -> ExperimentConfig:
    defaults = ExperimentConfig()
    s = _section(data, "experiments", list(ExperimentConfig.__dataclass_fields__))
    values: Dict[str, Any] = {"dags": (task_dag,)}
    for key, raw in s.items():
        path = f"experiments.{key}"
        default = getattr(defaults, key)
        if key == "dags":
            if not isinstance(raw, list) or not raw:
                raise ConfigError("must be a non-empty list", path)
            values[key] = tuple(str(d) for d in raw)
        elif key == "success_model":
            if raw not in SUCCESS_MODELS:
                raise ConfigError(f"choose from {list(SUCCESS_MODELS)}", path)
            values[key] = raw
        elif isinstance(default, tuple):
            values[key] = _numbers(raw, path, minimum=0.0)
        elif isinstance(default, int):
            values[key] = _integer(raw, path, 1)
        else:
            values[key] = _number(raw, path, positive=True)
    return ExperimentConfig(**values)


def scenario_from_mapping(
    data: Mapping[str, Any], name: str = "scenario", base_dir: Optional[Path] = None
) -> Scenario:
    """Validate a parsed scenario document.

    Raises:
        ConfigError: On any missing, unknown or invalid value.
    """
    if not isinstance(data, Mapping):
        raise ConfigError("scenario document must be a mapping", name)
    unknown = sorted(set(data) - set(_TOP_LEVEL))
    if unknown:
        raise ConfigError(f"unknown sections {unknown}", name)
    seed = _integer(data.get("seed", 0), "seed")
    earth = _earth(data)
    try:
        fleet = _fleet(data, earth, seed)
    except TrajectoryError as e:
        raise ConfigError(str(e), "fleet") from e
    task = _task(data, base_dir)
    strategy, bpso = _solver(data, seed)
    scenario = Scenario(
        name=str(data.get("name", name)),
        seed=seed,
        slot_duration=_number(data.get("slot_duration_s", 4.0), "slot_duration_s", positive=True),
        earth=earth,
        channel=ChannelParams.from_mapping(_section(data, "channel", _CHANNEL_KEYS)),
        fleet=fleet,
        imu_errors=_imu_errors(data, seed),
        task=task,
        strategy=strategy,
        bpso=bpso,
        cloud=_cloud(data),
        experiments=_experiments(data, task.ref or task.dag.name),
        document=copy.deepcopy(dict(data)),
        base_dir=base_dir,
    )
    logger.debug("Loaded scenario %s: %d UAVs, seed %d", scenario.name, fleet.n, seed)
    return scenario


_CHANNEL_KEYS = [
    "transmit_power_w",
    "tx_gain_db",
    "rx_gain_db",
    "carrier_hz",
    "bandwidth_hz",
    "noise_dbm",
    "los_attenuation_db",
    "max_range_m",
]


def _merge(base: Dict[str, Any], overrides: Mapping[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = _merge(dict(merged[key]), value)
        else:
            merged[key] = value
    return merged


def resolve_scenario_path(ref: Union[str, Path]) -> Path:
    """Find a scenario file by path or shipped name."""
    path = Path(ref)
    for candidate in (path, SCENARIO_DIR / path, SCENARIO_DIR / f"{path}.yaml"):
        if candidate.is_file():
            return candidate.resolve()
    raise ConfigError(f"scenario file not found: {ref}", "scenario")


@lru_cache(maxsize=8)
def _read_document(path: str) -> Dict[str, Any]:
    try:
        with open(path, encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot read {path}: {e}", "scenario") from e
    if not isinstance(data, dict):
        raise ConfigError("scenario document must be a mapping", path)
    return data


def load_scenario(
    ref: Union[str, Path],
    *,
    seed: Optional[int] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> Scenario:
    """Load a scenario file (or shipped scenario name).

    Args:
        ref: Path or shipped name such as ``"baseline"``.
        seed: Replaces the document's seed.
        overrides: Nested values merged over the document before validation.

    Raises:
        ConfigError: If the file is missing, unreadable or invalid.
    """
    path = resolve_scenario_path(ref)
    data = copy.deepcopy(_read_document(str(path)))
    if overrides:
        data = _merge(data, overrides)
    if seed is not None:
        data["seed"] = seed
    return scenario_from_mapping(data, path.stem, path.parent)


def shipped_scenarios() -> List[str]:
    return sorted(p.stem for p in SCENARIO_DIR.glob("*.yaml"))
