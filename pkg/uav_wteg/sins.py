"""Strapdown inertial navigation for position prediction.

Frames: the body frame is x right, y forward, z up; the navigation frame is
east-north-up. Yaw is the heading measured clockwise from north, so a positive
rotation about body z (counter-clockwise seen from above) decreases yaw.

The mechanization follows the usual two-sample scheme: each update interval
carries two equal sub-samples of angular and velocity increments. Attitude is kept
as a direction cosine matrix and re-orthonormalized after every update; Euler
angles only appear at the API edge.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike, NDArray
from scipy.spatial.transform import Rotation
from typing_extensions import Protocol

from .earth import EarthModel
from .errors import NavigationError

logger = logging.getLogger(__name__)

ORTHONORMAL_TOLERANCE = 1e-9
ANGLE_TOLERANCE = 1e-12
# Timestamps closer than this are considered equal.
TIME_TOLERANCE = 1e-9
# Gauss-Legendre order used to integrate truth rates over each sub-sample.
QUADRATURE_ORDER = 8

TRACE_COLUMNS = [
    "t_start",
    "t_end",
    "dthx1",
    "dthy1",
    "dthz1",
    "dthx2",
    "dthy2",
    "dthz2",
    "dvx1",
    "dvy1",
    "dvz1",
    "dvx2",
    "dvy2",
    "dvz2",
]

Vector = NDArray[np.float64]


def wrap_angle(angle: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    wrapped = float(np.arctan2(np.sin(angle), np.cos(angle)))
    return np.pi if wrapped == -np.pi else wrapped


def _vec3(value: ArrayLike, name: str) -> Vector:
    arr = np.asarray(value, dtype=float)
    if arr.shape != (3,):
        raise NavigationError(f"{name} must be a 3-vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NavigationError(f"{name} must be finite: {arr}")
    return arr


@dataclass(frozen=True)
class EulerAngles:
    """Pitch, roll and yaw in radians.

    Raises:
        NavigationError: If an angle is not finite, pitch is outside
            [-pi/2, pi/2], or roll/yaw is outside (-pi, pi].
    """

    pitch: float
    roll: float
    yaw: float

    def __post_init__(self) -> None:
        if not np.all(np.isfinite([self.pitch, self.roll, self.yaw])):
            raise NavigationError(f"Euler angles must be finite: {self}")
        if abs(self.pitch) > np.pi / 2 + ANGLE_TOLERANCE:
            raise NavigationError(f"Pitch out of range: {self.pitch}")
        for name in ("roll", "yaw"):
            value = getattr(self, name)
            if not -np.pi < value <= np.pi:
                raise NavigationError(f"{name} out of (-pi, pi]: {value}")


@dataclass(frozen=True, eq=False)
class NavState:
    """Attitude, velocity and geodetic position of one UAV at one instant.

    Attributes:
        attitude: Body-to-navigation direction cosine matrix C_b^n.
        velocity: ENU velocity [V_E, V_N, V_U] in m/s.
        position: Geodetic [L, lambda, h] in rad, rad, m.
        timestamp: Seconds.
    """

    attitude: NDArray[np.float64]
    velocity: Vector
    position: Vector
    timestamp: float = 0.0

    def __post_init__(self) -> None:
        attitude = np.asarray(self.attitude, dtype=float)
        if attitude.shape != (3, 3):
            raise NavigationError(f"Attitude must be 3x3, got shape {attitude.shape}")
        object.__setattr__(self, "attitude", attitude)
        object.__setattr__(self, "velocity", _vec3(self.velocity, "velocity"))
        position = _vec3(self.position, "position")
        if abs(position[0]) > np.pi / 2:
            raise NavigationError(f"Latitude out of range: {position[0]}")
        object.__setattr__(self, "position", position)

    @classmethod
    def from_euler(
        cls,
        angles: EulerAngles,
        velocity: ArrayLike,
        position: ArrayLike,
        timestamp: float = 0.0,
    ) -> NavState:
        return cls(attitude_matrix(angles), np.asarray(velocity), np.asarray(position), timestamp)

    @property
    def euler(self) -> EulerAngles:
        return euler_angles(self.attitude)


@dataclass(frozen=True, eq=False)
class ImuSample:
    """Two equal sub-samples of body-frame increments over [t_start, t_end]."""

    t_start: float
    t_end: float
    dtheta1: Vector
    dtheta2: Vector
    dv1: Vector
    dv2: Vector

    def __post_init__(self) -> None:
        if not self.t_end > self.t_start:
            raise NavigationError(
                f"Sample interval must be positive: [{self.t_start}, {self.t_end}]"
            )
        for name in ("dtheta1", "dtheta2", "dv1", "dv2"):
            object.__setattr__(self, name, _vec3(getattr(self, name), name))

    @property
    def interval(self) -> float:
        return self.t_end - self.t_start

    def to_row(self) -> List[float]:
        return [
            self.t_start,
            self.t_end,
            *self.dtheta1,
            *self.dtheta2,
            *self.dv1,
            *self.dv2,
        ]

    @classmethod
    def from_row(cls, row: Sequence[float]) -> ImuSample:
        if len(row) != len(TRACE_COLUMNS):
            raise NavigationError(f"Trace row needs {len(TRACE_COLUMNS)} values, got {len(row)}")
        values = np.asarray(row, dtype=float)
        return cls(
            float(values[0]),
            float(values[1]),
            values[2:5],
            values[5:8],
            values[8:11],
            values[11:14],
        )


@dataclass(frozen=True, eq=False)
class ImuErrorModel:
    """Deterministic sensor errors added to simulated increments.

    Attributes:
        gyro_bias: Per-axis gyro bias in rad/s.
        accel_bias: Per-axis accelerometer bias in m/s^2.
        gyro_noise: Angle random walk density in rad/s/sqrt(Hz).
        accel_noise: Velocity random walk density in m/s^2/sqrt(Hz).
        seed: Seed of the noise stream. Each trace owns its own generator.
    """

    gyro_bias: Vector = field(default_factory=lambda: np.zeros(3))
    accel_bias: Vector = field(default_factory=lambda: np.zeros(3))
    gyro_noise: float = 0.0
    accel_noise: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "gyro_bias", _vec3(self.gyro_bias, "gyro_bias"))
        object.__setattr__(self, "accel_bias", _vec3(self.accel_bias, "accel_bias"))
        if self.gyro_noise < 0 or self.accel_noise < 0:
            raise NavigationError(
                f"Noise densities must be non-negative: gyro={self.gyro_noise}, "
                f"accel={self.accel_noise}"
            )

    @classmethod
    def calibrated(cls, seed: int = 0) -> ImuErrorModel:
        """Sensor errors tuned to a consumer-grade error envelope.

        Position error stays under 20 m for the first 100 s of free inertial
        navigation and reaches roughly 8% of the distance flown after 240 s.
        """
        return cls(
            gyro_bias=np.array([2e-7, 2e-7, 1e-6]),
            accel_bias=np.array([0.0, 0.002, 0.003]),
            gyro_noise=1e-6,
            accel_noise=5e-5,
            seed=seed,
        )

    def with_seed(self, seed: int) -> ImuErrorModel:
        return ImuErrorModel(
            self.gyro_bias, self.accel_bias, self.gyro_noise, self.accel_noise, seed
        )

    @property
    def is_zero(self) -> bool:
        return (
            not np.any(self.gyro_bias)
            and not np.any(self.accel_bias)
            and self.gyro_noise == 0.0
            and self.accel_noise == 0.0
        )


class TruthTrajectory(Protocol):
    """What the IMU simulator needs from a truth trajectory."""

    earth: EarthModel
    duration: float

    @property
    def breakpoints(self) -> NDArray[np.float64]: ...

    def position(self, t: ArrayLike) -> NDArray[np.float64]: ...

    def velocity(self, t: ArrayLike) -> NDArray[np.float64]: ...

    def acceleration(self, t: ArrayLike) -> NDArray[np.float64]: ...

    def attitude(self, t: ArrayLike) -> NDArray[np.float64]: ...

    def body_rate(self, t: ArrayLike) -> NDArray[np.float64]: ...


def attitude_matrix(a: EulerAngles) -> NDArray[np.float64]:
    """Return the body-to-navigation matrix C_b^n for the given Euler angles.

    Examples:
        >>> np.allclose(attitude_matrix(EulerAngles(0.0, 0.0, np.pi / 2)),
        ...             [[0, 1, 0], [-1, 0, 0], [0, 0, 1]])
        True
    """
    st, ct = np.sin(a.pitch), np.cos(a.pitch)
    sg, cg = np.sin(a.roll), np.cos(a.roll)
    sp, cp = np.sin(a.yaw), np.cos(a.yaw)
    return np.array(
        [
            [cg * cp + sg * sp * st, sp * ct, sg * cp - cg * sp * st],
            [-cg * sp + sg * cp * st, cp * ct, -sg * sp - cg * cp * st],
            [-sg * ct, st, cg * ct],
        ]
    )


def euler_angles(c: ArrayLike) -> EulerAngles:
    """Extract pitch, roll and yaw from C_b^n (inverse of :func:`attitude_matrix`)."""
    m = np.asarray(c, dtype=float)
    pitch = float(np.arcsin(np.clip(m[2, 1], -1.0, 1.0)))
    roll = wrap_angle(float(np.arctan2(-m[2, 0], m[2, 2])))
    yaw = wrap_angle(float(np.arctan2(m[0, 1], m[1, 1])))
    return EulerAngles(pitch, roll, yaw)


def orthonormality_error(c: NDArray[np.float64]) -> float:
    return float(np.max(np.abs(c @ c.T - np.eye(3))))


def orthonormalize(c: NDArray[np.float64]) -> NDArray[np.float64]:
    """Project a near-rotation matrix onto SO(3)."""
    u, _, vt = np.linalg.svd(c)
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, -1] = -u[:, -1]
        r = u @ vt
    return r


def skew(v: ArrayLike) -> NDArray[np.float64]:
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def nav_frame_rate(state: NavState, earth: EarthModel) -> Vector:
    """Rotation rate of the navigation frame relative to inertial space, in ENU."""
    lat, _, h = state.position
    return earth.earth_rate_n(lat) + earth.transport_rate_n(lat, h, state.velocity)


def propagate_attitude(
    prev: NavState, s: ImuSample, earth: EarthModel
) -> NDArray[np.float64]:
    """Advance C_b^n over one update interval.

    The body rotation uses the coning-compensated rotation vector of the two
    sub-samples; the navigation frame rotation uses the rate at the previous state.

    Raises:
        NavigationError: If the previous attitude is not orthonormal.
    """
    err = orthonormality_error(prev.attitude)
    if err > ORTHONORMAL_TOLERANCE or np.linalg.det(prev.attitude) <= 0:
        raise NavigationError(f"Attitude matrix is not a rotation (error {err:.3e})")

    phi = s.dtheta1 + s.dtheta2 + (2.0 / 3.0) * np.cross(s.dtheta1, s.dtheta2)
    body = Rotation.from_rotvec(phi).as_matrix()
    zeta = nav_frame_rate(prev, earth) * s.interval
    nav = Rotation.from_rotvec(zeta).as_matrix().T
    return orthonormalize(nav @ prev.attitude @ body)


def update_velocity(
    prev: NavState, s: ImuSample, c: NDArray[np.float64], earth: EarthModel
) -> Vector:
    """Advance the ENU velocity over one update interval.

    ``c`` is the end-of-interval attitude and is not used here: the specific force
    increment is projected with the start-of-interval attitude and half the
    navigation-frame rotation.
    """
    dtheta = s.dtheta1 + s.dtheta2
    dv = s.dv1 + s.dv2
    rotation = 0.5 * np.cross(dtheta, dv)
    sculling = (2.0 / 3.0) * (np.cross(s.dtheta1, s.dv2) + np.cross(s.dv1, s.dtheta2))
    dv_sf_b = dv + rotation + sculling

    lat, _, h = prev.position
    zeta = nav_frame_rate(prev, earth) * s.interval
    dv_sf_n = (np.eye(3) - 0.5 * skew(zeta)) @ prev.attitude @ dv_sf_b

    omega = 2.0 * earth.earth_rate_n(lat) + earth.transport_rate_n(lat, h, prev.velocity)
    dv_cor_g = (-np.cross(omega, prev.velocity) + earth.gravity_n(lat, h)) * s.interval
    return prev.velocity + dv_sf_n + dv_cor_g


def update_position(
    prev: NavState, v_prev: ArrayLike, v_new: ArrayLike, t: float, earth: EarthModel
) -> Vector:
    """Trapezoidal position update with M_pv taken at the interval midpoint.

    Raises:
        NavigationError: If ``t`` is not positive or the track reaches a pole.
    """
    if not t > 0:
        raise NavigationError(f"Update interval must be positive, got {t}")
    v_mean = 0.5 * (np.asarray(v_prev, dtype=float) + np.asarray(v_new, dtype=float))
    p = prev.position
    half = p + earth.pv_matrix(p[0], p[2]) @ v_mean * (t / 2.0)
    return p + earth.pv_matrix(half[0], half[2]) @ v_mean * t


def step(prev: NavState, s: ImuSample, earth: EarthModel) -> NavState:
    """One full attitude, velocity, position update."""
    c = propagate_attitude(prev, s, earth)
    v = update_velocity(prev, s, c, earth)
    p = update_position(prev, prev.velocity, v, s.interval, earth)
    return NavState(c, v, p, s.t_end)


def dead_reckon(
    init: NavState, trace: Sequence[ImuSample], earth: EarthModel
) -> List[NavState]:
    """Run the mechanization over a trace, returning the state at every epoch.

    Raises:
        NavigationError: If the trace does not start at ``init.timestamp`` or has
            gaps or overlaps.
    """
    states = [init]
    for s in trace:
        prev = states[-1]
        if abs(s.t_start - prev.timestamp) > TIME_TOLERANCE * max(1.0, abs(prev.timestamp)):
            raise NavigationError(
                f"Trace is not gap-free: sample starts at {s.t_start}, "
                f"state is at {prev.timestamp}"
            )
        states.append(step(prev, s, earth))
    logger.debug("Dead-reckoned %d epochs", len(trace))
    return states


def _check_continuity(truth: TruthTrajectory) -> None:
    eps = 1e-6
    for b in truth.breakpoints[1:-1]:
        jump = np.max(np.abs(truth.velocity(b + eps) - truth.velocity(b - eps)))
        if jump > 1e-3:
            raise NavigationError(f"Truth velocity is discontinuous at t={b}s (jump {jump:.3g})")


def _truth_rates(truth: TruthTrajectory) -> Callable[[NDArray[np.float64]], NDArray[np.float64]]:
    """Return f(t) -> stacked [omega_ib^b, f^b], shape (..., 6)."""
    earth = truth.earth

    def rates(t: NDArray[np.float64]) -> NDArray[np.float64]:
        p = truth.position(t)
        v = truth.velocity(t)
        lat, h = p[..., 0], p[..., 2]
        c_bn = truth.attitude(t)
        w_ie = earth.earth_rate_n(lat)
        w_en = earth.transport_rate_n(lat, h, v)
        w_in_b = np.einsum("...ji,...j->...i", c_bn, w_ie + w_en)
        omega = truth.body_rate(t) + w_in_b
        f_n = truth.acceleration(t) + np.cross(2.0 * w_ie + w_en, v) - earth.gravity_n(lat, h)
        f_b = np.einsum("...ji,...j->...i", c_bn, f_n)
        return np.concatenate([omega, f_b], axis=-1)

    return rates


def simulate_imu(
    truth: TruthTrajectory, err: ImuErrorModel, sample_dt: float, duration: float
) -> List[ImuSample]:
    """Generate a two-sample IMU trace along a truth trajectory.

    Increments are Gauss-Legendre integrals of the true body rates and specific
    forces, split at trajectory breakpoints so each piece is smooth, plus
    ``bias * dt`` and white noise of variance ``density**2 * dt``.

    Args:
        truth: Trajectory starting at t = 0.
        err: Sensor error model; its seed drives the noise stream.
        sample_dt: Sub-sample length in seconds (update interval is twice this).
        duration: Trace length in seconds, a multiple of ``2 * sample_dt``.

    Raises:
        NavigationError: On a non-positive step, a duration that is not a whole
            number of updates or exceeds the truth, or a discontinuous truth.
    """
    if not sample_dt > 0:
        raise NavigationError(f"sample_dt must be positive, got {sample_dt}")
    n_updates = int(round(duration / (2.0 * sample_dt)))
    if n_updates < 0 or abs(n_updates * 2.0 * sample_dt - duration) > 1e-9 * max(1.0, duration):
        raise NavigationError(
            f"Duration {duration}s is not a multiple of the {2 * sample_dt}s update interval"
        )
    if duration > truth.duration + 1e-9:
        raise NavigationError(f"Duration {duration}s exceeds the truth span {truth.duration}s")
    if n_updates == 0:
        return []
    _check_continuity(truth)

    grid = np.arange(2 * n_updates + 1) * sample_dt
    inner = [
        b
        for b in truth.breakpoints
        if 0.0 < b < grid[-1] and np.min(np.abs(grid - b)) > TIME_TOLERANCE
    ]
    edges = np.union1d(grid, inner)
    owners = np.searchsorted(grid, edges[:-1] + TIME_TOLERANCE, side="right") - 1

    nodes, weights = np.polynomial.legendre.leggauss(QUADRATURE_ORDER)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    t = mid[:, None] + half[:, None] * nodes[None, :]
    pieces = np.einsum("q,pqk->pk", weights, _truth_rates(truth)(t)) * half[:, None]
    starts = np.searchsorted(owners, np.arange(2 * n_updates))
    increments = np.add.reduceat(pieces, starts, axis=0)

    rng = np.random.default_rng(err.seed)
    gyro_noise = rng.normal(0.0, err.gyro_noise * np.sqrt(sample_dt), (2 * n_updates, 3))
    accel_noise = rng.normal(0.0, err.accel_noise * np.sqrt(sample_dt), (2 * n_updates, 3))
    dtheta = increments[:, :3] + err.gyro_bias * sample_dt + gyro_noise
    dv = increments[:, 3:] + err.accel_bias * sample_dt + accel_noise

    trace = [
        ImuSample(
            float(grid[2 * m]),
            float(grid[2 * m + 2]),
            dtheta[2 * m],
            dtheta[2 * m + 1],
            dv[2 * m],
            dv[2 * m + 1],
        )
        for m in range(n_updates)
    ]
    logger.debug("Simulated %d IMU updates at %.3gs sub-sampling", n_updates, sample_dt)
    return trace


def predict_slot_positions(
    fleet: Sequence[Tuple[NavState, Sequence[ImuSample]]],
    slot_duration: float,
    earth: EarthModel,
    n_slots: int = 2,
) -> NDArray[np.float64]:
    """Predict each UAV's ECEF position at the start of every slot.

    Args:
        fleet: Per-UAV initial state and IMU trace.
        slot_duration: Slot length in seconds.
        earth: Earth model for the mechanization and ECEF conversion.
        n_slots: Number of slots.

    Returns:
        Array of shape ``(n_slots, N, 3)``.

    Raises:
        NavigationError: If a trace is shorter than ``n_slots * slot_duration`` or
            a slot start does not fall on an update epoch.
    """
    positions = np.empty((n_slots, len(fleet), 3))
    for d, (init, trace) in enumerate(fleet):
        end = trace[-1].t_end if trace else init.timestamp
        horizon = init.timestamp + n_slots * slot_duration
        if end < horizon - TIME_TOLERANCE * max(1.0, horizon):
            raise NavigationError(
                f"Trace of UAV {d + 1} ends at {end}s, needs {horizon}s for {n_slots} slots"
            )
        last_start = init.timestamp + (n_slots - 1) * slot_duration
        needed = [s for s in trace if s.t_end <= last_start + TIME_TOLERANCE]
        states = dead_reckon(init, needed, earth)
        stamps = np.array([s.timestamp for s in states])
        for k in range(n_slots):
            target = init.timestamp + k * slot_duration
            i = int(np.argmin(np.abs(stamps - target)))
            if abs(stamps[i] - target) > 1e-6:
                raise NavigationError(
                    f"Slot start {target}s of UAV {d + 1} is not an update epoch"
                )
            positions[k, d] = earth.geodetic_to_ecef(states[i].position)
    return positions


def write_trace_csv(trace: Sequence[ImuSample], path: Union[str, Path]) -> None:
    """Write an IMU trace with one row per update interval."""
    frame = pd.DataFrame([s.to_row() for s in trace], columns=TRACE_COLUMNS)
    frame.to_csv(path, index=False)


def read_trace_csv(path: Union[str, Path]) -> List[ImuSample]:
    """Read a trace written by :func:`write_trace_csv`.

    Raises:
        NavigationError: If the header does not match the trace columns.
    """
    frame = pd.read_csv(path, float_precision="round_trip")
    if list(frame.columns) != TRACE_COLUMNS:
        raise NavigationError(f"Unexpected trace columns: {list(frame.columns)}")
    return [ImuSample.from_row(row) for row in frame.to_numpy(dtype=float)]


def position_errors(
    estimated: Sequence[NavState], truth: TruthTrajectory, earth: Optional[EarthModel] = None
) -> NDArray[np.float64]:
    """Return the metric position error of each estimated state against truth."""
    earth = earth or truth.earth
    stamps = np.array([s.timestamp for s in estimated])
    est = np.array([s.position for s in estimated])
    return np.linalg.norm(
        earth.geodetic_to_ecef(est) - earth.geodetic_to_ecef(truth.position(stamps)), axis=-1
    )
