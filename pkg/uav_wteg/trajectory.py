"""Piecewise truth trajectories for simulated UAVs.

A trajectory is a chain of ``cruise`` (constant velocity) and ``turn`` (constant
heading rate at constant speed) segments. Velocity must be continuous across
segment boundaries. The geodetic track is obtained by integrating the ENU velocity
with ``scipy.integrate.solve_ivp`` one segment at a time, so every kinematic quantity
the IMU simulator needs is available at arbitrary, vectorized query times.

Attitude follows the flight path: yaw equals the heading (clockwise from north),
pitch and roll stay zero.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.integrate import OdeSolution, solve_ivp

from .earth import EarthModel
from .errors import TrajectoryError
from .sins import EulerAngles, NavState, attitude_matrix, wrap_angle

logger = logging.getLogger(__name__)

# Velocities closer than this (m/s, rad) are treated as continuous.
CONTINUITY_TOLERANCE = 1e-9
# Queries may overshoot the time span by this much (floating-point slack).
TIME_SLACK = 1e-9


class SegmentKind(Enum):
    """Motion primitive of a trajectory segment."""

    CRUISE = "cruise"
    TURN = "turn"


@dataclass(frozen=True)
class Segment:
    """One piece of a truth trajectory.

    Fields left as ``None`` inherit the value at the end of the previous segment
    (zero for the first segment). A field that is given must match the inherited
    value, otherwise the velocity would jump.

    Attributes:
        kind: Cruise or turn.
        duration: Segment length in seconds.
        speed: Horizontal ground speed in m/s.
        heading: Heading in radians, clockwise from north.
        climb_rate: Vertical speed in m/s.
        turn_rate: Heading rate in rad/s (turn segments only).
    """

    kind: SegmentKind
    duration: float
    speed: Optional[float] = None
    heading: Optional[float] = None
    climb_rate: Optional[float] = None
    turn_rate: float = 0.0

    def __post_init__(self) -> None:
        if not self.duration > 0:
            raise TrajectoryError(f"Segment duration must be positive, got {self.duration}")
        if self.speed is not None and self.speed < 0:
            raise TrajectoryError(f"Segment speed must be non-negative, got {self.speed}")
        if self.kind is SegmentKind.CRUISE and self.turn_rate != 0.0:
            raise TrajectoryError("Cruise segments cannot have a turn rate")

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> Segment:
        """Build a segment from a scenario mapping (angles in degrees)."""
        try:
            kind = SegmentKind(data["kind"])
        except (KeyError, ValueError) as e:
            raise TrajectoryError(f"Unknown segment kind: {data.get('kind')!r}") from e
        heading = data.get("heading_deg")
        return cls(
            kind=kind,
            duration=float(data["duration_s"]),
            speed=None if data.get("speed_mps") is None else float(data["speed_mps"]),
            heading=None if heading is None else float(np.radians(heading)),
            climb_rate=None if data.get("climb_mps") is None else float(data["climb_mps"]),
            turn_rate=float(np.radians(data.get("turn_rate_dps", 0.0))),
        )


class Trajectory:
    """A continuous-velocity trajectory starting at a geodetic position.

    Args:
        start: Initial ``[L, lambda, h]`` (rad, rad, m).
        segments: Motion segments, in order.
        earth: Earth model used to integrate the geodetic track.

    Raises:
        TrajectoryError: If there are no segments or the velocity is discontinuous
            at a segment boundary.
    """

    def __init__(
        self, start: ArrayLike, segments: Sequence[Segment], earth: EarthModel
    ) -> None:
        if not segments:
            raise TrajectoryError("A trajectory needs at least one segment")
        self.earth = earth
        self.segments: Tuple[Segment, ...] = tuple(segments)
        self._start_position = np.asarray(start, dtype=float)

        starts: List[float] = []
        speeds: List[float] = []
        headings: List[float] = []
        climbs: List[float] = []
        rates: List[float] = []
        t = 0.0
        speed = heading = climb = 0.0
        for i, seg in enumerate(self.segments):
            speed = self._inherit(seg.speed, speed, i == 0, "speed", t)
            heading = self._inherit(seg.heading, heading, i == 0, "heading", t)
            climb = self._inherit(seg.climb_rate, climb, i == 0, "climb rate", t)
            starts.append(t)
            speeds.append(speed)
            headings.append(heading)
            climbs.append(climb)
            rates.append(seg.turn_rate)
            heading += seg.turn_rate * seg.duration
            t += seg.duration

        self.duration = t
        self._starts = np.array(starts)
        self._speeds = np.array(speeds)
        self._headings = np.array(headings)
        self._climbs = np.array(climbs)
        self._rates = np.array(rates)
        self._tracks = self._integrate_track()

    @staticmethod
    def _inherit(
        given: Optional[float], current: float, first: bool, name: str, t: float
    ) -> float:
        if given is None:
            return current
        if not first and abs(given - current) > CONTINUITY_TOLERANCE:
            raise TrajectoryError(
                f"Velocity discontinuity at t={t:.3f}s: {name} jumps from "
                f"{current:.6f} to {given:.6f}"
            )
        return given

    @property
    def breakpoints(self) -> NDArray[np.float64]:
        """Segment boundary times, including 0 and the end time."""
        return np.append(self._starts, self.duration)

    def _integrate_track(self) -> List[OdeSolution]:
        def rates(t: float, y: NDArray[np.float64]) -> NDArray[np.float64]:
            v = self.velocity(t)
            r_m, r_n = self.earth.radii(y[0])
            return np.array(
                [
                    v[1] / (float(r_m) + y[2]),
                    v[0] / ((float(r_n) + y[2]) * np.cos(y[0])),
                    v[2],
                ]
            )

        tracks = []
        y0 = self._start_position
        for t0, seg in zip(self._starts, self.segments):
            sol = solve_ivp(
                rates,
                (t0, t0 + seg.duration),
                y0,
                method="DOP853",
                dense_output=True,
                rtol=1e-12,
                atol=[1e-15, 1e-15, 1e-9],
            )
            if not sol.success:
                raise TrajectoryError(f"Track integration failed: {sol.message}")
            tracks.append(sol.sol)
            y0 = sol.y[:, -1]
        logger.debug("Integrated %d segments over %.1fs", len(tracks), self.duration)
        return tracks

    def _index(self, t: NDArray[np.float64]) -> NDArray[np.intp]:
        if np.any(t < -TIME_SLACK) or np.any(t > self.duration + TIME_SLACK):
            raise TrajectoryError(
                f"Query time outside [0, {self.duration}]: "
                f"[{float(np.min(t))}, {float(np.max(t))}]"
            )
        idx = np.searchsorted(self._starts, t, side="right") - 1
        return np.asarray(np.clip(idx, 0, len(self._starts) - 1))

    def heading(self, t: ArrayLike) -> NDArray[np.float64]:
        """Heading (rad, clockwise from north) at time(s) ``t``."""
        ta = np.asarray(t, dtype=float)
        i = self._index(ta)
        return self._headings[i] + self._rates[i] * (ta - self._starts[i])

    def velocity(self, t: ArrayLike) -> NDArray[np.float64]:
        """ENU velocity at time(s) ``t``, shape ``(..., 3)``."""
        ta = np.asarray(t, dtype=float)
        i = self._index(ta)
        psi = self._headings[i] + self._rates[i] * (ta - self._starts[i])
        s = self._speeds[i]
        return np.stack([s * np.sin(psi), s * np.cos(psi), self._climbs[i]], axis=-1)

    def acceleration(self, t: ArrayLike) -> NDArray[np.float64]:
        """Time derivative of the ENU velocity components."""
        ta = np.asarray(t, dtype=float)
        i = self._index(ta)
        psi = self._headings[i] + self._rates[i] * (ta - self._starts[i])
        k = self._speeds[i] * self._rates[i]
        return np.stack([k * np.cos(psi), -k * np.sin(psi), np.zeros_like(psi)], axis=-1)

    def body_rate(self, t: ArrayLike) -> NDArray[np.float64]:
        """Angular rate of the body relative to the navigation frame, in body axes."""
        ta = np.asarray(t, dtype=float)
        r = self._rates[self._index(ta)]
        zero = np.zeros_like(r)
        return np.stack([zero, zero, -r], axis=-1)

    def attitude(self, t: ArrayLike) -> NDArray[np.float64]:
        """Body-to-ENU attitude matrices, shape ``(..., 3, 3)``."""
        psi = self.heading(t)
        c, s = np.cos(psi), np.sin(psi)
        zero, one = np.zeros_like(psi), np.ones_like(psi)
        rows = [
            np.stack([c, s, zero], axis=-1),
            np.stack([-s, c, zero], axis=-1),
            np.stack([zero, zero, one], axis=-1),
        ]
        return np.stack(rows, axis=-2)

    def position(self, t: ArrayLike) -> NDArray[np.float64]:
        """Geodetic ``[L, lambda, h]`` at time(s) ``t``, shape ``(..., 3)``."""
        ta = np.asarray(t, dtype=float)
        i = self._index(ta)
        flat_t = ta.ravel()
        flat_i = np.ravel(i)
        out = np.empty((flat_t.size, 3))
        for seg_index in np.unique(flat_i):
            mask = flat_i == seg_index
            out[mask] = self._tracks[seg_index](flat_t[mask]).T
        return out.reshape(ta.shape + (3,))

    def state(self, t: float) -> NavState:
        """Truth navigation state at time ``t``."""
        return NavState(
            attitude=attitude_matrix(EulerAngles(0.0, 0.0, wrap_angle(float(self.heading(t))))),
            velocity=self.velocity(t),
            position=self.position(t),
            timestamp=float(t),
        )


# Single-UAV survey track: 240 s from 29N 106E at 450 m, about 1316 m north and
# 110 m west overall (north leg, gentle left turn, north-by-west leg).
SURVEY_START_DEG = (29.0, 106.0)
SURVEY_HEIGHT_M = 450.0
SURVEY_SPEED_MPS = 5.517798
SURVEY_TURN_RATE = -0.154 / 20.0


def survey_track(earth: Optional[EarthModel] = None) -> Trajectory:
    """Return the shipped single-UAV survey trajectory."""
    earth = earth or EarthModel()
    start = [np.radians(SURVEY_START_DEG[0]), np.radians(SURVEY_START_DEG[1]), SURVEY_HEIGHT_M]
    segments = [
        Segment(SegmentKind.CRUISE, 100.0, speed=SURVEY_SPEED_MPS, heading=0.0, climb_rate=0.0),
        Segment(SegmentKind.TURN, 20.0, turn_rate=SURVEY_TURN_RATE),
        Segment(SegmentKind.CRUISE, 120.0),
    ]
    return Trajectory(start, segments, earth)
