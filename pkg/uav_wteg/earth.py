"""Earth model used by the inertial mechanization and the truth trajectories.

Geodetic positions are ``[L, lambda, h]`` (latitude rad, longitude rad, height m);
navigation-frame vectors are east-north-up. All helpers accept scalars or numpy
arrays so the trajectory generator can evaluate many epochs at once.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import NavigationError

WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
EARTH_RATE = 7.292115e-5

# Normal gravity series (equator value and latitude/height coefficients).
_G_EQUATOR = 9.7803267714
_G_SIN2 = 5.27094e-3
_G_SIN4 = 2.32718e-5
_G_HEIGHT = 3.086e-6

# Latitudes closer than this to a pole make the position matrix singular.
POLE_MARGIN = 1e-6


@dataclass(frozen=True)
class EarthModel:
    """Reference ellipsoid, gravity and rotation constants.

    Attributes:
        equatorial_radius: Semi-major axis in metres.
        flattening: Ellipsoid flattening.
        rotation_rate: Earth rotation rate in rad/s. Zero gives a non-rotating
            navigation frame, which the analytic test cases rely on.
        gravity: Constant gravity magnitude in m/s^2. ``None`` selects the normal
            gravity model g(L, h).

    Raises:
        ValueError: If the radius is not positive, the flattening is outside
            [0, 1), or the rotation rate or gravity is negative.
    """

    equatorial_radius: float = WGS84_A
    flattening: float = WGS84_F
    rotation_rate: float = EARTH_RATE
    gravity: Optional[float] = None

    def __post_init__(self) -> None:
        if self.equatorial_radius <= 0:
            raise ValueError(f"Invalid equatorial radius: {self.equatorial_radius}")
        if not 0.0 <= self.flattening < 1.0:
            raise ValueError(f"Invalid flattening: {self.flattening}")
        if self.rotation_rate < 0:
            raise ValueError(f"Invalid rotation rate: {self.rotation_rate}")
        if self.gravity is not None and self.gravity < 0:
            raise ValueError(f"Invalid gravity override: {self.gravity}")

    @property
    def e2(self) -> float:
        """First eccentricity squared."""
        return self.flattening * (2.0 - self.flattening)

    def radii(self, lat: ArrayLike) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Return the meridian (R_M) and prime-vertical (R_N) radii at ``lat``."""
        s2 = np.sin(np.asarray(lat, dtype=float)) ** 2
        w = 1.0 - self.e2 * s2
        r_n = self.equatorial_radius / np.sqrt(w)
        r_m = r_n * (1.0 - self.e2) / w
        return r_m, r_n

    def gravity_magnitude(self, lat: ArrayLike, h: ArrayLike) -> NDArray[np.float64]:
        """Return the gravity magnitude in m/s^2 at latitude ``lat`` and height ``h``."""
        lat_arr = np.asarray(lat, dtype=float)
        if self.gravity is not None:
            return np.full_like(lat_arr, self.gravity)
        s2 = np.sin(lat_arr) ** 2
        g0 = _G_EQUATOR * (1.0 + _G_SIN2 * s2 + _G_SIN4 * s2 * s2)
        return g0 - _G_HEIGHT * np.asarray(h, dtype=float)

    def gravity_n(self, lat: ArrayLike, h: ArrayLike) -> NDArray[np.float64]:
        """Return the gravity vector in the ENU frame (pointing down)."""
        g = self.gravity_magnitude(lat, h)
        zero = np.zeros_like(g)
        return np.stack([zero, zero, -g], axis=-1)

    def earth_rate_n(self, lat: ArrayLike) -> NDArray[np.float64]:
        """Return the earth rotation rate expressed in the ENU frame."""
        lat_arr = np.asarray(lat, dtype=float)
        w = self.rotation_rate
        return np.stack(
            [np.zeros_like(lat_arr), w * np.cos(lat_arr), w * np.sin(lat_arr)], axis=-1
        )

    def transport_rate_n(
        self, lat: ArrayLike, h: ArrayLike, vel: ArrayLike
    ) -> NDArray[np.float64]:
        """Return the rotation rate of the ENU frame over the ellipsoid.

        Args:
            lat: Latitude in radians.
            h: Height in metres.
            vel: ENU velocity, shape ``(..., 3)``.
        """
        lat_arr = np.asarray(lat, dtype=float)
        h_arr = np.asarray(h, dtype=float)
        v = np.asarray(vel, dtype=float)
        r_m, r_n = self.radii(lat_arr)
        v_e, v_n = v[..., 0], v[..., 1]
        return np.stack(
            [
                -v_n / (r_m + h_arr),
                v_e / (r_n + h_arr),
                v_e * np.tan(lat_arr) / (r_n + h_arr),
            ],
            axis=-1,
        )

    def pv_matrix(self, lat: float, h: float) -> NDArray[np.float64]:
        """Return M_pv, mapping ENU velocity to geodetic rates [L', lambda', h'].

        Raises:
            NavigationError: If ``lat`` is within ``POLE_MARGIN`` of a pole.
        """
        if abs(lat) > np.pi / 2 - POLE_MARGIN:
            raise NavigationError(f"Position matrix is singular at latitude {lat:.9f} rad")
        r_m, r_n = self.radii(lat)
        return np.array(
            [
                [0.0, 1.0 / (float(r_m) + h), 0.0],
                [1.0 / ((float(r_n) + h) * np.cos(lat)), 0.0, 0.0],
                [0.0, 0.0, 1.0],
            ]
        )

    def geodetic_to_ecef(self, position: ArrayLike) -> NDArray[np.float64]:
        """Convert ``[L, lambda, h]`` (shape ``(..., 3)``) to ECEF metres."""
        p = np.asarray(position, dtype=float)
        lat, lon, h = p[..., 0], p[..., 1], p[..., 2]
        _, r_n = self.radii(lat)
        cos_lat = np.cos(lat)
        return np.stack(
            [
                (r_n + h) * cos_lat * np.cos(lon),
                (r_n + h) * cos_lat * np.sin(lon),
                (r_n * (1.0 - self.e2) + h) * np.sin(lat),
            ],
            axis=-1,
        )

    def enu_offset_to_geodetic(
        self, reference: ArrayLike, offset: ArrayLike
    ) -> NDArray[np.float64]:
        """Place a point ``offset`` metres (east, north, up) from ``reference``.

        Uses the local radii of curvature at the reference point, which is accurate
        to well under a metre for the few-kilometre fleets simulated here.
        """
        ref = np.asarray(reference, dtype=float)
        e, n, u = np.asarray(offset, dtype=float)
        r_m, r_n = self.radii(ref[0])
        lat = ref[0] + n / (float(r_m) + ref[2])
        lon = ref[1] + e / ((float(r_n) + ref[2]) * np.cos(ref[0]))
        return np.array([lat, lon, ref[2] + u])

    def local_displacement(
        self, reference: ArrayLike, position: ArrayLike
    ) -> NDArray[np.float64]:
        """Return the (east, north, up) metres from ``reference`` to ``position``."""
        ref = np.asarray(reference, dtype=float)
        p = np.asarray(position, dtype=float)
        r_m, r_n = self.radii(ref[0])
        d = p - ref
        return np.stack(
            [
                d[..., 1] * (float(r_n) + ref[2]) * np.cos(ref[0]),
                d[..., 0] * (float(r_m) + ref[2]),
                d[..., 2],
            ],
            axis=-1,
        )
