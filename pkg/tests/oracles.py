"""Independent reference implementations used only to check the real code.

These deliberately use different formulations than the package: the
transverse Mercator oracle is Snyder's e^2 power series (Working Manual
eqs. 8-9..8-13) rather than the Krueger n-series, the meridian arc comes
from direct quadrature, and ray/plane geometry is done with explicit
rotation matrices.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad


def snyder_tm_forward(
    lat_deg: float,
    lon_deg: float,
    central_meridian_deg: float,
    a: float = 6_378_137.0,
    f: float = 1.0 / 298.257_223_563,
    k0: float = 0.9996,
) -> tuple[float, float]:
    """Transverse Mercator forward projection, Snyder's series.

    Returns (x, y) relative to the central meridian and equator (no false
    easting/northing applied).
    """
    e2 = f * (2 - f)
    ep2 = e2 / (1 - e2)
    phi = math.radians(lat_deg)
    dlam = math.radians(lon_deg - central_meridian_deg)

    N = a / math.sqrt(1 - e2 * math.sin(phi) ** 2)
    T = math.tan(phi) ** 2
    C = ep2 * math.cos(phi) ** 2
    A = dlam * math.cos(phi)

    M = meridian_arc_series(phi, a, e2)

    x = k0 * N * (
        A
        + (1 - T + C) * A**3 / 6
        + (5 - 18 * T + T**2 + 72 * C - 58 * ep2) * A**5 / 120
    )
    y = k0 * (
        M
        + N * math.tan(phi) * (
            A**2 / 2
            + (5 - T + 9 * C + 4 * C**2) * A**4 / 24
            + (61 - 58 * T + T**2 + 600 * C - 330 * ep2) * A**6 / 720
        )
    )
    return x, y


def meridian_arc_series(phi: float, a: float, e2: float) -> float:
    """Meridian distance from the equator, Snyder eq. 3-21."""
    return a * (
        (1 - e2 / 4 - 3 * e2**2 / 64 - 5 * e2**3 / 256) * phi
        - (3 * e2 / 8 + 3 * e2**2 / 32 + 45 * e2**3 / 1024) * math.sin(2 * phi)
        + (15 * e2**2 / 256 + 45 * e2**3 / 1024) * math.sin(4 * phi)
        - (35 * e2**3 / 3072) * math.sin(6 * phi)
    )


def meridian_arc_quad(
    lat_deg: float,
    a: float = 6_378_137.0,
    f: float = 1.0 / 298.257_223_563,
) -> float:
    """Meridian distance by numerical quadrature of the arc integrand."""
    e2 = f * (2 - f)

    def integrand(theta: float) -> float:
        return (1 - e2 * math.sin(theta) ** 2) ** -1.5

    val, _ = quad(integrand, 0.0, math.radians(lat_deg), epsabs=1e-13, epsrel=1e-13)
    return a * (1 - e2) * val


def spherical_convergence(lat_deg: float, lon_deg: float, zone: int) -> float:
    """Grid convergence on the sphere: atan(tan(dlam) * sin(lat)), degrees."""
    dlam = math.radians(lon_deg - (zone * 6 - 183))
    return math.degrees(math.atan(math.tan(dlam) * math.sin(math.radians(lat_deg))))


def euler_zyx_matrix(roll_deg: float, pitch_deg: float, yaw_deg: float) -> np.ndarray:
    """Rotation matrix body->NED for aerospace ZYX Euler angles in degrees."""
    r, p, y = (math.radians(roll_deg), math.radians(pitch_deg), math.radians(yaw_deg))
    cr, sr = math.cos(r), math.sin(r)
    cp, sp = math.cos(p), math.sin(p)
    cy, sy = math.cos(y), math.sin(y)
    rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    return rz @ ry @ rx


def ray_ground_intersection(
    camera_ned: np.ndarray,
    direction_ned: np.ndarray,
    ground_down: float,
) -> tuple[np.ndarray, float]:
    """Intersect a ray from the camera with the horizontal plane at ground_down.

    Returns ((north, east), scale) where scale extends the direction vector
    to the plane. Raises ValueError for rays that do not descend.
    """
    dd = direction_ned[2]
    if dd <= 1e-12:
        raise ValueError("ray does not descend toward the ground plane")
    s = (ground_down - camera_ned[2]) / dd
    hit = camera_ned + s * direction_ned
    return hit[:2].copy(), float(s)
