"""Geodetic coordinate transforms and pose handling.

WGS84 lat/lon is projected to UTM (Krueger series in the third flattening,
carried to n^6, which is sub-millimeter over a zone), then shifted into a
local North-East-Down frame so the rest of the pipeline works in small
metric coordinates. Orientations are unit quaternions mapping the camera
frame to NED; identity means the camera aims straight down with the top of
the capture line pointing north.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

# WGS84 ellipsoid
WGS84_A = 6_378_137.0
WGS84_F = 1.0 / 298.257_223_563
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)
WGS84_E = math.sqrt(WGS84_E2)

UTM_K0 = 0.9996
UTM_FALSE_EASTING = 500_000.0
UTM_FALSE_NORTHING_SOUTH = 10_000_000.0

# Third flattening and the rectifying radius A = a/(1+n) (1 + n^2/4 + n^4/64 + n^6/256)
_N = WGS84_F / (2.0 - WGS84_F)
_A_BAR = WGS84_A / (1.0 + _N) * (1.0 + _N**2 / 4.0 + _N**4 / 64.0 + _N**6 / 256.0)

# Krueger series coefficients in n, truncated at n^6.
_ALPHA = (
    _N / 2 - 2 * _N**2 / 3 + 5 * _N**3 / 16 + 41 * _N**4 / 180
    - 127 * _N**5 / 288 + 7891 * _N**6 / 37800,
    13 * _N**2 / 48 - 3 * _N**3 / 5 + 557 * _N**4 / 1440 + 281 * _N**5 / 630
    - 1983433 * _N**6 / 1935360,
    61 * _N**3 / 240 - 103 * _N**4 / 140 + 15061 * _N**5 / 26880
    + 167603 * _N**6 / 181440,
    49561 * _N**4 / 161280 - 179 * _N**5 / 168 + 6601661 * _N**6 / 7257600,
    34729 * _N**5 / 80640 - 3418889 * _N**6 / 1995840,
    212378941 * _N**6 / 319334400,
)
_BETA = (
    _N / 2 - 2 * _N**2 / 3 + 37 * _N**3 / 96 - _N**4 / 360
    - 81 * _N**5 / 512 + 96199 * _N**6 / 604800,
    _N**2 / 48 + _N**3 / 15 - 437 * _N**4 / 1440 + 46 * _N**5 / 105
    - 1118711 * _N**6 / 3870720,
    17 * _N**3 / 480 - 37 * _N**4 / 840 - 209 * _N**5 / 4480
    + 5569 * _N**6 / 90720,
    4397 * _N**4 / 161280 - 11 * _N**5 / 504 - 830251 * _N**6 / 7257600,
    4583 * _N**5 / 161280 - 108847 * _N**6 / 3991680,
    20648693 * _N**6 / 638668800,
)


class UnsupportedLatitudeError(ValueError):
    """Latitude outside the UTM domain (|lat| > 84 deg)."""


class ZoneMismatchError(ValueError):
    """Coordinates from different UTM zones were combined."""


class PoseExtrapolationError(ValueError):
    """A line exposure time falls outside the INS record span."""


@dataclass(frozen=True)
class GeodeticPoint:
    """WGS84 position; latitude/longitude in degrees, altitude in meters above the ellipsoid."""

    latitude: float
    longitude: float
    altitude: float = 0.0

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude {self.latitude} outside [-90, 90]")
        if not -180.0 <= self.longitude < 180.0:
            raise ValueError(f"longitude {self.longitude} outside [-180, 180)")


@dataclass(frozen=True)
class UtmCoordinate:
    easting: float
    northing: float
    zone: int
    hemisphere: str  # "north" | "south"

    def __post_init__(self):
        if not 1 <= self.zone <= 60:
            raise ValueError(f"UTM zone {self.zone} outside [1, 60]")
        if self.hemisphere not in ("north", "south"):
            raise ValueError(f"hemisphere must be 'north' or 'south', got {self.hemisphere!r}")
        if not 0.0 < self.easting < 1_000_000.0:
            raise ValueError(f"easting {self.easting} outside (0, 1e6)")


@dataclass(frozen=True)
class NedPoint:
    """Meters in a local North-East-Down frame; down is positive toward the Earth."""

    north: float
    east: float
    down: float

    def as_array(self) -> np.ndarray:
        return np.array([self.north, self.east, self.down], dtype=np.float64)


@dataclass(frozen=True)
class NedOrigin:
    """Declared origin of a collection's NED frame: a UTM point plus reference altitude."""

    utm: UtmCoordinate
    altitude: float


@dataclass(frozen=True)
class InsRecord:
    timestamp: float
    position: GeodeticPoint
    roll: float   # degrees
    pitch: float  # degrees
    yaw: float    # degrees, from true north


def natural_zone(longitude: float) -> int:
    """UTM zone containing the given longitude: floor(lon/6) + 31."""
    zone = int(math.floor(longitude / 6.0)) + 31
    return min(max(zone, 1), 60)


def _conformal_tan(phi: float) -> float:
    s = math.sin(phi)
    return math.sinh(math.atanh(s) - WGS84_E * math.atanh(WGS84_E * s))


def wgs84_to_utm(p: GeodeticPoint, zone: int | None = None) -> UtmCoordinate:
    """Project a geodetic point to UTM.

    If ``zone`` is omitted the natural zone of the longitude is used. Raises
    UnsupportedLatitudeError beyond +/-84 degrees where UTM is undefined.
    """
    if abs(p.latitude) > 84.0:
        raise UnsupportedLatitudeError(
            f"latitude {p.latitude} outside UTM domain [-84, 84]"
        )
    if zone is None:
        zone = natural_zone(p.longitude)
    elif not 1 <= zone <= 60:
        raise ValueError(f"UTM zone {zone} outside [1, 60]")

    lam0 = math.radians(zone * 6 - 183)
    phi = math.radians(p.latitude)
    dlam = math.radians(p.longitude) - lam0
    if dlam > math.pi:
        dlam -= 2 * math.pi
    elif dlam < -math.pi:
        dlam += 2 * math.pi

    t = _conformal_tan(phi)
    cos_dlam = math.cos(dlam)
    xi_p = math.atan2(t, cos_dlam)
    eta_p = math.asinh(math.sin(dlam) / math.hypot(t, cos_dlam))

    xi = xi_p
    eta = eta_p
    for j, a in enumerate(_ALPHA, start=1):
        xi += a * math.sin(2 * j * xi_p) * math.cosh(2 * j * eta_p)
        eta += a * math.cos(2 * j * xi_p) * math.sinh(2 * j * eta_p)

    easting = UTM_FALSE_EASTING + UTM_K0 * _A_BAR * eta
    northing = UTM_K0 * _A_BAR * xi
    hemisphere = "north" if p.latitude >= 0.0 else "south"
    if hemisphere == "south":
        northing += UTM_FALSE_NORTHING_SOUTH
    return UtmCoordinate(easting, northing, zone, hemisphere)


def utm_to_wgs84(u: UtmCoordinate, altitude: float = 0.0) -> GeodeticPoint:
    """Invert the UTM projection. Exact to float precision via Newton iteration."""
    northing = u.northing
    if u.hemisphere == "south":
        northing -= UTM_FALSE_NORTHING_SOUTH
    xi = northing / (UTM_K0 * _A_BAR)
    eta = (u.easting - UTM_FALSE_EASTING) / (UTM_K0 * _A_BAR)

    xi_p = xi
    eta_p = eta
    for j, b in enumerate(_BETA, start=1):
        xi_p -= b * math.sin(2 * j * xi) * math.cosh(2 * j * eta)
        eta_p -= b * math.cos(2 * j * xi) * math.sinh(2 * j * eta)

    sinh_eta = math.sinh(eta_p)
    cos_xi = math.cos(xi_p)
    tau_p = math.sin(xi_p) / math.hypot(sinh_eta, cos_xi)
    dlam = math.atan2(sinh_eta, cos_xi)

    # Newton-invert the conformal latitude: solve tau from tau'.
    tau = tau_p / (1.0 - WGS84_E2)
    for _ in range(8):
        sigma = math.sinh(WGS84_E * math.atanh(WGS84_E * tau / math.hypot(1.0, tau)))
        f = tau * math.hypot(1.0, sigma) - sigma * math.hypot(1.0, tau) - tau_p
        df = (
            (math.hypot(1.0, sigma) * math.hypot(1.0, tau) - sigma * tau)
            * (1.0 - WGS84_E2)
            * math.hypot(1.0, tau)
            / (1.0 + (1.0 - WGS84_E2) * tau * tau)
        )
        step = f / df
        tau -= step
        if abs(step) < 1e-16 * max(1.0, abs(tau)):
            break

    lat = math.degrees(math.atan(tau))
    lon = math.degrees(math.radians(u.zone * 6 - 183) + dlam)
    if lon >= 180.0:
        lon -= 360.0
    elif lon < -180.0:
        lon += 360.0
    return GeodeticPoint(lat, lon, altitude)


def grid_convergence(p: GeodeticPoint, zone: int) -> float:
    """Angle in degrees between grid north and true north at ``p``.

    Positive for points east of the central meridian in the northern
    hemisphere (grid north lies east of true north there); zero on the
    central meridian.
    """
    lam0 = math.radians(zone * 6 - 183)
    dlam = math.radians(p.longitude) - lam0
    t = _conformal_tan(math.radians(p.latitude))
    cos_dlam = math.cos(dlam)
    xi_p = math.atan2(t, cos_dlam)
    eta_p = math.asinh(math.sin(dlam) / math.hypot(t, cos_dlam))

    num = 1.0
    den = 0.0
    for j, a in enumerate(_ALPHA, start=1):
        num += 2 * j * a * math.cos(2 * j * xi_p) * math.cosh(2 * j * eta_p)
        den += 2 * j * a * math.sin(2 * j * xi_p) * math.sinh(2 * j * eta_p)

    gamma = math.atan(t / math.hypot(1.0, t) * math.tan(dlam)) + math.atan2(den, num)
    return math.degrees(gamma)


def select_zone(track: list[GeodeticPoint]) -> tuple[int, str]:
    """Pick one UTM zone and hemisphere for a whole collection.

    Uses the track centroid; a centroid exactly on a zone boundary goes to
    the lower-numbered zone. A track spanning more than two natural zones
    gets a warning but still uses the centroid zone (flight areas are
    assumed small).
    """
    if not track:
        raise ValueError("empty track")
    lats = np.array([p.latitude for p in track])
    lons_rad = np.radians([p.longitude for p in track])
    # circular mean keeps antimeridian-straddling tracks sane
    lon_c = math.degrees(
        math.atan2(float(np.mean(np.sin(lons_rad))), float(np.mean(np.cos(lons_rad))))
    )
    if lon_c >= 180.0:
        lon_c -= 360.0

    zone = natural_zone(lon_c)
    if lon_c % 6.0 == 0.0 and zone > 1:
        zone -= 1  # boundary tie-break: lower-numbered zone

    spanned = {natural_zone(p.longitude) for p in track}
    if len(spanned) > 2:
        warnings.warn(
            f"track spans {len(spanned)} UTM zones {sorted(spanned)}; "
            f"using centroid zone {zone} for the whole collection",
            stacklevel=2,
        )
    hemisphere = "north" if float(np.mean(lats)) >= 0.0 else "south"
    return zone, hemisphere


def to_ned(u: UtmCoordinate, altitude: float, origin: NedOrigin) -> NedPoint:
    """Shift a UTM coordinate + altitude into the collection's NED frame."""
    if (u.zone, u.hemisphere) != (origin.utm.zone, origin.utm.hemisphere):
        raise ZoneMismatchError(
            f"point in zone {u.zone}{u.hemisphere[0].upper()} but origin in "
            f"zone {origin.utm.zone}{origin.utm.hemisphere[0].upper()}"
        )
    return NedPoint(
        north=u.northing - origin.utm.northing,
        east=u.easting - origin.utm.easting,
        down=origin.altitude - altitude,
    )


# ---------------------------------------------------------------------------
# Orientation (unit quaternions, camera frame -> NED)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Orientation:
    """Unit quaternion (w, x, y, z) rotating camera-frame vectors into NED.

    Canonicalized to w >= 0 on construction so serialization is reproducible.
    """

    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        norm = math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"quaternion norm {norm} not unit")
        if self.w < 0.0:
            object.__setattr__(self, "w", -self.w)
            object.__setattr__(self, "x", -self.x)
            object.__setattr__(self, "y", -self.y)
            object.__setattr__(self, "z", -self.z)

    @staticmethod
    def identity() -> "Orientation":
        return Orientation(1.0, 0.0, 0.0, 0.0)

    @staticmethod
    def from_array(q: np.ndarray) -> "Orientation":
        q = np.asarray(q, dtype=np.float64)
        q = q / np.linalg.norm(q)
        return Orientation(float(q[0]), float(q[1]), float(q[2]), float(q[3]))

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z], dtype=np.float64)

    @staticmethod
    def from_euler_zyx(roll: float, pitch: float, yaw: float) -> "Orientation":
        """Aerospace ZYX Euler angles in degrees: yaw about down, then pitch, then roll."""
        hr = math.radians(roll) / 2.0
        hp = math.radians(pitch) / 2.0
        hy = math.radians(yaw) / 2.0
        qx = np.array([math.cos(hr), math.sin(hr), 0.0, 0.0])
        qy = np.array([math.cos(hp), 0.0, math.sin(hp), 0.0])
        qz = np.array([math.cos(hy), 0.0, 0.0, math.sin(hy)])
        return Orientation.from_array(_qmul(_qmul(qz, qy), qx))

    @staticmethod
    def yaw_rotation(yaw_deg: float) -> "Orientation":
        h = math.radians(yaw_deg) / 2.0
        return Orientation.from_array(np.array([math.cos(h), 0.0, 0.0, math.sin(h)]))

    def compose(self, other: "Orientation") -> "Orientation":
        """self o other: apply ``other`` first, then ``self``."""
        return Orientation.from_array(_qmul(self.as_array(), other.as_array()))

    def rotate(self, v: np.ndarray) -> np.ndarray:
        """Rotate camera-frame vector(s) of shape (3,) or (N, 3) into NED."""
        return np.asarray(v, dtype=np.float64) @ self.matrix().T

    def matrix(self) -> np.ndarray:
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )


def _qmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def slerp(a: Orientation, b: Orientation, t: float) -> Orientation:
    """Spherical linear interpolation along the shortest arc.

    Nearly identical inputs (|dot| > 1 - 1e-8) fall back to normalized
    linear interpolation, which is numerically safer and agrees to well
    below the unit-norm tolerance.
    """
    qa = a.as_array()
    qb = b.as_array()
    dot = float(qa @ qb)
    if dot < 0.0:
        qb = -qb
        dot = -dot
    if dot > 1.0 - 1e-8:
        return Orientation.from_array((1.0 - t) * qa + t * qb)
    theta = math.acos(min(dot, 1.0))
    s = math.sin(theta)
    return Orientation.from_array(
        (math.sin((1.0 - t) * theta) * qa + math.sin(t * theta) * qb) / s
    )


def _slerp_many(qa: np.ndarray, qb: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Vectorized slerp over row-aligned quaternion arrays."""
    qb = qb.copy()
    dot = np.sum(qa * qb, axis=1)
    flip = dot < 0.0
    qb[flip] = -qb[flip]
    dot = np.abs(dot)

    out = np.empty_like(qa)
    near = dot > 1.0 - 1e-8
    tt = t[:, None]
    out[near] = (1.0 - tt[near]) * qa[near] + tt[near] * qb[near]
    far = ~near
    theta = np.arccos(np.minimum(dot[far], 1.0))
    s = np.sin(theta)
    out[far] = (
        np.sin((1.0 - t[far]) * theta)[:, None] * qa[far]
        + np.sin(t[far] * theta)[:, None] * qb[far]
    ) / s[:, None]

    out /= np.linalg.norm(out, axis=1, keepdims=True)
    out[out[:, 0] < 0.0] *= -1.0
    return out


# ---------------------------------------------------------------------------
# Pose track
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PoseTrack:
    """Per-line camera pose: positions (L, 3) NED meters, orientations (L, 4) wxyz."""

    positions: np.ndarray
    orientations: np.ndarray
    origin: NedOrigin

    def __post_init__(self):
        if self.positions.shape[0] != self.orientations.shape[0]:
            raise ValueError("positions and orientations length mismatch")
        self.positions.setflags(write=False)
        self.orientations.setflags(write=False)

    def __len__(self) -> int:
        return self.positions.shape[0]

    def pose(self, i: int) -> tuple[NedPoint, Orientation]:
        p = self.positions[i]
        q = self.orientations[i]
        return NedPoint(*map(float, p)), Orientation(*map(float, q))


def collection_origin(
    records: list[InsRecord],
    first_line_time: float,
    ground_altitude: float,
    zone: int,
) -> NedOrigin:
    """Origin for the collection NED frame.

    Horizontal origin is the camera's UTM position at the first line's
    exposure start; the altitude reference is the ground plane, so ground
    sits at down = 0.
    """
    times = np.array([r.timestamp for r in records])
    i = int(np.searchsorted(times, first_line_time, side="right")) - 1
    i = min(max(i, 0), len(records) - 2)
    r0, r1 = records[i], records[i + 1]
    f = (first_line_time - r0.timestamp) / (r1.timestamp - r0.timestamp)
    u0 = wgs84_to_utm(r0.position, zone)
    u1 = wgs84_to_utm(r1.position, zone)
    return NedOrigin(
        utm=UtmCoordinate(
            easting=u0.easting + f * (u1.easting - u0.easting),
            northing=u0.northing + f * (u1.northing - u0.northing),
            zone=zone,
            hemisphere=u0.hemisphere,
        ),
        altitude=ground_altitude,
    )


def interpolate_poses(
    records: list[InsRecord],
    line_times: np.ndarray,
    origin: NedOrigin,
    label: str = "cube",
    apply_grid_offset: bool = True,
) -> PoseTrack:
    """Assign each cube line the camera pose at the start of its exposure.

    Positions interpolate linearly in NED; orientations slerp between the
    bracketing INS records. The grid heading offset (convergence at the
    origin) is composed into every orientation so yaw is grid-relative.
    Line times outside the record span raise PoseExtrapolationError.
    """
    if len(records) < 2:
        raise ValueError("need at least two INS records to interpolate")
    times = np.array([r.timestamp for r in records], dtype=np.float64)
    if np.any(np.diff(times) <= 0.0):
        raise ValueError("INS record timestamps must be strictly increasing")
    line_times = np.asarray(line_times, dtype=np.float64)

    low = line_times < times[0]
    high = line_times > times[-1]
    if low.any() or high.any():
        bad = int(np.argmax(low | high))
        raise PoseExtrapolationError(
            f"{label}: line {bad} at t={line_times[bad]:.6f}s outside INS span "
            f"[{times[0]:.6f}, {times[-1]:.6f}]s; refusing to extrapolate"
        )

    ned = np.empty((len(records), 3), dtype=np.float64)
    for k, r in enumerate(records):
        u = wgs84_to_utm(r.position, origin.utm.zone)
        p = to_ned(u, r.position.altitude, origin)
        ned[k] = (p.north, p.east, p.down)

    quats = np.empty((len(records), 4), dtype=np.float64)
    for k, r in enumerate(records):
        quats[k] = Orientation.from_euler_zyx(r.roll, r.pitch, r.yaw).as_array()
    if apply_grid_offset:
        # NED axes follow the UTM grid, so true-north yaw is corrected by the
        # convergence at the origin: compose a -gamma yaw ahead of every pose.
        gamma = grid_convergence(utm_to_wgs84(origin.utm), origin.utm.zone)
        off = Orientation.yaw_rotation(-gamma).as_array()
        for k in range(len(records)):
            q = _qmul(off, quats[k])
            quats[k] = -q if q[0] < 0.0 else q

    seg = np.clip(np.searchsorted(times, line_times, side="right") - 1, 0, len(records) - 2)
    f = (line_times - times[seg]) / (times[seg + 1] - times[seg])

    positions = ned[seg] + f[:, None] * (ned[seg + 1] - ned[seg])
    orientations = _slerp_many(quats[seg], quats[seg + 1], f)
    return PoseTrack(positions=positions, orientations=orientations, origin=origin)
