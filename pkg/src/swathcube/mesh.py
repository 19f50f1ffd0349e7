"""Ground-footprint mesh generation.

Each cube line's two field-of-view extreme rays are rotated by the line's
orientation, translated to its position, and extended to the flat ground
plane. Consecutive lines' endpoints join into quads (two triangles each),
forming a gap-less strip that carries per-vertex effective depth (the
perspective divide factor of the camera-to-ground projection) and a
cross-track sample coordinate running 0..S.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geodesy import NedOrigin, Orientation, PoseTrack

# Rays with a down-component at or below this are treated as degenerate:
# depths explode near the horizon and the flat-ground model is meaningless.
DEGENERATE_RAY_EPS = 1e-6


class DegenerateGeometryError(ValueError):
    """A footprint ray does not descend to the ground plane."""


@dataclass(frozen=True)
class FovVectors:
    """Camera-frame extreme rays with heads at (N, E, D) = (0, +/-d, 1)."""

    theta_deg: float
    d: float

    @property
    def heads(self) -> np.ndarray:
        return np.array([[0.0, -self.d, 1.0], [0.0, self.d, 1.0]])


@dataclass(frozen=True)
class GroundModel:
    """Flat ground plane at a fixed altitude (meters above the ellipsoid)."""

    height: float

    def down_in(self, origin: NedOrigin) -> float:
        """The plane's down-coordinate in the collection NED frame."""
        return origin.altitude - self.height


@dataclass(frozen=True)
class LineFootprint:
    endpoints: np.ndarray  # (2, 2) ground [north, east] per head
    depths: np.ndarray     # (2,) perspective divide factors (1 at nadir)
    line: int


@dataclass(frozen=True)
class FootprintMesh:
    """Quad strip over a cube's imaged area.

    Vertices 2i and 2i+1 are line i's endpoints at sample coordinates 0 and
    S; quad i spans vertices 2i..2i+3 and carries the flat line index i.
    A chained mesh's final vertex pair comes from the next cube's first
    line, so adjacent cubes share that boundary exactly.
    """

    vertices: np.ndarray       # (V, 2) [north, east]
    depths: np.ndarray         # (V,)
    sample_coords: np.ndarray  # (V,) alternating 0, S
    line_index: np.ndarray     # (n_quads,) leading line per quad
    samples: int
    chained: bool

    def __post_init__(self):
        for arr in (self.vertices, self.depths, self.sample_coords, self.line_index):
            arr.setflags(write=False)

    @property
    def n_quads(self) -> int:
        return len(self.line_index)

    @property
    def lines(self) -> int:
        """Line count of the cube this mesh covers (chained meshes borrow
        one extra vertex pair from the next cube)."""
        return len(self.vertices) // 2 - (1 if self.chained else 0)

    def quad_vertex_indices(self, i: int) -> tuple[int, int, int, int]:
        return 2 * i, 2 * i + 1, 2 * i + 2, 2 * i + 3

    def triangles(self) -> np.ndarray:
        """(2*n_quads, 3) vertex indices in line order; the split diagonal
        runs from (line i, sample 0) to (line i+1, sample S).

        Quad i's two triangles come consecutively, so a renderer walking
        the list in order overwrites self-overlapping regions with the
        later line, matching capture-order semantics.
        """
        i = np.arange(self.n_quads)
        a, b, c, d = 2 * i, 2 * i + 1, 2 * i + 2, 2 * i + 3
        out = np.empty((2 * self.n_quads, 3), dtype=np.int64)
        out[0::2] = np.stack([a, b, d], axis=1)
        out[1::2] = np.stack([a, d, c], axis=1)
        return out


@dataclass(frozen=True)
class Bounds:
    north_min: float
    north_max: float
    east_min: float
    east_max: float

    def union(self, other: "Bounds") -> "Bounds":
        return Bounds(
            min(self.north_min, other.north_min),
            max(self.north_max, other.north_max),
            min(self.east_min, other.east_min),
            max(self.east_max, other.east_max),
        )


def project_fov(theta_deg: float) -> FovVectors:
    """Extreme-ray construction for a full field of view of theta degrees.

    The half-swath per unit depth is d = tan(theta/2); heads land on the
    unit-depth plane at (0, +/-d, 1).
    """
    if not 0.0 < theta_deg < 180.0:
        raise ValueError(f"field of view {theta_deg} outside (0, 180) degrees")
    return FovVectors(theta_deg=theta_deg, d=math.tan(math.radians(theta_deg) / 2.0))


def quat_matrices(q: np.ndarray) -> np.ndarray:
    """Rotation matrices (L, 3, 3) from unit quaternions (L, 4) wxyz."""
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    m = np.empty((len(q), 3, 3))
    m[:, 0, 0] = 1 - 2 * (y * y + z * z)
    m[:, 0, 1] = 2 * (x * y - w * z)
    m[:, 0, 2] = 2 * (x * z + w * y)
    m[:, 1, 0] = 2 * (x * y + w * z)
    m[:, 1, 1] = 1 - 2 * (x * x + z * z)
    m[:, 1, 2] = 2 * (y * z - w * x)
    m[:, 2, 0] = 2 * (x * z - w * y)
    m[:, 2, 1] = 2 * (y * z + w * x)
    m[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def _endpoints_for(
    positions: np.ndarray,
    quats: np.ndarray,
    fov: FovVectors,
    ground_down: float,
    first_line: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Ground endpoints (L, 2, 2) and depths (L, 2) for a block of poses."""
    rot = quat_matrices(quats)                        # (L, 3, 3)
    dirs = rot @ fov.heads.T                          # (L, 3, 2)
    down = dirs[:, 2, :]                              # (L, 2)
    bad = down <= DEGENERATE_RAY_EPS
    if bad.any():
        row = int(np.argmax(bad.any(axis=1)))
        raise DegenerateGeometryError(
            f"line {first_line + row}: footprint ray does not descend to the "
            f"ground (down component {down[row][bad[row]][0]:.3e})"
        )
    height = ground_down - positions[:, 2:3]          # camera height above ground
    s = height / down                                 # (L, 2) ray extension factors
    if (s <= 0.0).any():
        line = first_line + int(np.argmax((s <= 0.0).any(axis=1)))
        raise DegenerateGeometryError(
            f"line {line}: camera at or below the ground plane"
        )
    ne = positions[:, :2, None] + s[:, None, :] * dirs[:, :2, :]  # (L, 2, 2)
    # Effective depth for perspective-correct interpolation: the head's
    # vertical drop below the camera (1 at nadir) — the projective
    # denominator of the camera-to-ground map, affine along the sensor
    # line, which is what makes 1/depth affine in ground coordinates and
    # the interpolation exact. The ray extension factor is its reciprocal
    # (times camera height); using it directly visibly bends the sample
    # mapping under roll.
    return np.ascontiguousarray(ne.transpose(0, 2, 1)), down.copy()


def line_endpoints(
    position: np.ndarray,
    orientation: Orientation,
    fov: FovVectors,
    ground_down: float,
    line: int = 0,
) -> LineFootprint:
    """Ground endpoints and effective depths for a single line pose."""
    ne, s = _endpoints_for(
        np.asarray(position, dtype=np.float64)[None, :],
        orientation.as_array()[None, :],
        fov,
        ground_down,
        first_line=line,
    )
    return LineFootprint(endpoints=ne[0], depths=s[0], line=line)


def build_mesh(
    track: PoseTrack,
    fov: FovVectors,
    ground_down: float,
    samples: int,
    next_first_pose: tuple[np.ndarray, np.ndarray] | None = None,
) -> FootprintMesh:
    """Footprint mesh for one cube.

    ``next_first_pose`` is the (position, quaternion) of the next cube's
    first line; when present a final quad joins this cube's last line to
    it, otherwise the last line is zero-area and emits no quad.
    """
    if len(track) == 0:
        raise ValueError("empty pose track")
    positions = track.positions
    quats = track.orientations
    chained = next_first_pose is not None
    if chained:
        positions = np.vstack([positions, np.asarray(next_first_pose[0], dtype=np.float64)])
        quats = np.vstack([quats, np.asarray(next_first_pose[1], dtype=np.float64)])

    ne, s = _endpoints_for(positions, quats, fov, ground_down)
    n_rows = len(positions)

    vertices = ne.reshape(n_rows * 2, 2)
    depths = s.reshape(n_rows * 2)
    sample_coords = np.tile([0.0, float(samples)], n_rows)
    n_quads = n_rows - 1
    line_index = np.arange(n_quads, dtype=np.int32)

    return FootprintMesh(
        vertices=vertices,
        depths=depths,
        sample_coords=sample_coords,
        line_index=line_index,
        samples=samples,
        chained=chained,
    )


def mesh_bounds(meshes: list[FootprintMesh]) -> Bounds:
    """Axis-aligned north/east bounding rectangle over all mesh vertices."""
    if not meshes:
        raise ValueError("no meshes")
    b = None
    for m in meshes:
        mb = Bounds(
            north_min=float(m.vertices[:, 0].min()),
            north_max=float(m.vertices[:, 0].max()),
            east_min=float(m.vertices[:, 1].min()),
            east_max=float(m.vertices[:, 1].max()),
        )
        b = mb if b is None else b.union(mb)
    return b


def estimate_ground_height(altitudes: np.ndarray, nominal_agl: float = 40.0) -> float:
    """Default ground-height estimate: lowest camera altitude minus the
    nominal above-ground flying height. Always user-overridable."""
    altitudes = np.asarray(altitudes, dtype=np.float64)
    if altitudes.size == 0:
        raise ValueError("no altitudes to estimate ground height from")
    return float(altitudes.min()) - nominal_agl
