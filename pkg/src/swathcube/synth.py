"""Synthetic flights and the direct-georectification oracle.

Everything here exists to check the real pipeline: analytic ground scenes,
seeded flight simulation producing cube + pose-log files in the shipping
formats, and a per-sample ray-plotting georectifier (the classical direct
method) whose coverage gaps the mesh renderer is supposed to eliminate.
The direct path deliberately uses explicit rotation matrices and
nearest-pixel plotting rather than any of the rasterizer machinery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cube_io
from .calibration import CalibrationSet
from .geodesy import (
    GeodeticPoint,
    InsRecord,
    UtmCoordinate,
    grid_convergence,
    utm_to_wgs84,
)
from .mesh import FovVectors
from .raster import ViewWindow

MEMPHIS_UTM = UtmCoordinate(229_228.97, 3_890_114.20, 16, "north")


# ---------------------------------------------------------------------------
# Scenes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticScene:
    """Analytic ground pattern keyed by absolute UTM (easting, northing).

    ``base(easting, northing) -> array`` gives the spatial pattern;
    per-band values are base * band_gain[k] + band_offset[k] so every band
    carries a distinct, recognizable signal.
    """

    name: str
    base: "np.ufunc | object"
    band_gains: np.ndarray
    band_offsets: np.ndarray

    def sample(self, easting, northing, band: int):
        return (
            self.base(np.asarray(easting), np.asarray(northing)) * self.band_gains[band]
            + self.band_offsets[band]
        )


def _band_mods(bands: int) -> tuple[np.ndarray, np.ndarray]:
    gains = 1.0 + 0.05 * np.arange(bands)
    offsets = 10.0 * np.arange(bands)
    return gains, offsets


def stripe_scene(bands: int, period: float = 2.0, axis: str = "north",
                 low: float = 50.0, high: float = 200.0) -> SyntheticScene:
    """Hard-edged stripes of the given ground period, meters."""

    def base(e, n):
        coord = n if axis == "north" else e
        phase = np.floor(coord / (period / 2.0)).astype(np.int64) % 2
        return np.where(phase == 0, low, high)

    gains, offsets = _band_mods(bands)
    return SyntheticScene(f"stripes-{axis}", base, gains, offsets)


def checkerboard_scene(bands: int, size: float = 2.0,
                       low: float = 50.0, high: float = 200.0) -> SyntheticScene:
    def base(e, n):
        phase = (np.floor(e / size) + np.floor(n / size)).astype(np.int64) % 2
        return np.where(phase == 0, low, high)

    gains, offsets = _band_mods(bands)
    return SyntheticScene("checkerboard", base, gains, offsets)


def gradient_scene(bands: int, scale: float = 500.0) -> SyntheticScene:
    """Smooth pattern for closure tests (no step edges)."""

    def base(e, n):
        return 100.0 + 40.0 * np.sin(2 * np.pi * e / scale) + 25.0 * np.cos(
            2 * np.pi * n / scale
        ) + 0.05 * (e - n)

    gains, offsets = _band_mods(bands)
    return SyntheticScene("gradient", base, gains, offsets)


def constant_scene(bands: int, value: float = 120.0) -> SyntheticScene:
    def base(e, n):
        return np.full(np.broadcast(np.asarray(e), np.asarray(n)).shape, value)

    gains, offsets = _band_mods(bands)
    return SyntheticScene("constant", base, gains, offsets)


# ---------------------------------------------------------------------------
# Camera and trajectory
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CameraModel:
    samples: int = 900
    bands: int = 8
    fov_deg: float = 47.5
    framerate: float = 249.0
    exposure: float = 0.0039
    gain: float = 1.0

    @property
    def wavelengths(self) -> np.ndarray:
        return 400.0 + 2.1 * np.arange(self.bands)

    @property
    def half_span(self) -> float:
        return math.tan(math.radians(self.fov_deg) / 2.0)


@dataclass
class Trajectory:
    """Truth trajectory sampled on a uniform time grid (the INS rate).

    Positions are in the truth NED frame (ground plane at down = 0, origin
    at a declared absolute UTM point); attitude angles are grid-relative
    degrees. Poses at arbitrary times interpolate linearly, which is also
    the definition of truth between samples.
    """

    times: np.ndarray
    positions: np.ndarray  # (N, 3) NED, truth frame
    roll: np.ndarray
    pitch: np.ndarray
    yaw: np.ndarray
    origin_utm: UtmCoordinate
    ground_height: float

    def pose_at(self, t: np.ndarray):
        t = np.asarray(t, dtype=np.float64)
        pos = np.stack(
            [np.interp(t, self.times, self.positions[:, k]) for k in range(3)], axis=-1
        )
        r = np.interp(t, self.times, self.roll)
        p = np.interp(t, self.times, self.pitch)
        y = _interp_angle(t, self.times, self.yaw)
        return pos, r, p, y


def _interp_angle(t, times, deg):
    unwrapped = np.degrees(np.unwrap(np.radians(deg)))
    return np.interp(t, times, unwrapped)


def attitude_noise(rng: np.random.Generator, n: int, amplitude_deg: float,
                   dt: float, tau: float = 1.0) -> np.ndarray:
    """First-order low-pass filtered Gaussian with ~the requested std.

    Resembles multirotor attitude jitter: smooth at the line interval but
    wandering over seconds. Fully reproducible from the generator state.
    """
    if amplitude_deg == 0.0:
        return np.zeros(n)
    alpha = math.exp(-dt / tau)
    white = rng.normal(size=n + int(5 * tau / dt))
    out = np.empty_like(white)
    out[0] = 0.0
    for i in range(1, len(white)):
        out[i] = alpha * out[i - 1] + (1.0 - alpha) * white[i]
    out = out[-n:]
    std = out.std()
    return out * (amplitude_deg / (3.0 * std)) if std > 0 else out


def straight_trajectory(
    duration: float,
    speed: float = 10.0,
    agl: float = 40.0,
    heading_deg: float = 0.0,
    ins_rate: float = 200.0,
    noise_deg: tuple[float, float, float] = (0.0, 0.0, 0.0),
    noise_tau: float = 1.0,
    seed: int = 0,
    origin_utm: UtmCoordinate = MEMPHIS_UTM,
    ground_height: float = 95.0,
    lead_in: float = 0.25,
) -> Trajectory:
    """Constant-velocity line at the given grid heading."""
    rng = np.random.default_rng(seed)
    dt = 1.0 / ins_rate
    times = np.arange(-lead_in, duration + lead_in + dt, dt)
    h = math.radians(heading_deg)
    vel = np.array([speed * math.cos(h), speed * math.sin(h), 0.0])
    positions = times[:, None] * vel[None, :]
    positions[:, 2] = -agl
    n = len(times)
    return Trajectory(
        times=times,
        positions=positions,
        roll=attitude_noise(rng, n, noise_deg[0], dt, noise_tau),
        pitch=attitude_noise(rng, n, noise_deg[1], dt, noise_tau),
        yaw=heading_deg + attitude_noise(rng, n, noise_deg[2], dt, noise_tau),
        origin_utm=origin_utm,
        ground_height=ground_height,
    )


def lawnmower_trajectory(
    n_passes: int,
    pass_length: float,
    pass_spacing: float,
    speed: float = 10.0,
    agl: float = 40.0,
    ins_rate: float = 200.0,
    noise_deg: tuple[float, float, float] = (0.0, 0.0, 0.0),
    noise_tau: float = 1.0,
    seed: int = 0,
    origin_utm: UtmCoordinate = MEMPHIS_UTM,
    ground_height: float = 95.0,
    lead_in: float = 0.25,
) -> Trajectory:
    """Back-and-forth survey: north/south passes joined by semicircular
    turns of radius pass_spacing/2, yaw following the path tangent."""
    rng = np.random.default_rng(seed)
    dt = 1.0 / ins_rate
    radius = pass_spacing / 2.0
    t_pass = pass_length / speed
    t_turn = math.pi * radius / speed
    total = n_passes * t_pass + (n_passes - 1) * t_turn

    times = np.arange(-lead_in, total + lead_in + dt, dt)
    positions = np.zeros((len(times), 3))
    yaw = np.zeros(len(times))
    for i, t in enumerate(times):
        tc = min(max(t, 0.0), total)
        seg = 0
        rem = tc
        while seg < n_passes - 1 and rem >= t_pass + t_turn:
            rem -= t_pass + t_turn
            seg += 1
        northbound = seg % 2 == 0
        east0 = seg * pass_spacing
        if rem <= t_pass:
            d = rem * speed
            north = d if northbound else pass_length - d
            positions[i, :2] = (north, east0)
            yaw[i] = 0.0 if northbound else 180.0
        else:
            a = (rem - t_pass) * speed / radius  # turn angle, 0..pi
            cn = pass_length if northbound else 0.0
            sign = 1.0 if northbound else -1.0
            positions[i, 0] = cn + sign * radius * math.sin(a)
            positions[i, 1] = east0 + radius * (1.0 - math.cos(a))
            yaw[i] = (0.0 if northbound else 180.0) + sign * math.degrees(a)
        # extrapolate straight beyond the ends
        if t < 0.0:
            positions[i, 0] = t * speed
        elif t > total:
            over = (t - total) * speed
            last_northbound = (n_passes - 1) % 2 == 0
            positions[i, 0] += over if last_northbound else -over
    positions[:, 2] = -agl

    n = len(times)
    return Trajectory(
        times=times,
        positions=positions,
        roll=attitude_noise(rng, n, noise_deg[0], dt, noise_tau),
        pitch=attitude_noise(rng, n, noise_deg[1], dt, noise_tau),
        yaw=yaw + attitude_noise(rng, n, noise_deg[2], dt, noise_tau),
        origin_utm=origin_utm,
        ground_height=ground_height,
    )


# ---------------------------------------------------------------------------
# Capture simulation
# ---------------------------------------------------------------------------

def _euler_matrices(roll_deg, pitch_deg, yaw_deg) -> np.ndarray:
    """Batch aerospace ZYX rotation matrices, body -> NED."""
    r = np.radians(roll_deg)
    p = np.radians(pitch_deg)
    y = np.radians(yaw_deg)
    cr, sr = np.cos(r), np.sin(r)
    cp, sp = np.cos(p), np.sin(p)
    cy, sy = np.cos(y), np.sin(y)
    m = np.empty((*np.shape(r), 3, 3))
    m[..., 0, 0] = cy * cp
    m[..., 0, 1] = cy * sp * sr - sy * cr
    m[..., 0, 2] = cy * sp * cr + sy * sr
    m[..., 1, 0] = sy * cp
    m[..., 1, 1] = sy * sp * sr + cy * cr
    m[..., 1, 2] = sy * sp * cr - cy * sr
    m[..., 2, 0] = -sp
    m[..., 2, 1] = cp * sr
    m[..., 2, 2] = cp * cr
    return m


@dataclass
class SimulatedCollection:
    cube_paths: list[Path]
    pose_log_path: Path
    camera: CameraModel
    trajectory: Trajectory
    scene: SyntheticScene
    line_times: np.ndarray       # global, all cubes concatenated
    line_positions: np.ndarray   # (L, 3) truth NED
    line_matrices: np.ndarray    # (L, 3, 3) truth rotations
    lines_per_cube: list[int]
    calibration: CalibrationSet | None = None

    @property
    def ground_height(self) -> float:
        return self.trajectory.ground_height

    @property
    def capture_duration(self) -> float:
        return len(self.line_times) / self.camera.framerate


def simulate_capture(
    scene: SyntheticScene,
    camera: CameraModel,
    trajectory: Trajectory,
    n_cubes: int,
    lines_per_cube: int,
    out_dir: str | Path,
    calibration: CalibrationSet | None = None,
    data_type: int = 4,
    name: str = "cube",
) -> SimulatedCollection:
    """Fly the camera over the scene and write cubes + pose log.

    Each raw sample holds the scene value at the intersection of that
    sample's center ray with the ground. When a CalibrationSet is given the
    scene values are treated as radiance and converted backwards into DN
    (dark offset, radiance coefficients, and capture-settings response all
    injected) so the calibration chain can be tested end to end.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    total_lines = n_cubes * lines_per_cube
    line_times = np.arange(total_lines) / camera.framerate
    pos, roll, pitch, yaw = trajectory.pose_at(line_times)
    mats = _euler_matrices(roll, pitch, yaw)

    # center rays for every sample: head (0, -d + (s+0.5)/S * 2d, 1)
    d = camera.half_span
    sigma = (np.arange(camera.samples) + 0.5) / camera.samples
    heads = np.stack(
        [np.zeros_like(sigma), -d + 2.0 * d * sigma, np.ones_like(sigma)], axis=0
    )  # (3, S)

    dirs = mats @ heads                       # (L, 3, S)
    scale = (0.0 - pos[:, 2:3]) / dirs[:, 2, :]   # ground at down=0
    north = pos[:, 0:1] + scale * dirs[:, 0, :]   # (L, S)
    east = pos[:, 1:2] + scale * dirs[:, 1, :]
    abs_e = trajectory.origin_utm.easting + east
    abs_n = trajectory.origin_utm.northing + north

    response = 1.0
    if calibration is not None:
        settings_response = (camera.exposure / calibration.reference.exposure) * (
            camera.gain / calibration.reference.gain
        )
        response = settings_response

    dtype = cube_io.ENVI_DTYPES[data_type]
    cube_paths = []
    for c in range(n_cubes):
        lo, hi = c * lines_per_cube, (c + 1) * lines_per_cube
        header = cube_io.CubeHeader(
            samples=camera.samples,
            lines=lines_per_cube,
            bands=camera.bands,
            interleave="bsq",
            data_type=data_type,
            byte_order=0,
            wavelengths=camera.wavelengths,
            framerate=camera.framerate,
            exposure=camera.exposure,
            gain=camera.gain,
            line_times=line_times[lo:hi],
        )

        def planes():
            for k in range(camera.bands):
                value = scene.sample(abs_e[lo:hi], abs_n[lo:hi], k)
                if calibration is not None:
                    value = value * response / calibration.rad[k][None, :] + \
                        calibration.dark[k][None, :]
                if np.issubdtype(dtype, np.integer):
                    value = np.rint(value)
                yield value.astype(dtype)

        _, data_path = cube_io.write_cube(out_dir / f"{name}{c:03d}", header, planes())
        cube_paths.append(data_path.with_name(data_path.name + ".hdr"))

    records = _pose_records(trajectory)
    pose_log_path = cube_io.write_pose_log(out_dir / "poses.csv", records)

    return SimulatedCollection(
        cube_paths=cube_paths,
        pose_log_path=pose_log_path,
        camera=camera,
        trajectory=trajectory,
        scene=scene,
        line_times=line_times,
        line_positions=pos,
        line_matrices=mats,
        lines_per_cube=[lines_per_cube] * n_cubes,
        calibration=calibration,
    )


def _pose_records(trajectory: Trajectory) -> list[InsRecord]:
    """Truth trajectory to INS records: geodetic position plus true-north
    yaw (grid yaw plus the local convergence, which the pipeline removes)."""
    records = []
    o = trajectory.origin_utm
    for i, t in enumerate(trajectory.times):
        n, e, dwn = trajectory.positions[i]
        utm = UtmCoordinate(o.easting + e, o.northing + n, o.zone, o.hemisphere)
        alt = trajectory.ground_height - dwn
        geo = utm_to_wgs84(utm, altitude=alt)
        gamma = grid_convergence(GeodeticPoint(geo.latitude, geo.longitude), o.zone)
        records.append(
            InsRecord(
                timestamp=float(t),
                position=geo,
                roll=float(trajectory.roll[i]),
                pitch=float(trajectory.pitch[i]),
                yaw=float(trajectory.yaw[i] + gamma),
            )
        )
    return records


# ---------------------------------------------------------------------------
# Direct georectification (the oracle)
# ---------------------------------------------------------------------------

@dataclass
class DirectResult:
    line_id: np.ndarray    # (H, W) int32, -1 where nothing landed
    sample_id: np.ndarray  # (H, W) int32
    covered: np.ndarray    # (H, W) bool
    skipped_rays: int
    # Supersampled mode only: pixels whose nearest and runner-up sub-rays
    # come from different (line, sample) cells at comparable distance. The
    # oracle's finite ray density cannot classify those pixels; comparisons
    # should treat them as undecidable rather than as disagreement.
    ambiguous: np.ndarray | None = None

    @property
    def decided(self) -> np.ndarray:
        if self.ambiguous is None:
            return self.covered
        return self.covered & ~self.ambiguous


def direct_georectify(
    positions: np.ndarray,
    matrices: np.ndarray,
    samples: int,
    fov: FovVectors,
    ground_down: float,
    view: ViewWindow,
    supersample: int = 1,
    chain_next: bool = True,
) -> DirectResult:
    """Classical direct method: intersect each sample's center ray with the
    ground and plot its (line, sample) id at the landing pixel, later
    samples overwriting.

    ``supersample`` = k > 1 subdivides each sample's footprint into k
    cross-track sub-samples times k sub-line poses interpolated across the
    exposure interval toward the next line (k=4 gives the 16x variant), and
    each pixel keeps the sub-ray landing nearest its center. That
    approximates, interpolation-free, which sample's true footprint
    contains each pixel center, so it serves as ground truth for the mesh
    renderer. ``positions``/``matrices`` cover every line of every cube in
    capture order, in the view's frame.
    """
    n_lines = len(positions)
    height, width = view.height, view.width
    line_id = np.full((height, width), -1, dtype=np.int32)
    sample_id = np.full((height, width), -1, dtype=np.int32)
    skipped = 0

    d = fov.d
    if supersample <= 1:
        centers = np.arange(samples) + 0.5
        fracs = np.array([0.0])
    else:
        sub = (np.arange(supersample) + 0.5) / supersample
        centers = (np.arange(samples)[:, None] + sub[None, :]).ravel()
        fracs = (np.arange(supersample) + 0.5) / supersample
    sigma = centers / samples
    heads = np.stack(
        [np.zeros_like(sigma), -d + 2.0 * d * sigma, np.ones_like(sigma)], axis=0
    )
    samp_of_ray = np.floor(centers).astype(np.int32)

    def landings():
        """Yield (line, pixel x, pixel y, center distance^2, sample id) per
        sub-pose batch, counting non-descending rays once (first pass)."""
        for i in range(n_lines):
            if supersample <= 1 or i + 1 >= n_lines:
                poses = [(positions[i], matrices[i])]
            else:
                p0, p1 = positions[i], positions[i + 1]
                m0, m1 = matrices[i], matrices[i + 1]
                poses = [
                    (p0 + f * (p1 - p0), _orthonormalize(m0 + f * (m1 - m0)))
                    for f in fracs
                ]
            for pos, mat in poses:
                dirs = mat @ heads
                descending = dirs[2] > 1e-12
                yield_skip = int((~descending).sum())
                if not descending.any():
                    yield i, None, None, None, None, yield_skip
                    continue
                scale = (ground_down - pos[2]) / dirs[2, descending]
                north = pos[0] + scale * dirs[0, descending]
                east = pos[1] + scale * dirs[1, descending]
                fx = (east - view.west) / view.gsd_east
                fy = (view.north_top - north) / view.gsd_north
                px = np.floor(fx).astype(np.int64)
                py = np.floor(fy).astype(np.int64)
                ok = (px >= 0) & (px < width) & (py >= 0) & (py < height)
                if not ok.any():
                    yield i, None, None, None, None, yield_skip
                    continue
                pxo, pyo = px[ok], py[ok]
                d2 = (fx[ok] - pxo - 0.5) ** 2 + (fy[ok] - pyo - 0.5) ** 2
                yield i, pxo, pyo, d2, samp_of_ray[descending][ok], yield_skip

    if supersample <= 1:
        for i, pxo, pyo, _, samps, skip in landings():
            skipped += skip
            if pxo is None:
                continue
            # classical direct method: later samples simply overwrite
            line_id[pyo, pxo] = i
            sample_id[pyo, pxo] = samps
        return DirectResult(line_id, sample_id, line_id >= 0, skipped)

    # pass 1: keep the sub-ray nearest each pixel center
    best_d2 = np.full((height, width), np.inf, dtype=np.float64)
    for i, pxo, pyo, d2, samps, skip in landings():
        skipped += skip
        if pxo is None:
            continue
        # decreasing distance within the batch so the nearest lands last
        order = np.argsort(-d2, kind="stable")
        pxs, pys, d2s, ss = pxo[order], pyo[order], d2[order], samps[order]
        better = d2s < best_d2[pys, pxs]
        pxs, pys, d2s, ss = pxs[better], pys[better], d2s[better], ss[better]
        best_d2[pys, pxs] = d2s
        line_id[pys, pxs] = i
        sample_id[pys, pxs] = ss

    # pass 2: nearest sub-ray from any *other* cell, to flag pixels the
    # oracle cannot decide at its ray density; rays from non-adjacent lines
    # additionally mark genuine multi-coverage (footprint folds), where the
    # renderer's capture-order overwrite is the defined answer rather than
    # a geometric one
    other_d2 = np.full((height, width), np.inf, dtype=np.float64)
    fold_d2 = np.full((height, width), np.inf, dtype=np.float64)
    for i, pxo, pyo, d2, samps, _ in landings():
        if pxo is None:
            continue
        dl = np.abs(line_id[pyo, pxo] - i)
        diff = (dl > 0) | (sample_id[pyo, pxo] != samps)
        if diff.any():
            np.minimum.at(other_d2, (pyo[diff], pxo[diff]), d2[diff])
        fold = dl > 1
        if fold.any():
            np.minimum.at(fold_d2, (pyo[fold], pxo[fold]), d2[fold])

    covered = line_id >= 0
    mean_height = float(np.mean(ground_down - positions[:, 2]))
    sub_spacing_px = 2.0 * d * mean_height / samples / supersample / view.gsd_east
    best = np.sqrt(best_d2, where=covered, out=np.zeros_like(best_d2))
    with np.errstate(invalid="ignore"):
        # the winner locates the pixel to ~its own distance; a different
        # cell within that scale (or half a sub-ray spacing) is a tie
        gap = np.sqrt(other_d2) - best
        ambiguous = covered & (gap < np.maximum(0.5 * sub_spacing_px, best))
        # overlapping passes of the strip: multiple distant lines imaged
        # this pixel, so "which one" is painter order, not geometry
        ambiguous |= covered & (np.sqrt(fold_d2) - best < 2.0 * sub_spacing_px)

    return DirectResult(line_id, sample_id, covered, skipped, ambiguous=ambiguous)


def _orthonormalize(m: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(m)
    return u @ vt


def plot_values(result: DirectResult, planes: np.ndarray, no_data: float = 0.0) -> np.ndarray:
    """Fill a direct-georectification id map with values from the
    concatenated (total_lines, samples) plane of one band."""
    out = np.full(result.line_id.shape, no_data, dtype=np.float32)
    cov = result.covered
    out[cov] = planes[result.line_id[cov], result.sample_id[cov]]
    return out
