"""Collection assembly: cubes + pose log + calibration, ready to render.

A collection is an ordered capture sequence of cubes sharing one camera,
one UTM zone, one NED origin, and one flat-ground model. Meshes chain each
cube's last line to the next cube's first so the whole collection renders
as one gap-less strip.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cube_io
from .calibration import (
    CalibrationError,
    CalibrationSet,
    CaptureSettings,
    IlluminationSpectrum,
    response_curve,
)
from .cube_io import CubeHandle
from .geodesy import (
    InsRecord,
    NedOrigin,
    PoseTrack,
    collection_origin,
    interpolate_poses,
    select_zone,
)
from .mesh import (
    Bounds,
    FootprintMesh,
    FovVectors,
    GroundModel,
    build_mesh,
    estimate_ground_height,
    mesh_bounds,
    project_fov,
)


class CollectionError(ValueError):
    pass


@dataclass
class Collection:
    handles: list[CubeHandle]
    tracks: list[PoseTrack]
    origin: NedOrigin
    ground: GroundModel
    fov: FovVectors
    records: list[InsRecord]
    calibration: CalibrationSet | None = None
    illumination: IlluminationSpectrum | None = None
    ground_estimated: bool = False
    _chained_meshes: list[FootprintMesh] | None = field(default=None, repr=False)
    _terminal_meshes: dict[int, FootprintMesh] = field(default_factory=dict, repr=False)

    @property
    def n_cubes(self) -> int:
        return len(self.handles)

    @property
    def samples(self) -> int:
        return self.handles[0].header.samples

    @property
    def wavelengths(self) -> np.ndarray:
        return self.handles[0].header.wavelengths

    @property
    def ground_down(self) -> float:
        return self.ground.down_in(self.origin)

    def set_ground(self, height: float) -> None:
        """Change the flat-ground height; meshes rebuild lazily."""
        self.ground = GroundModel(height=height)
        self._chained_meshes = None
        self._terminal_meshes.clear()

    def _mesh(self, k: int, chained: bool) -> FootprintMesh:
        if chained and k + 1 < self.n_cubes:
            if self._chained_meshes is None:
                self._chained_meshes = [None] * self.n_cubes  # type: ignore[list-item]
            cached = self._chained_meshes[k]
            if cached is None:
                nxt = self.tracks[k + 1]
                cached = build_mesh(
                    self.tracks[k],
                    self.fov,
                    self.ground_down,
                    self.samples,
                    next_first_pose=(nxt.positions[0], nxt.orientations[0]),
                )
                self._chained_meshes[k] = cached
            return cached
        cached = self._terminal_meshes.get(k)
        if cached is None:
            cached = build_mesh(
                self.tracks[k], self.fov, self.ground_down, self.samples
            )
            self._terminal_meshes[k] = cached
        return cached

    def resolve_range(self, cube_range: tuple[int, int] | None) -> tuple[int, int]:
        if cube_range is None:
            return 0, self.n_cubes - 1
        a, b = cube_range
        if not (0 <= a <= b < self.n_cubes):
            raise CollectionError(
                f"cube range [{a}, {b}] invalid for {self.n_cubes} cubes"
            )
        return a, b

    def meshes_in_range(self, cube_range: tuple[int, int] | None = None) -> list[FootprintMesh]:
        """Meshes for cubes [a, b]; the last selected cube is terminal so a
        cropped range does not bleed into the cube after it."""
        a, b = self.resolve_range(cube_range)
        return [self._mesh(k, chained=(k < b)) for k in range(a, b + 1)]

    def handles_in_range(self, cube_range: tuple[int, int] | None = None) -> list[CubeHandle]:
        a, b = self.resolve_range(cube_range)
        return self.handles[a : b + 1]

    def responses_in_range(self, cube_range: tuple[int, int] | None = None) -> list[np.ndarray]:
        a, b = self.resolve_range(cube_range)
        reference = (
            self.calibration.reference
            if self.calibration is not None
            else _settings_of(self.handles[0].header)
        )
        return [response_curve(h.header, reference) for h in self.handles[a : b + 1]]

    def bounds(self, cube_range: tuple[int, int] | None = None) -> Bounds:
        return mesh_bounds(self.meshes_in_range(cube_range))


def _settings_of(header: cube_io.CubeHeader) -> CaptureSettings:
    if header.framerate is None or header.exposure is None or header.gain is None:
        raise CalibrationError(
            "cube header lacks capture settings; cannot derive a response reference"
        )
    return CaptureSettings(header.framerate, header.exposure, header.gain)


def load_collection(
    cube_paths: list[str | Path],
    pose_log_path: str | Path,
    fov_deg: float = 47.5,
    ground: float | str = "auto",
    nominal_agl: float = 40.0,
    calibration_path: str | Path | None = None,
    illumination_path: str | Path | None = None,
) -> Collection:
    """Open cubes metadata-only, ingest the pose log, pick zone/origin, and
    interpolate per-line pose tracks.

    ``ground`` is either a flat-ground altitude in meters or "auto", which
    estimates it as the lowest camera altitude minus ``nominal_agl``.
    """
    if not cube_paths:
        raise CollectionError("no cubes given")
    records = cube_io.read_pose_log(pose_log_path)
    handles = [cube_io.open_cube(p) for p in cube_paths]

    first = handles[0].header
    for h in handles:
        hd = h.header
        if hd.line_times is None:
            raise CollectionError(f"{h.name}: cube header lacks 'sc line times'")
        if (hd.samples, hd.bands) != (first.samples, first.bands):
            raise CollectionError(
                f"{h.name}: dims {hd.samples}x{hd.bands} differ from "
                f"{first.samples}x{first.bands}; one camera per collection"
            )
        if not np.allclose(hd.wavelengths, first.wavelengths):
            raise CollectionError(f"{h.name}: wavelength grid differs across cubes")
    starts = [float(h.header.line_times[0]) for h in handles]
    if any(b <= a for a, b in zip(starts, starts[1:])):
        raise CollectionError("cubes are not in capture order (line times not increasing)")

    zone, _ = select_zone([r.position for r in records])

    if ground == "auto":
        altitudes = np.array([r.position.altitude for r in records])
        ground_height = estimate_ground_height(altitudes, nominal_agl)
        estimated = True
    else:
        ground_height = float(ground)
        estimated = False

    origin = collection_origin(records, starts[0], ground_height, zone)

    tracks = [
        interpolate_poses(records, h.header.line_times, origin, label=h.name)
        for h in handles
    ]

    calib = None
    illum = None
    if calibration_path is not None:
        from .calibration import load_calibration

        calib = load_calibration(calibration_path)
        if calib.dark.shape != (first.bands, first.samples):
            raise CollectionError(
                f"calibration dims {calib.dark.shape} do not match cubes "
                f"({first.bands} bands x {first.samples} samples)"
            )
    if illumination_path is not None:
        illum = IlluminationSpectrum.from_csv(illumination_path, first.wavelengths)

    return Collection(
        handles=handles,
        tracks=tracks,
        origin=origin,
        ground=GroundModel(height=ground_height),
        fov=project_fov(fov_deg),
        records=records,
        calibration=calib,
        illumination=illum,
        ground_estimated=estimated,
    )
