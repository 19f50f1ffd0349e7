"""Deterministic footprint-mesh rasterization.

The inverse georectification: mesh vertices transform to pixel space, a
watertight coverage rule decides pixel ownership, cube coordinates
interpolate perspective-correctly from the vertex depths, and each covered
pixel looks up its source sample and runs the radiometric formula.

Geometry (which source line/sample owns each output pixel) is computed once
per view and reused across every band, which is what makes whole-cube
exports cheap: per band the work is a gather plus three multiplies.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Sequence

import numpy as np

from . import _kernels, calibration, cube_io
from .calibration import CalibrationSet, IlluminationSpectrum, StretchBounds
from .mesh import FootprintMesh, mesh_bounds

if TYPE_CHECKING:
    from .collection import Collection


class RenderError(ValueError):
    pass


@dataclass(frozen=True)
class ViewWindow:
    """Output raster window: a center in North-East meters, the ground extent
    of the full buffer per axis, and the buffer pixel dimensions."""

    center_north: float
    center_east: float
    scale_north: float
    scale_east: float
    width: int
    height: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("buffer dims must be positive")
        if self.scale_north <= 0 or self.scale_east <= 0:
            raise ValueError("scale must be positive")

    @property
    def gsd_east(self) -> float:
        return self.scale_east / self.width

    @property
    def gsd_north(self) -> float:
        return self.scale_north / self.height

    @property
    def west(self) -> float:
        return self.center_east - self.scale_east / 2.0

    @property
    def north_top(self) -> float:
        return self.center_north + self.scale_north / 2.0

    @staticmethod
    def from_grid(west: float, north_top: float, gsd: float, width: int, height: int) -> "ViewWindow":
        return ViewWindow(
            center_north=north_top - gsd * height / 2.0,
            center_east=west + gsd * width / 2.0,
            scale_north=gsd * height,
            scale_east=gsd * width,
            width=width,
            height=height,
        )


def transform_vertex(north: float, east: float, depth: float, view: ViewWindow) -> tuple[float, float, float]:
    """Mesh vertex to continuous pixel coordinates (north-up image, y down).

    Integer pixel coordinates are pixel boundaries; centers sit at +0.5.
    Depth passes through untouched. Off-buffer results are fine; clipping
    happens at coverage time.
    """
    x = (east - view.center_east) / view.scale_east * view.width + view.width / 2.0
    y = (view.center_north - north) / view.scale_north * view.height + view.height / 2.0
    return x, y, depth


@dataclass
class CoverageLut:
    """Per-pixel source lookup for one view over a cube sequence.

    ``gline`` holds indices into the cubes' concatenated line ranges
    (-1 where uncovered); ``line_offsets[k]`` is cube k's first entry, with
    a final sentinel of the total line count.
    """

    gline: np.ndarray         # (H, W) int32
    sample: np.ndarray        # (H, W) float32, continuous [0, S]
    depth: np.ndarray         # (H, W) float32
    line_offsets: np.ndarray  # (n_cubes + 1,) int64
    view: ViewWindow
    row_spans: np.ndarray     # (n_cubes, 2) output-row range per cube footprint

    @property
    def covered(self) -> np.ndarray:
        return self.gline >= 0

    def cube_map(self) -> np.ndarray:
        """(H, W) int32 cube index per pixel, -1 where uncovered."""
        out = np.full(self.gline.shape, -1, dtype=np.int32)
        cov = self.covered
        out[cov] = (
            np.searchsorted(self.line_offsets, self.gline[cov], side="right") - 1
        ).astype(np.int32)
        return out


def _snap(values: np.ndarray) -> np.ndarray:
    snapped = np.rint(np.asarray(values) * _kernels.SUBPIX).astype(np.int64)
    if np.any(np.abs(snapped) >= _kernels.MAX_SNAPPED):
        raise RenderError(
            "view is too deep relative to the mesh extent; vertex coordinates "
            "overflow the snapped pixel grid"
        )
    return snapped


def rasterize_geometry(
    meshes: Sequence[FootprintMesh],
    view: ViewWindow,
    anchor: tuple[float, float] | None = None,
    partition_rows: int = 64,
) -> CoverageLut:
    """Rasterize mesh coverage and perspective-correct cube coordinates.

    ``anchor`` is a (north, east) reference for the snap grid; renders that
    share an anchor and ground sample distance place vertices on identical
    snapped coordinates, so any window is an exact crop of any larger one
    (the tile/crop-equivalence contract). Defaults to the window's own
    top-left corner. Cubes rasterize in order; later cubes overwrite.
    """
    if not meshes:
        raise RenderError("no meshes to rasterize")
    if anchor is None:
        anchor = (view.north_top, view.west)
    anchor_n, anchor_e = anchor
    gsd_x = view.gsd_east
    gsd_y = view.gsd_north

    # window origin offset on the shared snap grid
    ox = int(np.rint((view.west - anchor_e) / gsd_x * _kernels.SUBPIX))
    oy = int(np.rint((anchor_n - view.north_top) / gsd_y * _kernels.SUBPIX))

    tx_parts, ty_parts, sd_parts, id_parts, line_parts = [], [], [], [], []
    offsets = [0]
    row_spans = []
    total_lines = 0
    for mesh in meshes:
        sx = _snap((mesh.vertices[:, 1] - anchor_e) / gsd_x) - ox
        sy = _snap((anchor_n - mesh.vertices[:, 0]) / gsd_y) - oy
        row_lo = max(int(sy.min() // _kernels.SUBPIX), 0)
        row_hi = min(int(sy.max() // _kernels.SUBPIX) + 2, view.height)
        row_spans.append((row_lo, max(row_hi, row_lo)))
        tris = mesh.triangles()
        tx_parts.append(sx[tris])
        ty_parts.append(sy[tris])
        sd = mesh.sample_coords / mesh.depths
        invd = 1.0 / mesh.depths
        sd_parts.append(sd[tris])
        id_parts.append(invd[tris])
        line_parts.append(
            (total_lines + np.repeat(mesh.line_index, 2)).astype(np.int32)
        )
        # a chained mesh's final quad reaches into the next cube's first
        # line geometrically, but its flat line index stays within this cube
        total_lines += mesh.lines
        offsets.append(total_lines)

    gline = np.full((view.height, view.width), -1, dtype=np.int32)
    sample = np.zeros((view.height, view.width), dtype=np.float32)
    depth = np.zeros((view.height, view.width), dtype=np.float32)
    _kernels.raster_geometry(
        np.ascontiguousarray(np.concatenate(tx_parts)),
        np.ascontiguousarray(np.concatenate(ty_parts)),
        np.ascontiguousarray(np.concatenate(sd_parts)),
        np.ascontiguousarray(np.concatenate(id_parts)),
        np.concatenate(line_parts),
        view.width,
        view.height,
        partition_rows,
        gline,
        sample,
        depth,
    )
    return CoverageLut(
        gline=gline,
        sample=sample,
        depth=depth,
        line_offsets=np.array(offsets, dtype=np.int64),
        view=view,
        row_spans=np.array(row_spans, dtype=np.int64),
    )


def evaluate_band(
    lut: CoverageLut,
    planes: Sequence[np.ndarray],
    band: int,
    calib: CalibrationSet | None = None,
    responses: Sequence[np.ndarray] | None = None,
    mode: str = "raw",
    illum: IlluminationSpectrum | None = None,
    no_data: float = 0.0,
    out: np.ndarray | None = None,
) -> np.ndarray:
    """Evaluate one band over a coverage LUT: look up each covered pixel's
    source value and apply the radiometric formula for the mode.

    ``out`` lets tight loops (one call per band) reuse a buffer instead of
    paying a large allocation per band."""
    n_cubes = len(lut.line_offsets) - 1
    if len(planes) != n_cubes:
        raise RenderError(f"need {n_cubes} band planes, got {len(planes)}")
    for k, p in enumerate(planes):
        if p is None:
            raise RenderError(f"missing band plane for cube {k}")
        expected = lut.line_offsets[k + 1] - lut.line_offsets[k]
        if p.shape[0] != expected:
            raise RenderError(
                f"cube {k}: plane has {p.shape[0]} lines, expected {expected}"
            )

    samples = int(np.asarray(planes[0]).shape[1])
    dark, scale = calibration.band_coefficients(band, calib, mode, illum, samples=samples)

    if mode == "raw" or responses is None:
        responses = [np.ones(int(p.shape[0]), dtype=np.float64) for p in planes]
    elif len(responses) != n_cubes:
        raise RenderError(f"need {n_cubes} response curves, got {len(responses)}")

    # evaluate cube by cube: only the pixels a cube owns are touched (and
    # only rows its footprint reaches), so no concatenated plane is ever
    # materialized and integer source planes need no float conversion
    if out is None:
        out = np.empty((lut.view.height, lut.view.width), dtype=np.float32)
    elif out.shape != (lut.view.height, lut.view.width) or out.dtype != np.float32:
        raise RenderError("out buffer must be float32 with the view's shape")
    _kernels.clear_uncovered(lut.gline, np.float32(no_data), out)
    for k in range(n_cubes):
        _kernels.evaluate_band_segment(
            lut.gline,
            lut.sample,
            np.ascontiguousarray(planes[k]),
            np.int64(lut.line_offsets[k]),
            np.int64(lut.line_offsets[k + 1]),
            np.int64(lut.row_spans[k, 0]),
            np.int64(lut.row_spans[k, 1]),
            dark,
            scale,
            np.asarray(responses[k], dtype=np.float64),
            out,
        )
    return out


@dataclass
class PixelBuffer:
    """Rendered output: (H, W, C) values plus a per-pixel coverage flag."""

    values: np.ndarray
    covered: np.ndarray

    @property
    def channels(self) -> int:
        return self.values.shape[2]


def render_collection(
    meshes: Sequence[FootprintMesh],
    view: ViewWindow,
    channel_planes: Sequence[Sequence[np.ndarray]],
    channel_bands: Sequence[int],
    calib: CalibrationSet | None = None,
    responses: Sequence[np.ndarray] | None = None,
    mode: str = "raw",
    illum: IlluminationSpectrum | None = None,
    stretch: StretchBounds | None = None,
    no_data: float = 0.0,
    anchor: tuple[float, float] | None = None,
    lut: CoverageLut | None = None,
) -> PixelBuffer:
    """Render every cube in capture order into one buffer.

    ``channel_planes[c][k]`` is cube k's plane for output channel c and
    ``channel_bands[c]`` the band index it came from (for the calibration
    coefficients). Overlaps keep the later cube's values. A stretch, when
    given, maps values to [0, 1] display range after the mode conversion.
    """
    if len(channel_planes) != len(channel_bands):
        raise RenderError("one band index per channel is required")
    if lut is None:
        lut = rasterize_geometry(meshes, view, anchor=anchor)
    out = np.empty((view.height, view.width, len(channel_bands)), dtype=np.float32)
    for c, (planes, band) in enumerate(zip(channel_planes, channel_bands)):
        values = evaluate_band(
            lut, planes, band, calib=calib, responses=responses, mode=mode,
            illum=illum, no_data=no_data,
        )
        if stretch is not None and stretch.mode != "none":
            stretched = calibration.apply_stretch(
                values, float(stretch.low[c]), float(stretch.high[c])
            ).astype(np.float32)
            stretched[~lut.covered] = no_data
            values = stretched
        out[:, :, c] = values
    return PixelBuffer(values=out, covered=lut.covered)


def rasterize_mesh(
    mesh: FootprintMesh,
    view: ViewWindow,
    channel_planes: Sequence[np.ndarray],
    channel_bands: Sequence[int],
    **kwargs,
) -> PixelBuffer:
    """Single-cube render; see render_collection."""
    return render_collection(
        [mesh], view, [[p] for p in channel_planes], channel_bands, **kwargs
    )


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

@dataclass
class ExportReport:
    header_path: Path
    data_path: Path
    width: int
    height: int
    bands: list[int]
    wavelengths: list[float]
    timings_ms: dict[str, float] = field(default_factory=dict)
    mask_paths: tuple[Path, Path] | None = None


def export_view(collection: "Collection", gsd: float, cube_range: tuple[int, int] | None = None) -> ViewWindow:
    """Pixel grid covering the (optionally range-restricted) cube bounds."""
    meshes = collection.meshes_in_range(cube_range)
    b = mesh_bounds(meshes)
    width = max(1, int(np.ceil((b.east_max - b.east_min) / gsd)))
    height = max(1, int(np.ceil((b.north_max - b.north_min) / gsd)))
    return ViewWindow.from_grid(b.east_min, b.north_max, gsd, width, height)


def export_cube(
    collection: "Collection",
    wavelengths: Sequence[float],
    gsd: float,
    out_path: str | Path,
    mode: str = "radiance",
    no_data: float = 0.0,
    cube_range: tuple[int, int] | None = None,
    jobs: int | None = None,
    write_coverage_mask: bool = False,
    progress: Callable[[int, int], None] | None = None,
) -> ExportReport:
    """Render each requested wavelength over the full collection footprint
    and stream the planes band-sequentially into a georeferenced ENVI cube.

    Requested wavelengths resolve to nearest bands, then deduplicate and
    sort ascending so the output header keeps a valid wavelength list.
    Uncovered pixels hold ``no_data``.
    """
    _kernels.set_worker_threads(jobs)
    timings: dict[str, float] = {"load": 0.0, "mesh": 0.0, "render": 0.0, "write": 0.0}

    t0 = time.perf_counter()
    meshes = collection.meshes_in_range(cube_range)
    handles = collection.handles_in_range(cube_range)
    responses = collection.responses_in_range(cube_range) if mode != "raw" else None
    timings["mesh"] = (time.perf_counter() - t0) * 1000.0

    wl_grid = handles[0].header.wavelengths
    bands = sorted({calibration.nearest_band(wl_grid, w) for w in wavelengths})
    resolved = [float(wl_grid[b]) for b in bands]

    view = export_view(collection, gsd, cube_range)
    t0 = time.perf_counter()
    lut = rasterize_geometry(meshes, view, anchor=(view.north_top, view.west))
    timings["render"] += (time.perf_counter() - t0) * 1000.0

    origin = collection.origin
    header = cube_io.CubeHeader(
        samples=view.width,
        lines=view.height,
        bands=len(bands),
        interleave="bsq",
        data_type=4,
        byte_order=0,
        wavelengths=np.array(resolved, dtype=np.float64),
        map_info=cube_io.MapInfo(
            easting=origin.utm.easting + view.west + gsd / 2.0,
            northing=origin.utm.northing + view.north_top - gsd / 2.0,
            gsd_x=gsd,
            gsd_y=gsd,
            zone=origin.utm.zone,
            hemisphere="North" if origin.utm.hemisphere == "north" else "South",
        ),
    )

    buffer = np.empty((view.height, view.width), dtype=np.float32)

    def planes():
        for i, band in enumerate(bands):
            t_load = time.perf_counter()
            cube_planes = [cube_io.read_band(h, band, native=True).values for h in handles]
            t_render = time.perf_counter()
            timings["load"] += (t_render - t_load) * 1000.0
            out = evaluate_band(
                lut, cube_planes, band,
                calib=collection.calibration if mode in ("radiance", "reflectance") else None,
                responses=responses, mode=mode, illum=collection.illumination,
                no_data=no_data, out=buffer,
            )
            timings["render"] += (time.perf_counter() - t_render) * 1000.0
            if progress is not None:
                progress(i + 1, len(bands))
            yield out

    # write_cube drives the generator, so its elapsed time includes the
    # load/render accumulated inside; subtract those deltas back out
    load_before, render_before = timings["load"], timings["render"]
    t_total = time.perf_counter()
    hdr_path, data_path = cube_io.write_cube(out_path, header, planes())
    elapsed = (time.perf_counter() - t_total) * 1000.0
    timings["write"] = max(
        elapsed - (timings["load"] - load_before) - (timings["render"] - render_before),
        0.0,
    )

    mask_paths = None
    if write_coverage_mask:
        mask_header = cube_io.CubeHeader(
            samples=view.width, lines=view.height, bands=1, interleave="bsq",
            data_type=1, byte_order=0, wavelengths=np.array([0.0]),
            map_info=header.map_info,
        )
        out_path = Path(out_path)
        mask_paths = cube_io.write_cube(
            out_path.with_name(out_path.stem + "_mask"),
            mask_header,
            [lut.covered.astype(np.uint8)],
        )

    return ExportReport(
        header_path=hdr_path,
        data_path=data_path,
        width=view.width,
        height=view.height,
        bands=bands,
        wavelengths=resolved,
        timings_ms=timings,
        mask_paths=mask_paths,
    )
