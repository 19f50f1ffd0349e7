"""Local viewer service: tiles, parameters, histograms, exports, events.

The browser UI drives everything through a small HTTP API. Tiles come from
a square pyramid over the collection bounds (tile ground extent halves per
zoom level); every render shares one snap-grid anchor so any tile is an
exact crop of any larger render at the same zoom. Parameter changes bump a
generation number; in-flight tile renders for older generations give up
cooperatively, and band loading happens on background workers that publish
status events, so the metadata and parameter endpoints never wait on I/O.

Endpoints:
  GET  /api/metadata                      collection description
  GET  /api/tile/{z}/{tx}/{ty}?gen=<n>    256x256 PNG + X-Coverage header
  POST /api/params                        partial update, returns generation
  GET  /api/histogram?viewport=cn,ce,sn,se  1024-bin histogram of visible values
  POST /api/export                        start an export job, returns id
  GET  /api/export/{id}                   job status
  GET  /api/events                        server-sent events stream
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import logging
import queue
import threading
import time
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import HTMLResponse, Response, StreamingResponse
from PIL import Image

from . import cube_io, raster
from .calibration import MODES, apply_stretch, nearest_band, stretch_bounds_from_histogram
from .collection import Collection, load_collection
from .raster import ViewWindow, evaluate_band, rasterize_geometry

log = logging.getLogger("swathcube.service")

TILE_SIZE = 256
DEFAULT_MAX_ZOOM = 14
DEFAULT_WAVELENGTHS = (640.0, 550.0, 460.0)
HISTOGRAM_BINS = 1024
GRAY = 0.5


@dataclass
class RenderParams:
    wavelengths: list[float]
    mode: str = "raw"
    stretch: str = "common"  # none | common | per-channel
    cube_range: tuple[int, int] | None = None
    ground_height: float | None = None  # None: keep the collection's value

    def content_key(self, bands: list[int], epoch: int, bounds) -> str:
        payload = repr((
            bands, self.mode, self.stretch, self.cube_range,
            round(self.ground_height, 6) if self.ground_height is not None else None,
            epoch,
            None if bounds is None else (
                [round(float(v), 6) for v in bounds[0]],
                [round(float(v), 6) for v in bounds[1]],
            ),
        ))
        return hashlib.sha1(payload.encode()).hexdigest()


@dataclass
class ExportJob:
    job_id: str
    status: str = "queued"  # queued | running | done | failed
    progress: float = 0.0
    output: str | None = None
    error: str | None = None


class ViewerSession:
    """All mutable viewer state, guarded by one lock.

    Band planes load lazily on a worker pool; tiles render on the request
    thread from whatever is already in memory (cubes lacking the band show
    as gray). A parameter change invalidates older generations
    cooperatively rather than killing threads.
    """

    def __init__(self, collection: Collection, max_zoom: int = DEFAULT_MAX_ZOOM,
                 tile_cache_size: int = 256):
        self.collection = collection
        self.lock = threading.RLock()
        self.generation = 0
        self.load_epoch = 0
        self.max_zoom = max_zoom
        wl = collection.wavelengths
        self.params = RenderParams(
            wavelengths=[float(wl[nearest_band(wl, w)]) for w in DEFAULT_WAVELENGTHS[: min(3, len(wl))]]
        )
        self.band_status: dict[tuple[int, int], str] = {}
        self.band_planes: dict[tuple[int, int], np.ndarray] = {}
        self._band_stats: dict[tuple[int, int], np.ndarray] = {}
        self.stretch_bounds: tuple[np.ndarray, np.ndarray] | None = None
        self.tile_cache: OrderedDict[str, tuple[bytes, float]] = OrderedDict()
        self.tile_cache_size = tile_cache_size
        self.jobs: dict[str, ExportJob] = {}
        self._job_counter = 0
        self._subscribers: list[queue.Queue] = []
        self._load_threads: list[threading.Thread] = []
        self._load_queue: "queue.Queue[tuple[int, int] | None]" = queue.Queue()
        self._read_band = cube_io.read_band  # injection point for tests
        for _ in range(2):
            t = threading.Thread(target=self._load_worker, daemon=True)
            t.start()
            self._load_threads.append(t)

        b = collection.bounds()
        side = max(b.north_max - b.north_min, b.east_max - b.east_min)
        self.root_side = side
        self.anchor = (b.north_max, b.east_min)  # top-left of the pyramid
        # band loading starts on the first tile or parameter request, so a
        # fresh session reports every cube as not-loaded

    # -- band management ----------------------------------------------------

    def current_bands(self) -> list[int]:
        wl = self.collection.wavelengths
        return [nearest_band(wl, w) for w in self.params.wavelengths]

    def ensure_bands(self, bands: list[int]) -> None:
        with self.lock:
            for band in bands:
                for cube in range(self.collection.n_cubes):
                    key = (cube, band)
                    if key not in self.band_status:
                        self.band_status[key] = "loading"
                        self._emit({"type": "band-status", "cube": cube,
                                    "band": band, "status": "loading"})
                        self._load_queue.put(key)

    def _load_worker(self) -> None:
        while True:
            key = self._load_queue.get()
            if key is None:
                return
            cube, band = key
            try:
                plane = self._read_band(self.collection.handles[cube], band).values
            except Exception as e:  # keep the worker alive; surface via status
                log.error("band load failed for cube %d band %d: %s", cube, band, e)
                with self.lock:
                    self.band_status[key] = "not-loaded"
                continue
            with self.lock:
                self.band_planes[key] = plane
                self.band_status[key] = "ready"
                self.load_epoch += 1
                self._emit({"type": "band-status", "cube": cube, "band": band,
                            "status": "ready"})

    def band_state(self, cube: int, band: int) -> str:
        return self.band_status.get((cube, band), "not-loaded")

    # -- parameters and stretch ----------------------------------------------

    def set_params(self, update: dict) -> int:
        """Validate then apply a partial parameter update atomically."""
        with self.lock:
            new = RenderParams(
                wavelengths=list(self.params.wavelengths),
                mode=self.params.mode,
                stretch=self.params.stretch,
                cube_range=self.params.cube_range,
                ground_height=self.params.ground_height,
            )
            if "wavelengths" in update:
                wls = update["wavelengths"]
                if (not isinstance(wls, list) or not 1 <= len(wls) <= 3
                        or not all(isinstance(w, (int, float)) for w in wls)):
                    raise HTTPException(422, "wavelengths must be a list of 1-3 numbers")
                new.wavelengths = [float(w) for w in wls]
            if "mode" in update:
                if update["mode"] not in MODES:
                    raise HTTPException(422, f"unknown mode {update['mode']!r}")
                if update["mode"] in ("radiance", "reflectance") and self.collection.calibration is None:
                    raise HTTPException(422, f"mode {update['mode']!r} needs calibration data")
                if update["mode"] == "reflectance" and self.collection.illumination is None:
                    raise HTTPException(422, "reflectance needs an illumination spectrum")
                new.mode = update["mode"]
            if "stretch" in update:
                if update["stretch"] not in ("none", "common", "per-channel"):
                    raise HTTPException(422, f"unknown stretch {update['stretch']!r}")
                new.stretch = update["stretch"]
            if "cube_range" in update:
                rng = update["cube_range"]
                if rng is not None:
                    if (not isinstance(rng, list) or len(rng) != 2
                            or not all(isinstance(v, int) for v in rng)):
                        raise HTTPException(422, "cube_range must be [first, last]")
                    a, b = rng
                    if not 0 <= a <= b < self.collection.n_cubes:
                        raise HTTPException(422, f"cube_range [{a}, {b}] out of bounds")
                    rng = (a, b)
                new.cube_range = rng
            if "ground_height" in update:
                gh = update["ground_height"]
                if gh is not None and not isinstance(gh, (int, float)):
                    raise HTTPException(422, "ground_height must be a number")
                new.ground_height = None if gh is None else float(gh)

            if new.ground_height is not None and new.ground_height != self.collection.ground.height:
                self.collection.set_ground(new.ground_height)
            self.params = new
            self.generation += 1
            self.stretch_bounds = None  # recomputed for the new content
            self._emit({"type": "params", "generation": self.generation})
            gen = self.generation
        self.ensure_bands(self.current_bands())
        return gen

    def _default_stretch_bounds(self, bands: list[int]) -> tuple[np.ndarray, np.ndarray]:
        """Bounds from the loaded band data (the raw-data histogram path);
        used until a viewport histogram drives the dynamic path."""
        lows, highs = [], []
        per_band: dict[int, tuple[float, float]] = {}
        pooled_lo, pooled_hi = [], []
        for band in bands:
            if band not in per_band:
                values = []
                for cube in range(self.collection.n_cubes):
                    plane = self.band_planes.get((cube, band))
                    if plane is not None:
                        stats = self._band_stats.get((cube, band))
                        if stats is None:
                            s = np.sort(plane.ravel())
                            k_lo = max(1, int(np.ceil(0.02 * s.size)))
                            k_hi = max(1, int(np.ceil(0.98 * s.size)))
                            stats = np.array([s[k_lo - 1], s[k_hi - 1]])
                            self._band_stats[(cube, band)] = stats
                        values.append(stats)
                if values:
                    v = np.array(values)
                    per_band[band] = (float(v[:, 0].min()), float(v[:, 1].max()))
                else:
                    per_band[band] = (0.0, 1.0)
            lo, hi = per_band[band]
            lows.append(lo)
            highs.append(hi)
            pooled_lo.append(lo)
            pooled_hi.append(hi)
        if self.params.stretch == "common":
            lo = min(pooled_lo)
            hi = max(pooled_hi)
            return np.full(len(bands), lo), np.full(len(bands), hi)
        return np.array(lows), np.array(highs)

    # -- tile pyramid ---------------------------------------------------------

    def tile_view(self, z: int, tx: int, ty: int) -> ViewWindow:
        if not 0 <= z <= self.max_zoom:
            raise HTTPException(422, f"zoom {z} outside [0, {self.max_zoom}]")
        n = 1 << z
        if not (0 <= tx < n and 0 <= ty < n):
            raise HTTPException(422, f"tile ({tx}, {ty}) outside zoom {z}")
        extent = self.root_side / n
        gsd = extent / TILE_SIZE
        west = self.anchor[1] + tx * extent
        north = self.anchor[0] - ty * extent
        return ViewWindow.from_grid(west, north, gsd, TILE_SIZE, TILE_SIZE)

    def render_window(self, view: ViewWindow, generation: int | None = None):
        """Render a window under the current params; returns (rgb [0..1],
        covered, unready-mask, per-channel raw values) or None if the
        generation went stale mid-render."""
        with self.lock:
            params = self.params
            bands = self.current_bands()
            cube_range = params.cube_range
            a, b = self.collection.resolve_range(cube_range)
            planes_snapshot = {
                (cube, band): self.band_planes.get((cube, band))
                for band in bands
                for cube in range(a, b + 1)
            }
            meshes = self.collection.meshes_in_range(cube_range)
            handles = self.collection.handles_in_range(cube_range)
            responses = (
                self.collection.responses_in_range(cube_range)
                if params.mode != "raw" else None
            )
            bounds = self.stretch_bounds
        if generation is not None and generation != self.generation:
            return None

        lut = rasterize_geometry(meshes, view, anchor=self.anchor)
        lines = [h.header.lines for h in handles]
        channels = []
        for band in bands:
            if generation is not None and generation != self.generation:
                return None
            planes = []
            for k, cube in enumerate(range(a, b + 1)):
                plane = planes_snapshot[(cube, band)]
                if plane is None:
                    plane = np.zeros((lines[k], self.collection.samples), dtype=np.float32)
                planes.append(plane)
            channels.append(evaluate_band(
                lut, planes, band,
                calib=self.collection.calibration if params.mode in ("radiance", "reflectance") else None,
                responses=responses, mode=params.mode,
                illum=self.collection.illumination,
            ))

        if bounds is None:
            with self.lock:
                bounds = self._default_stretch_bounds(bands)
                self.stretch_bounds = bounds

        rgb = np.zeros((view.height, view.width, 3), dtype=np.float64)
        for c in range(3):
            ch = channels[min(c, len(channels) - 1)]
            if params.stretch == "none":
                rgb[:, :, c] = np.clip(ch / 255.0, 0.0, 1.0)
            else:
                ci = min(c, len(channels) - 1)
                rgb[:, :, c] = apply_stretch(ch, float(bounds[0][ci]), float(bounds[1][ci]))

        # cubes whose data is not yet loaded show neutral gray
        cube_map = lut.cube_map()
        unready = np.zeros(lut.covered.shape, dtype=bool)
        for k, cube in enumerate(range(a, b + 1)):
            if any(planes_snapshot[(cube, band)] is None for band in bands):
                unready |= cube_map == k
        rgb[unready] = GRAY

        if generation is not None and generation != self.generation:
            return None
        return rgb, lut.covered, unready, channels

    # -- events ---------------------------------------------------------------

    def _emit(self, event: dict) -> None:
        for q in list(self._subscribers):
            try:
                q.put_nowait(event)
            except queue.Full:
                pass

    def subscribe(self) -> queue.Queue:
        q: queue.Queue = queue.Queue(maxsize=1000)
        with self.lock:
            self._subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        with self.lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    # -- export jobs ------------------------------------------------------------

    def start_export(self, body: dict) -> ExportJob:
        wavelengths = body.get("wavelengths", "all")
        if wavelengths == "all":
            wavelengths = [float(w) for w in self.collection.wavelengths]
        elif not isinstance(wavelengths, list) or not wavelengths:
            raise HTTPException(422, "wavelengths must be 'all' or a non-empty list")
        gsd = body.get("gsd")
        if not isinstance(gsd, (int, float)) or gsd <= 0:
            raise HTTPException(422, "gsd must be a positive number")
        output = body.get("output")
        if not output:
            raise HTTPException(422, "output path required")
        mode = body.get("mode", "radiance")
        if mode not in MODES:
            raise HTTPException(422, f"unknown mode {mode!r}")
        if mode in ("radiance", "reflectance") and self.collection.calibration is None:
            raise HTTPException(422, f"mode {mode!r} needs calibration data")
        cube_range = self.params.cube_range

        with self.lock:
            self._job_counter += 1
            job = ExportJob(job_id=f"job-{self._job_counter:04d}")
            self.jobs[job.job_id] = job

        def run():
            job.status = "running"
            self._emit({"type": "job", "id": job.job_id, "status": "running", "progress": 0.0})

            def progress(done, total):
                job.progress = done / total
                self._emit({"type": "job", "id": job.job_id, "status": "running",
                            "progress": job.progress})

            try:
                report = raster.export_cube(
                    self.collection, wavelengths, float(gsd), output,
                    mode=mode, cube_range=cube_range, progress=progress,
                )
                job.status = "done"
                job.progress = 1.0
                job.output = str(report.data_path)
            except Exception as e:
                job.status = "failed"
                job.error = str(e)
            self._emit({"type": "job", "id": job.job_id, "status": job.status,
                        "progress": job.progress, "output": job.output,
                        "error": job.error})

        threading.Thread(target=run, daemon=True).start()
        return job

    def shutdown(self) -> None:
        for _ in self._load_threads:
            self._load_queue.put(None)


# ---------------------------------------------------------------------------
# FastAPI app
# ---------------------------------------------------------------------------

def create_app(session: ViewerSession, frontend_dir: Path | None = None) -> FastAPI:
    app = FastAPI(title="swathcube viewer")
    app.state.session = session

    @app.get("/api/metadata")
    def metadata():
        s = session
        with s.lock:
            b = s.collection.bounds()
            bands = s.current_bands()
            cubes = []
            for i, h in enumerate(s.collection.handles):
                status = [s.band_state(i, band) for band in bands]
                if all(v == "ready" for v in status):
                    agg = "ready"
                elif any(v == "loading" for v in status):
                    agg = "loading"
                else:
                    agg = "not-loaded"
                cubes.append({
                    "name": h.name,
                    "samples": h.header.samples,
                    "lines": h.header.lines,
                    "bands": h.header.bands,
                    "status": agg,
                })
            return {
                "bounds": {
                    "north_min": b.north_min, "north_max": b.north_max,
                    "east_min": b.east_min, "east_max": b.east_max,
                },
                "origin": {
                    "easting": s.collection.origin.utm.easting,
                    "northing": s.collection.origin.utm.northing,
                    "zone": s.collection.origin.utm.zone,
                    "hemisphere": s.collection.origin.utm.hemisphere,
                },
                "cubes": cubes,
                "wavelengths": [float(w) for w in s.collection.wavelengths],
                "ground_height": s.collection.ground.height,
                "ground_estimated": s.collection.ground_estimated,
                "tile_size": TILE_SIZE,
                "max_zoom": s.max_zoom,
                "root_side": s.root_side,
                "generation": s.generation,
                "params": {
                    "wavelengths": s.params.wavelengths,
                    "mode": s.params.mode,
                    "stretch": s.params.stretch,
                    "cube_range": s.params.cube_range,
                    "ground_height": s.collection.ground.height,
                },
            }

    @app.get("/api/tile/{z}/{tx}/{ty}")
    def tile(z: int, tx: int, ty: int, gen: int | None = Query(default=None)):
        s = session
        if gen is not None and gen != s.generation:
            raise HTTPException(409, "superseded generation")
        view = s.tile_view(z, tx, ty)
        s.ensure_bands(s.current_bands())

        def content_key() -> str:
            bands = s.current_bands()
            if s.stretch_bounds is None and s.params.stretch != "none":
                s.stretch_bounds = s._default_stretch_bounds(bands)
            return f"{z}/{tx}/{ty}/" + s.params.content_key(
                bands, s.load_epoch, s.stretch_bounds
            )

        with s.lock:
            key = content_key()
            cached = s.tile_cache.get(key)
            if cached is not None:
                s.tile_cache.move_to_end(key)
                png, coverage = cached
                return Response(png, media_type="image/png",
                                headers={"X-Coverage": f"{coverage:.4f}",
                                         "X-Generation": str(s.generation)})

        result = s.render_window(view, generation=gen)
        if result is None:
            raise HTTPException(409, "superseded generation")
        rgb, covered, _, _ = result
        rgba = np.empty((view.height, view.width, 4), dtype=np.uint8)
        rgba[:, :, :3] = np.round(rgb * 255.0).astype(np.uint8)
        rgba[:, :, 3] = np.where(covered, 255, 0)
        buf = io.BytesIO()
        Image.fromarray(rgba, "RGBA").save(buf, format="PNG", compress_level=4)
        png = buf.getvalue()
        coverage = float(covered.mean())

        with s.lock:
            # cache only if the content state is still what we rendered;
            # a mid-render parameter or load change means stale output
            if content_key() == key:
                s.tile_cache[key] = (png, coverage)
                while len(s.tile_cache) > s.tile_cache_size:
                    s.tile_cache.popitem(last=False)
        return Response(png, media_type="image/png",
                        headers={"X-Coverage": f"{coverage:.4f}",
                                 "X-Generation": str(s.generation)})

    @app.post("/api/params")
    def set_params(update: dict):
        gen = session.set_params(update)
        return {"generation": gen, "params": {
            "wavelengths": session.params.wavelengths,
            "mode": session.params.mode,
            "stretch": session.params.stretch,
            "cube_range": session.params.cube_range,
            "ground_height": session.collection.ground.height,
        }}

    @app.get("/api/histogram")
    def histogram(viewport: str, width: int = 256, height: int = 256):
        try:
            cn, ce, sn, se = (float(v) for v in viewport.split(","))
            if sn <= 0 or se <= 0:
                raise ValueError
        except ValueError:
            raise HTTPException(422, "viewport must be 'center_n,center_e,scale_n,scale_e'") from None
        width = min(max(width, 16), 512)
        height = min(max(height, 16), 512)
        view = ViewWindow(cn, ce, sn, se, width, height)
        result = session.render_window(view)
        if result is None:
            raise HTTPException(409, "superseded generation")
        _, covered, unready, channels = result
        usable = covered & ~unready
        if not usable.any():
            return {"bins": [], "range": None, "count": 0}
        values = [ch[usable] for ch in channels]
        pooled = np.concatenate(values)
        lo, hi = float(pooled.min()), float(pooled.max())
        if lo == hi:
            hi = lo + 1.0
        edges = np.linspace(lo, hi, HISTOGRAM_BINS + 1)
        counts = [np.histogram(v, bins=edges)[0].tolist() for v in values]

        with session.lock:
            if session.params.stretch != "none":
                lows, highs = [], []
                for c in counts:
                    b_lo, b_hi = stretch_bounds_from_histogram(np.array(c), edges)
                    lows.append(b_lo)
                    highs.append(b_hi)
                if session.params.stretch == "common":
                    pooled_counts = np.sum(np.array(counts), axis=0)
                    b_lo, b_hi = stretch_bounds_from_histogram(pooled_counts, edges)
                    lows = [b_lo] * len(counts)
                    highs = [b_hi] * len(counts)
                session.stretch_bounds = (np.array(lows), np.array(highs))
        return {
            "bins": counts,
            "range": [lo, hi],
            "count": int(usable.sum()),
            "bounds": None if session.stretch_bounds is None else {
                "low": [float(v) for v in session.stretch_bounds[0]],
                "high": [float(v) for v in session.stretch_bounds[1]],
            },
        }

    @app.post("/api/export")
    def export(body: dict):
        job = session.start_export(body)
        return {"id": job.job_id, "status": job.status}

    @app.get("/api/export/{job_id}")
    def export_status(job_id: str):
        job = session.jobs.get(job_id)
        if job is None:
            raise HTTPException(404, f"no job {job_id}")
        return {"id": job.job_id, "status": job.status, "progress": job.progress,
                "output": job.output, "error": job.error}

    @app.get("/api/events")
    def events(max_events: int | None = Query(default=None)):
        q = session.subscribe()

        def stream():
            sent = 0
            try:
                yield f"data: {json.dumps({'type': 'hello', 'generation': session.generation})}\n\n"
                while max_events is None or sent < max_events:
                    try:
                        event = q.get(timeout=10.0)
                    except queue.Empty:
                        yield ": keepalive\n\n"
                        continue
                    yield f"data: {json.dumps(event)}\n\n"
                    sent += 1
            finally:
                session.unsubscribe(q)

        return StreamingResponse(stream(), media_type="text/event-stream")

    if frontend_dir is not None and frontend_dir.exists():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="ui")
    else:
        @app.get("/")
        def index():
            return HTMLResponse(
                "<html><body><h1>swathcube viewer service</h1>"
                "<p>The browser UI is not built; the API under /api is live.</p>"
                "</body></html>"
            )

    return app


def main(argv: list[str] | None = None) -> int:
    p = argparse.ArgumentParser(prog="swathcube-serve",
                                description="Serve the interactive viewer for a collection.")
    p.add_argument("--cubes", type=Path, required=True,
                   help="text file listing cube headers in capture order")
    p.add_argument("--poses", type=Path, required=True)
    p.add_argument("--calib", type=Path)
    p.add_argument("--illum", type=Path)
    p.add_argument("--ground", default="auto")
    p.add_argument("--fov", type=float, default=47.5)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8777)
    p.add_argument("--frontend", type=Path, default=None,
                   help="directory with the built browser UI")
    args = p.parse_args(argv)

    base = args.cubes.parent
    cube_paths = [
        (base / line.strip()) if not Path(line.strip()).is_absolute() else Path(line.strip())
        for line in args.cubes.read_text().splitlines()
        if line.strip() and not line.strip().startswith("#")
    ]
    ground = args.ground if args.ground == "auto" else float(args.ground)
    collection = load_collection(
        cube_paths, args.poses, fov_deg=args.fov, ground=ground,
        calibration_path=args.calib, illumination_path=args.illum,
    )
    session = ViewerSession(collection)
    frontend = args.frontend
    if frontend is None:
        candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        frontend = candidate if candidate.exists() else None
    app = create_app(session, frontend_dir=frontend)

    import uvicorn

    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
