"""ENVI datacube reading/writing and pose-log ingestion.

Cubes are header (.hdr) + headerless raw binary pairs. Reads are
band-sequential: a BSQ band plane is one contiguous range of the data file,
and the handle counts data-file read operations so tests (and curious
users) can verify access patterns. All integer sample types are promoted to
float32 on read so downstream processing has a single value path.
"""

from __future__ import annotations

import csv
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .geodesy import InsRecord, GeodeticPoint

ENVI_DTYPES = {
    1: np.dtype(np.uint8),
    2: np.dtype(np.int16),
    3: np.dtype(np.int32),
    4: np.dtype(np.float32),
    5: np.dtype(np.float64),
    12: np.dtype(np.uint16),
    13: np.dtype(np.uint32),
}

_NATIVE_BYTE_ORDER = 0 if np.little_endian else 1


class HeaderParseError(ValueError):
    """ENVI header is missing, malformed, or inconsistent with its data file."""


class CubeDataError(ValueError):
    """Band request or data file contents are invalid."""


class PoseLogError(ValueError):
    """Pose-log CSV is malformed."""


@dataclass(frozen=True)
class MapInfo:
    """UTM georeference: tie point is the center of the top-left pixel."""

    easting: float
    northing: float
    gsd_x: float
    gsd_y: float
    zone: int
    hemisphere: str  # "North" | "South"


@dataclass
class CubeHeader:
    samples: int
    lines: int
    bands: int
    interleave: str
    data_type: int
    byte_order: int
    wavelengths: np.ndarray
    framerate: float | None = None
    exposure: float | None = None
    gain: float | None = None
    line_times: np.ndarray | None = None
    map_info: MapInfo | None = None

    @property
    def dtype(self) -> np.dtype:
        return ENVI_DTYPES[self.data_type]

    @property
    def plane_bytes(self) -> int:
        return self.samples * self.lines * self.dtype.itemsize


@dataclass
class BandPlane:
    cube: str
    band: int
    values: np.ndarray  # (lines, samples) float32


@dataclass
class CubeHandle:
    """Open cube: metadata plus the means to fetch bands on demand."""

    header: CubeHeader
    data_path: Path
    name: str
    io_reads: int = 0
    _cache: np.ndarray | None = field(default=None, repr=False)

    @property
    def preloaded(self) -> bool:
        return self._cache is not None


# ---------------------------------------------------------------------------
# Header parsing
# ---------------------------------------------------------------------------

def _tokenize_header(path: Path) -> dict[str, tuple[str, int]]:
    """Parse ``key = value`` lines into {key: (raw_value, line_number)}.

    Brace-delimited values may span multiple lines.
    """
    with open(path, "r") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "ENVI":
        raise HeaderParseError(f"{path}:1: missing ENVI magic line")

    entries: dict[str, tuple[str, int]] = {}
    i = 1
    while i < len(lines):
        raw = lines[i].strip()
        lineno = i + 1
        i += 1
        if not raw or raw.startswith(";"):
            continue
        if "=" not in raw:
            raise HeaderParseError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = raw.partition("=")
        key = key.strip().lower()
        value = value.strip()
        if value.startswith("{"):
            while "}" not in value:
                if i >= len(lines):
                    raise HeaderParseError(f"{path}:{lineno}: unterminated '{{' value for {key!r}")
                value += " " + lines[i].strip()
                i += 1
            value = value[1 : value.index("}")].strip()
        entries[key] = (value, lineno)
    return entries


def _float_list(raw: str) -> np.ndarray:
    parts = [p for p in raw.replace(",", " ").split() if p]
    return np.array([float(p) for p in parts], dtype=np.float64)


def read_header(path: str | Path) -> CubeHeader:
    """Read and validate an ENVI header file.

    Checks required keys, wavelength count and monotonicity, and that the
    sibling data file size matches samples*lines*bands*itemsize. Does not
    read any data-file bytes.
    """
    path = Path(path)
    if not path.exists():
        raise HeaderParseError(f"header file not found: {path}")
    entries = _tokenize_header(path)

    def require(key: str) -> tuple[str, int]:
        if key not in entries:
            raise HeaderParseError(f"{path}: missing required key {key!r}")
        return entries[key]

    def require_int(key: str) -> int:
        value, lineno = require(key)
        try:
            return int(value)
        except ValueError:
            raise HeaderParseError(f"{path}:{lineno}: {key!r} is not an integer: {value!r}") from None

    samples = require_int("samples")
    lines = require_int("lines")
    bands = require_int("bands")
    data_type = require_int("data type")
    byte_order = require_int("byte order")
    interleave_raw, ilv_line = require("interleave")
    interleave = interleave_raw.lower()

    if data_type not in ENVI_DTYPES:
        raise HeaderParseError(f"{path}: unsupported data type {data_type}")
    if byte_order not in (0, 1):
        raise HeaderParseError(f"{path}: byte order must be 0 or 1, got {byte_order}")
    if interleave not in ("bsq", "bil", "bip"):
        raise HeaderParseError(f"{path}:{ilv_line}: unknown interleave {interleave!r}")
    if interleave != "bsq":
        warnings.warn(
            f"{path.name}: interleave {interleave!r} is supported but reads are "
            "not contiguous; expect poor performance",
            stacklevel=2,
        )

    wl_raw, wl_line = require("wavelength")
    wavelengths = _float_list(wl_raw)
    if len(wavelengths) != bands:
        raise HeaderParseError(
            f"{path}:{wl_line}: wavelength list has {len(wavelengths)} entries, expected {bands}"
        )
    if np.any(np.diff(wavelengths) <= 0.0):
        raise HeaderParseError(f"{path}:{wl_line}: wavelengths must be strictly increasing")

    line_times = None
    if "sc line times" in entries:
        lt_raw, lt_line = entries["sc line times"]
        line_times = _float_list(lt_raw)
        if len(line_times) != lines:
            raise HeaderParseError(
                f"{path}:{lt_line}: sc line times has {len(line_times)} entries, expected {lines}"
            )

    map_info = None
    if "map info" in entries:
        mi_raw, mi_line = entries["map info"]
        parts = [p.strip() for p in mi_raw.split(",")]
        if len(parts) < 10 or parts[0].upper() != "UTM":
            raise HeaderParseError(f"{path}:{mi_line}: unsupported map info {mi_raw!r}")
        map_info = MapInfo(
            easting=float(parts[3]),
            northing=float(parts[4]),
            gsd_x=float(parts[5]),
            gsd_y=float(parts[6]),
            zone=int(parts[7]),
            hemisphere=parts[8],
        )

    def opt_float(key: str) -> float | None:
        if key not in entries:
            return None
        return float(entries[key][0])

    header = CubeHeader(
        samples=samples,
        lines=lines,
        bands=bands,
        interleave=interleave,
        data_type=data_type,
        byte_order=byte_order,
        wavelengths=wavelengths,
        framerate=opt_float("sc framerate"),
        exposure=opt_float("sc exposure"),
        gain=opt_float("sc gain"),
        line_times=line_times,
        map_info=map_info,
    )

    data_path = _data_path_for(path)
    if data_path is not None:
        expected = header.plane_bytes * bands
        actual = os.stat(data_path).st_size
        if expected != actual:
            raise HeaderParseError(
                f"{path}: data file {data_path.name} is {actual} bytes, "
                f"expected {expected} for {samples}x{lines}x{bands} "
                f"type {data_type} ({interleave})"
            )
    return header


def _data_path_for(header_path: Path) -> Path | None:
    stem = header_path.with_suffix("") if header_path.suffix == ".hdr" else header_path
    for candidate in (stem, stem.with_suffix(".img"), stem.with_suffix(".dat")):
        if candidate.exists() and candidate != header_path:
            return candidate
    return None


def open_cube(header_path: str | Path) -> CubeHandle:
    """Metadata-only load: parse the header and locate the data file."""
    header_path = Path(header_path)
    header = read_header(header_path)
    data_path = _data_path_for(header_path)
    if data_path is None:
        raise CubeDataError(f"no data file found for {header_path}")
    return CubeHandle(header=header, data_path=data_path, name=data_path.stem)


# ---------------------------------------------------------------------------
# Band access
# ---------------------------------------------------------------------------

def read_band(h: CubeHandle, band: int, native: bool = False) -> BandPlane:
    """Read one full band plane, shape (lines, samples).

    Values are promoted to float32 (always lossless for the supported
    integer types) so there is a single downstream value path; ``native``
    skips the promotion and hands back the stored dtype in machine byte
    order, which high-volume consumers use to avoid converting data the
    evaluation kernel can read directly. BSQ cubes use exactly one
    contiguous range read; preloaded cubes are served from memory with no
    file access.
    """
    hdr = h.header
    if not 0 <= band < hdr.bands:
        raise CubeDataError(f"{h.name}: band {band} out of range [0, {hdr.bands})")
    if h._cache is not None:
        return BandPlane(h.name, band, h._cache[band])

    dtype = hdr.dtype
    if hdr.byte_order != _NATIVE_BYTE_ORDER:
        dtype = dtype.newbyteorder()

    if hdr.interleave == "bsq":
        offset = band * hdr.plane_bytes
        with open(h.data_path, "rb") as fh:
            fh.seek(offset)
            buf = fh.read(hdr.plane_bytes)
        h.io_reads += 1
        if len(buf) != hdr.plane_bytes:
            raise CubeDataError(
                f"{h.name}: truncated read for band {band}: got {len(buf)} bytes"
            )
        raw = np.frombuffer(buf, dtype=dtype).reshape(hdr.lines, hdr.samples)
    else:
        mm = np.memmap(h.data_path, dtype=dtype, mode="r")
        h.io_reads += 1
        if hdr.interleave == "bil":
            raw = mm.reshape(hdr.lines, hdr.bands, hdr.samples)[:, band, :]
        else:  # bip
            raw = mm.reshape(hdr.lines, hdr.samples, hdr.bands)[:, :, band]
        raw = np.array(raw)

    out_dtype = hdr.dtype.newbyteorder("=") if native else np.dtype(np.float32)
    values = np.ascontiguousarray(raw, dtype=out_dtype)
    values.setflags(write=False)
    return BandPlane(h.name, band, values)


def preload(handles: Iterable[CubeHandle]) -> None:
    """Load whole cubes into memory so later band reads touch no files.

    An allocation failure falls back to on-demand reads for that cube with
    a warning; a missing or truncated file raises before any band request.
    """
    for h in handles:
        if h._cache is not None:
            continue
        hdr = h.header
        actual = os.stat(h.data_path).st_size
        expected = hdr.plane_bytes * hdr.bands
        if actual != expected:
            raise CubeDataError(
                f"{h.name}: data file is {actual} bytes, expected {expected}"
            )
        dtype = hdr.dtype
        if hdr.byte_order != _NATIVE_BYTE_ORDER:
            dtype = dtype.newbyteorder()
        try:
            raw = np.fromfile(h.data_path, dtype=dtype)
            h.io_reads += 1
            if hdr.interleave == "bsq":
                cube = raw.reshape(hdr.bands, hdr.lines, hdr.samples)
            elif hdr.interleave == "bil":
                cube = raw.reshape(hdr.lines, hdr.bands, hdr.samples).transpose(1, 0, 2)
            else:
                cube = raw.reshape(hdr.lines, hdr.samples, hdr.bands).transpose(2, 0, 1)
            cache = np.ascontiguousarray(cube, dtype=np.float32)
            cache.setflags(write=False)
            h._cache = cache
        except MemoryError:
            warnings.warn(
                f"{h.name}: not enough memory to preload; falling back to on-demand reads",
                stacklevel=2,
            )


# ---------------------------------------------------------------------------
# Writing
# ---------------------------------------------------------------------------

def _format_list(values: np.ndarray, per_line: int = 16) -> str:
    parts = [repr(float(v)) for v in values]
    chunks = [", ".join(parts[i : i + per_line]) for i in range(0, len(parts), per_line)]
    return "{ " + ",\n  ".join(chunks) + " }"


def format_header(header: CubeHeader) -> str:
    out = ["ENVI"]
    out.append(f"samples = {header.samples}")
    out.append(f"lines = {header.lines}")
    out.append(f"bands = {header.bands}")
    out.append("header offset = 0")
    out.append("file type = ENVI Standard")
    out.append(f"data type = {header.data_type}")
    out.append(f"interleave = {header.interleave}")
    out.append(f"byte order = {header.byte_order}")
    if header.map_info is not None:
        mi = header.map_info
        out.append(
            "map info = {UTM, 1, 1, "
            f"{mi.easting!r}, {mi.northing!r}, {mi.gsd_x!r}, {mi.gsd_y!r}, "
            f"{mi.zone}, {mi.hemisphere}, WGS-84}}"
        )
    out.append(f"wavelength = {_format_list(header.wavelengths)}")
    if header.line_times is not None:
        out.append(f"sc line times = {_format_list(header.line_times)}")
    if header.framerate is not None:
        out.append(f"sc framerate = {header.framerate!r}")
    if header.exposure is not None:
        out.append(f"sc exposure = {header.exposure!r}")
    if header.gain is not None:
        out.append(f"sc gain = {header.gain!r}")
    return "\n".join(out) + "\n"


def write_cube(
    path: str | Path,
    header: CubeHeader,
    planes: Iterable[np.ndarray],
) -> tuple[Path, Path]:
    """Write an ENVI BSQ cube from a band-sequential stream of planes.

    ``path`` names the data file; ``<path>.hdr`` is written next to it.
    A plane with the wrong shape aborts the write and removes the partial
    files. Returns (header_path, data_path).
    """
    if header.interleave != "bsq":
        raise ValueError("only BSQ cubes are written")
    path = Path(path)
    if path.suffix == ".hdr":
        path = path.with_suffix("")
    hdr_path = path.with_name(path.name + ".hdr")
    dtype = header.dtype

    header = _with_native_order(header)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    try:
        with open(path, "wb") as fh:
            for plane in planes:
                plane = np.asarray(plane)
                if plane.shape != (header.lines, header.samples):
                    raise CubeDataError(
                        f"band {count}: plane shape {plane.shape} does not match "
                        f"(lines, samples) = ({header.lines}, {header.samples})"
                    )
                fh.write(np.ascontiguousarray(plane, dtype=dtype).tobytes())
                count += 1
        if count != header.bands:
            raise CubeDataError(f"wrote {count} bands, header declares {header.bands}")
    except Exception:
        path.unlink(missing_ok=True)
        hdr_path.unlink(missing_ok=True)
        raise

    hdr_path.write_text(format_header(header))
    return hdr_path, path


def _with_native_order(header: CubeHeader) -> CubeHeader:
    if header.byte_order == _NATIVE_BYTE_ORDER:
        return header
    from dataclasses import replace

    return replace(header, byte_order=_NATIVE_BYTE_ORDER)


# ---------------------------------------------------------------------------
# Pose log
# ---------------------------------------------------------------------------

POSE_LOG_COLUMNS = ["timestamp", "lat", "lon", "alt", "roll", "pitch", "yaw"]


def read_pose_log(path: str | Path) -> list[InsRecord]:
    """Read the pose-log CSV: timestamp,lat,lon,alt,roll,pitch,yaw.

    Angles are degrees in the aerospace ZYX convention (yaw about down,
    then pitch, then roll). Records must be strictly increasing in time.
    """
    path = Path(path)
    records: list[InsRecord] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            head = next(reader)
        except StopIteration:
            raise PoseLogError(f"{path}: empty pose log") from None
        if [c.strip().lower() for c in head] != POSE_LOG_COLUMNS:
            raise PoseLogError(
                f"{path}:1: expected columns {','.join(POSE_LOG_COLUMNS)}, "
                f"got {','.join(head)}"
            )
        for i, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 7:
                raise PoseLogError(f"{path}:{i}: expected 7 columns, got {len(row)}")
            try:
                t, lat, lon, alt, roll, pitch, yaw = (float(v) for v in row)
            except ValueError as e:
                raise PoseLogError(f"{path}:{i}: {e}") from None
            records.append(
                InsRecord(t, GeodeticPoint(lat, lon, alt), roll, pitch, yaw)
            )
    if not records:
        raise PoseLogError(f"{path}: no records in pose log")
    for i in range(1, len(records)):
        if records[i].timestamp <= records[i - 1].timestamp:
            raise PoseLogError(
                f"{path}: row {i + 2}: timestamp {records[i].timestamp} not after "
                f"{records[i - 1].timestamp}"
            )
    return records


def write_pose_log(path: str | Path, records: list[InsRecord]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(POSE_LOG_COLUMNS)
        for r in records:
            writer.writerow(
                [
                    repr(float(r.timestamp)),
                    repr(float(r.position.latitude)),
                    repr(float(r.position.longitude)),
                    repr(float(r.position.altitude)),
                    repr(float(r.roll)),
                    repr(float(r.pitch)),
                    repr(float(r.yaw)),
                ]
            )
    return path
