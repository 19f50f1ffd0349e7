"""Radiometric calibration and display stretch.

Raw digital numbers convert to radiance as

    (raw - dark[band, sample]) * rad[band, sample] / response[line]

where ``dark`` is the covered-sensor offset line, ``rad`` converts
dark-corrected DN to radiance units, and ``response`` scales for the
capture settings relative to the settings the calibration was measured at.
Radiance units are carried as opaque metadata. Values below the dark level
stay negative; nothing is clamped.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import cube_io

Mode = str  # "raw" | "relative" | "radiance" | "reflectance"
MODES = ("raw", "relative", "radiance", "reflectance")


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class CaptureSettings:
    framerate: float
    exposure: float
    gain: float

    def __post_init__(self):
        if self.framerate <= 0 or self.exposure <= 0 or self.gain <= 0:
            raise CalibrationError(f"capture settings must be positive: {self}")


@dataclass(frozen=True)
class CalibrationSet:
    """Dark line and radiance coefficients, (bands, samples) each."""

    dark: np.ndarray
    rad: np.ndarray
    reference: CaptureSettings
    wavelengths: np.ndarray | None = None

    def __post_init__(self):
        if self.dark.shape != self.rad.shape:
            raise CalibrationError(
                f"dark {self.dark.shape} and rad {self.rad.shape} shapes differ"
            )
        if np.any(self.rad <= 0.0):
            raise CalibrationError("radiance coefficients must be strictly positive")


@dataclass(frozen=True)
class IlluminationSpectrum:
    """Per-band scene illumination radiance for reflectance conversion."""

    values: np.ndarray

    def __post_init__(self):
        if np.any(self.values <= 0.0) or not np.all(np.isfinite(self.values)):
            raise CalibrationError("illumination spectrum must be finite and positive")

    @staticmethod
    def from_csv(path: str | Path, band_wavelengths: np.ndarray) -> "IlluminationSpectrum":
        """Load a two-column (wavelength_nm, radiance) CSV and resample it
        linearly onto the cube's band wavelengths."""
        wl, val = [], []
        with open(path, newline="") as fh:
            for i, row in enumerate(csv.reader(fh), start=1):
                if not row or not row[0].strip():
                    continue
                try:
                    w, v = float(row[0]), float(row[1])
                except (ValueError, IndexError):
                    if i == 1:
                        continue  # header row
                    raise CalibrationError(f"{path}:{i}: bad spectrum row {row!r}") from None
                wl.append(w)
                val.append(v)
        if len(wl) < 2:
            raise CalibrationError(f"{path}: need at least two spectrum points")
        order = np.argsort(wl)
        resampled = np.interp(np.asarray(band_wavelengths), np.array(wl)[order], np.array(val)[order])
        return IlluminationSpectrum(resampled)


@dataclass(frozen=True)
class StretchBounds:
    """Per-channel display bounds: low renders black, high renders white."""

    low: np.ndarray
    high: np.ndarray
    mode: str  # "none" | "common" | "per-channel"

    def __post_init__(self):
        if np.any(self.low > self.high):
            raise ValueError("stretch low must not exceed high")


def compute_response(settings: CaptureSettings, reference: CaptureSettings) -> float:
    """Per-line camera response relative to the calibration reference.

    Linear in exposure and gain; 1.0 at the reference settings. Framerate
    does not enter (exposure already captures integration time).
    """
    return (settings.exposure / reference.exposure) * (settings.gain / reference.gain)


def response_curve(header: cube_io.CubeHeader, reference: CaptureSettings) -> np.ndarray:
    """Per-line response for a cube; constant when settings are per-cube."""
    if header.exposure is None or header.gain is None or header.framerate is None:
        raise CalibrationError("cube header lacks capture settings (sc exposure/gain/framerate)")
    r = compute_response(
        CaptureSettings(header.framerate, header.exposure, header.gain), reference
    )
    return np.full(header.lines, r, dtype=np.float64)


def calibrate(
    raw: float,
    band: int,
    line: int,
    sample: int,
    calib: CalibrationSet | None,
    response: np.ndarray | None,
    mode: Mode,
) -> float:
    """Convert one raw DN to the requested processing mode.

    raw mode returns the DN unchanged (dark = 0, rad = 1, response = 1);
    relative mode applies only the response; radiance applies the full
    formula and requires a CalibrationSet.
    """
    if mode not in MODES:
        raise CalibrationError(f"unknown mode {mode!r}")
    if mode == "raw":
        return float(raw)
    resp = 1.0 if response is None else float(response[line])
    if mode == "relative":
        return float(raw) / resp
    if calib is None:
        raise CalibrationError(f"mode {mode!r} requires calibration data")
    return float(
        (raw - calib.dark[band, sample]) * calib.rad[band, sample] / resp
    )


def calibrate_plane(
    values: np.ndarray,
    band: int,
    calib: CalibrationSet | None,
    response: np.ndarray | None,
    mode: Mode,
) -> np.ndarray:
    """Vectorized calibrate over a (lines, samples) plane."""
    dark, scale = band_coefficients(band, calib, mode)
    resp = np.ones(values.shape[0]) if response is None else np.asarray(response)
    return (values - dark[None, :]) * scale[None, :] / resp[:, None]


def band_coefficients(
    band: int,
    calib: CalibrationSet | None,
    mode: Mode,
    illum: IlluminationSpectrum | None = None,
    samples: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """(dark, scale) vectors over samples realizing the mode for one band.

    The fragment evaluation is always (raw - dark[s]) * scale[s] / response,
    so disabled stages are expressed as dark = 0 / scale = 1, and the
    reflectance divide folds into scale.
    """
    if mode not in MODES:
        raise CalibrationError(f"unknown mode {mode!r}")
    if mode in ("raw", "relative"):
        n = samples if samples is not None else (calib.dark.shape[1] if calib else 1)
        return np.zeros(n), np.ones(n)
    if calib is None:
        raise CalibrationError(f"mode {mode!r} requires calibration data")
    dark = np.asarray(calib.dark[band], dtype=np.float64)
    scale = np.asarray(calib.rad[band], dtype=np.float64)
    if mode == "reflectance":
        if illum is None:
            raise CalibrationError("reflectance mode requires an illumination spectrum")
        scale = scale / illum.values[band]
    return dark, scale


def to_reflectance(radiance: float, band: int, illum: IlluminationSpectrum) -> float:
    """Radiance to unitless reflectance; may exceed 1 for specular pixels."""
    return float(radiance) / float(illum.values[band])


def nearest_band(wavelengths: np.ndarray, target_nm: float) -> int:
    """Index of the band whose wavelength is closest to the target; ties go low."""
    wavelengths = np.asarray(wavelengths)
    if wavelengths.size == 0:
        raise ValueError("empty wavelength list")
    return int(np.argmin(np.abs(wavelengths - target_nm)))


def _nearest_rank(sorted_values: np.ndarray, fraction: float) -> float:
    n = len(sorted_values)
    k = max(1, int(np.ceil(fraction * n)))
    return float(sorted_values[k - 1])


def stretch_bounds(
    channels: list[np.ndarray],
    mode: str,
    low_fraction: float = 0.02,
    high_fraction: float = 0.98,
) -> StretchBounds:
    """2%/98% nearest-rank stretch bounds from per-channel value samples.

    ``common`` pools every channel into one low/high pair; ``per-channel``
    computes independent pairs. Uncovered/background pixels must already be
    excluded by the caller. All-equal input degenerates to low == high.
    """
    if mode == "none":
        n = len(channels)
        return StretchBounds(np.zeros(n), np.ones(n), "none")
    if mode not in ("common", "per-channel"):
        raise ValueError(f"unknown stretch mode {mode!r}")
    for ch in channels:
        if ch.size == 0:
            raise ValueError("stretch needs at least one value per channel")
    if mode == "common":
        pooled = np.sort(np.concatenate([np.ravel(c) for c in channels]))
        lo = _nearest_rank(pooled, low_fraction)
        hi = _nearest_rank(pooled, high_fraction)
        n = len(channels)
        return StretchBounds(np.full(n, lo), np.full(n, hi), "common")
    lows, highs = [], []
    for ch in channels:
        s = np.sort(np.ravel(ch))
        lows.append(_nearest_rank(s, low_fraction))
        highs.append(_nearest_rank(s, high_fraction))
    return StretchBounds(np.array(lows), np.array(highs), "per-channel")


def stretch_bounds_from_histogram(
    counts: np.ndarray,
    edges: np.ndarray,
    low_fraction: float = 0.02,
    high_fraction: float = 0.98,
) -> tuple[float, float]:
    """Approximate nearest-rank bounds from a binned histogram.

    Used for the dynamic screen-content path where exact sorting of every
    visible pixel would be wasteful; resolution is one bin width.
    """
    total = int(counts.sum())
    if total == 0:
        raise ValueError("empty histogram")
    cum = np.cumsum(counts)
    k_low = max(1, int(np.ceil(low_fraction * total)))
    k_high = max(1, int(np.ceil(high_fraction * total)))
    i_low = int(np.searchsorted(cum, k_low))
    i_high = int(np.searchsorted(cum, k_high))
    centers = (edges[:-1] + edges[1:]) / 2.0
    return float(centers[i_low]), float(centers[i_high])


def apply_stretch(values: np.ndarray, low: float, high: float) -> np.ndarray:
    """Map values to [0, 1] display range; a degenerate range maps to mid-gray."""
    if high == low:
        return np.full_like(np.asarray(values, dtype=np.float64), 0.5)
    return np.clip((np.asarray(values, dtype=np.float64) - low) / (high - low), 0.0, 1.0)


def load_calibration(header_path: str | Path) -> CalibrationSet:
    """Load a calibration ENVI pair: line 0 is the dark line, line 1 the
    radiance coefficients; reference settings come from the extension keys."""
    handle = cube_io.open_cube(header_path)
    hdr = handle.header
    if hdr.lines != 2:
        raise CalibrationError(
            f"calibration cube must have 2 lines (dark, rad), got {hdr.lines}"
        )
    if hdr.framerate is None or hdr.exposure is None or hdr.gain is None:
        raise CalibrationError("calibration cube lacks reference capture settings")
    dark = np.empty((hdr.bands, hdr.samples), dtype=np.float64)
    rad = np.empty((hdr.bands, hdr.samples), dtype=np.float64)
    cube_io.preload([handle])
    for b in range(hdr.bands):
        plane = cube_io.read_band(handle, b).values
        dark[b] = plane[0]
        rad[b] = plane[1]
    return CalibrationSet(
        dark=dark,
        rad=rad,
        reference=CaptureSettings(hdr.framerate, hdr.exposure, hdr.gain),
        wavelengths=hdr.wavelengths,
    )


def save_calibration(path: str | Path, calib: CalibrationSet, wavelengths: np.ndarray) -> tuple[Path, Path]:
    """Write a CalibrationSet as the ENVI pair format load_calibration reads."""
    bands, samples = calib.dark.shape
    header = cube_io.CubeHeader(
        samples=samples,
        lines=2,
        bands=bands,
        interleave="bsq",
        data_type=4,
        byte_order=0,
        wavelengths=np.asarray(wavelengths, dtype=np.float64),
        framerate=calib.reference.framerate,
        exposure=calib.reference.exposure,
        gain=calib.reference.gain,
    )
    planes = (
        np.stack([calib.dark[b], calib.rad[b]]).astype(np.float32) for b in range(bands)
    )
    return cube_io.write_cube(path, header, planes)
