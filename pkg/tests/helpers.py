"""Shared fixture builders for the test suite."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from swathcube.cube_io import CubeHeader, format_header


def make_test_header(
    samples=8,
    lines=6,
    bands=3,
    data_type=4,
    byte_order=0,
    interleave="bsq",
    wavelengths=None,
    line_times=None,
    framerate=249.0,
    exposure=0.0039,
    gain=1.0,
) -> CubeHeader:
    if wavelengths is None:
        wavelengths = 400.0 + 2.1 * np.arange(bands)
    return CubeHeader(
        samples=samples,
        lines=lines,
        bands=bands,
        interleave=interleave,
        data_type=data_type,
        byte_order=byte_order,
        wavelengths=np.asarray(wavelengths, dtype=np.float64),
        framerate=framerate,
        exposure=exposure,
        gain=gain,
        line_times=line_times,
    )


def write_raw_cube(
    directory: Path,
    name: str,
    data: np.ndarray,
    header: CubeHeader,
    byteswap: bool = False,
) -> Path:
    """Write a cube pair directly (bypassing the library writer).

    ``data`` is (bands, lines, samples) in the header's dtype. Returns the
    header path.
    """
    directory.mkdir(parents=True, exist_ok=True)
    data_path = directory / name
    hdr_path = directory / f"{name}.hdr"
    raw = np.ascontiguousarray(data, dtype=header.dtype)
    if header.interleave == "bil":
        raw = np.ascontiguousarray(raw.transpose(1, 0, 2))
    elif header.interleave == "bip":
        raw = np.ascontiguousarray(raw.transpose(1, 2, 0))
    if byteswap:
        raw = raw.byteswap()
    data_path.write_bytes(raw.tobytes())
    hdr_path.write_text(format_header(header))
    return hdr_path
