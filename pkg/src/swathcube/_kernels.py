"""Numba kernels for the rasterizer hot paths.

Coverage decisions use integer edge functions on vertex positions snapped
to 1/256 pixel, so shared edges evaluate to exactly negated values in
adjacent triangles and the top-left ownership rule assigns every boundary
pixel to exactly one triangle. The output is partitioned into fixed
horizontal row bands; each parallel worker rasterizes every triangle that
intersects its band and writes only rows inside it, which makes results
bit-identical regardless of thread count.
"""

from __future__ import annotations

import numba
import numpy as np
from numba import njit, prange

SUBPIX = 256  # snap grid: 8 fractional bits per pixel
HALF = SUBPIX // 2
# Snapped coordinates beyond this overflow the int64 edge functions.
MAX_SNAPPED = np.int64(1) << 30


@njit(cache=True, inline="always")
def _top_left(dx, dy):
    # Positive-area winding in y-down pixel space: top edges run +x,
    # left edges run -y.
    return dy < 0 or (dy == 0 and dx > 0)


@njit(cache=True, parallel=True, nogil=True)
def raster_geometry(
    tx,            # (T, 3) int64 snapped x per triangle vertex
    ty,            # (T, 3) int64 snapped y
    sample_over_d, # (T, 3) float64 sample_coord / depth
    inv_d,         # (T, 3) float64 1 / depth
    tri_line,      # (T,) int32 concatenated-line index
    width,
    height,
    part_rows,
    out_gline,     # (H, W) int32, -1 where uncovered
    out_sample,    # (H, W) float32
    out_depth,     # (H, W) float32
):
    n_parts = (height + part_rows - 1) // part_rows
    n_tris = tx.shape[0]
    for p in prange(n_parts):
        row_lo = p * part_rows
        row_hi = min(row_lo + part_rows, height)
        for t in range(n_tris):
            x0, x1, x2 = tx[t, 0], tx[t, 1], tx[t, 2]
            y0, y1, y2 = ty[t, 0], ty[t, 1], ty[t, 2]
            s0, s1, s2 = sample_over_d[t, 0], sample_over_d[t, 1], sample_over_d[t, 2]
            i0, i1, i2 = inv_d[t, 0], inv_d[t, 1], inv_d[t, 2]

            area2 = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
            if area2 == 0:
                continue  # zero-area triangles are skipped silently
            if area2 < 0:
                x1, x2 = x2, x1
                y1, y2 = y2, y1
                s1, s2 = s2, s1
                i1, i2 = i2, i1

            minx = min(x0, min(x1, x2))
            maxx = max(x0, max(x1, x2))
            miny = min(y0, min(y1, y2))
            maxy = max(y0, max(y1, y2))

            px_lo = max(-((-(minx - HALF)) // SUBPIX), 0)
            px_hi = min((maxx - HALF) // SUBPIX, width - 1)
            py_lo = max(-((-(miny - HALF)) // SUBPIX), row_lo)
            py_hi = min((maxy - HALF) // SUBPIX, row_hi - 1)
            if px_lo > px_hi or py_lo > py_hi:
                continue

            # edge k is opposite vertex k; weight w_k is the edge function
            # of the remaining two vertices evaluated at the pixel center
            tl0 = _top_left(x2 - x1, y2 - y1)
            tl1 = _top_left(x0 - x2, y0 - y2)
            tl2 = _top_left(x1 - x0, y1 - y0)

            cx = px_lo * SUBPIX + HALF
            cy = py_lo * SUBPIX + HALF
            w0_row = (x2 - x1) * (cy - y1) - (y2 - y1) * (cx - x1)
            w1_row = (x0 - x2) * (cy - y2) - (y0 - y2) * (cx - x2)
            w2_row = (x1 - x0) * (cy - y0) - (y1 - y0) * (cx - x0)
            dw0dx = -(y2 - y1) * SUBPIX
            dw1dx = -(y0 - y2) * SUBPIX
            dw2dx = -(y1 - y0) * SUBPIX
            dw0dy = (x2 - x1) * SUBPIX
            dw1dy = (x0 - x2) * SUBPIX
            dw2dy = (x1 - x0) * SUBPIX

            line = tri_line[t]
            for py in range(py_lo, py_hi + 1):
                w0 = w0_row
                w1 = w1_row
                w2 = w2_row
                for px in range(px_lo, px_hi + 1):
                    if (
                        (w0 > 0 or (w0 == 0 and tl0))
                        and (w1 > 0 or (w1 == 0 and tl1))
                        and (w2 > 0 or (w2 == 0 and tl2))
                    ):
                        denom = w0 * i0 + w1 * i1 + w2 * i2
                        out_gline[py, px] = line
                        out_sample[py, px] = (w0 * s0 + w1 * s1 + w2 * s2) / denom
                        out_depth[py, px] = (w0 + w1 + w2) / denom
                    w0 += dw0dx
                    w1 += dw1dx
                    w2 += dw2dx
                w0_row += dw0dy
                w1_row += dw1dy
                w2_row += dw2dy


@njit(cache=True, parallel=True, nogil=True)
def evaluate_band(
    gline,    # (H, W) int32 from raster_geometry
    sample,   # (H, W) float32
    plane,    # (total_lines, samples) float32, cubes concatenated in order
    dark,     # (samples,) float64
    scale,    # (samples,) float64
    resp,     # (total_lines,) float64
    no_data,
    out,      # (H, W) float32
):
    height, width = gline.shape
    n_samples = plane.shape[1]
    for py in prange(height):
        for px in range(width):
            g = gline[py, px]
            if g < 0:
                out[py, px] = no_data
            else:
                s = int(sample[py, px])
                if s < 0:
                    s = 0
                elif s >= n_samples:
                    s = n_samples - 1
                out[py, px] = (plane[g, s] - dark[s]) * scale[s] / resp[g]


@njit(cache=True, parallel=True, nogil=True)
def clear_uncovered(gline, no_data, out):
    height, width = gline.shape
    for py in prange(height):
        for px in range(width):
            if gline[py, px] < 0:
                out[py, px] = no_data


@njit(cache=True, parallel=True, nogil=True)
def evaluate_band_segment(
    gline,    # (H, W) int32
    sample,   # (H, W) float32
    plane,    # (lines_k, samples): ONE cube's plane, any numeric dtype
    line_lo,  # this cube's first concatenated-line index
    line_hi,  # one past its last
    row_lo,   # output rows this cube's footprint can reach
    row_hi,
    dark,
    scale,
    resp,     # (lines_k,) float64
    out,
):
    """Per-cube variant of evaluate_band: touches only pixels owned by the
    cube (and only rows its footprint reaches), so a multi-cube render
    never materializes a concatenated plane."""
    width = gline.shape[1]
    n_samples = plane.shape[1]
    for i in prange(row_hi - row_lo):
        py = row_lo + i
        for px in range(width):
            g = gline[py, px]
            if line_lo <= g < line_hi:
                s = int(sample[py, px])
                if s < 0:
                    s = 0
                elif s >= n_samples:
                    s = n_samples - 1
                g -= line_lo
                out[py, px] = (plane[g, s] - dark[s]) * scale[s] / resp[g]


@njit(cache=True, inline="always")
def _edge(ax, ay, bx, by, px, py):
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


@njit(cache=True)
def pixel_covered(tx, ty, px, py):
    """Scalar form of the coverage rule for one snapped triangle and pixel.

    Used by tests to probe boundary ownership; must match raster_geometry
    decision-for-decision.
    """
    x0, x1, x2 = tx[0], tx[1], tx[2]
    y0, y1, y2 = ty[0], ty[1], ty[2]
    area2 = _edge(x0, y0, x1, y1, x2, y2)
    if area2 == 0:
        return False
    if area2 < 0:
        x1, x2 = x2, x1
        y1, y2 = y2, y1
    cx = px * SUBPIX + HALF
    cy = py * SUBPIX + HALF
    w0 = _edge(x1, y1, x2, y2, cx, cy)
    w1 = _edge(x2, y2, x0, y0, cx, cy)
    w2 = _edge(x0, y0, x1, y1, cx, cy)
    return (
        (w0 > 0 or (w0 == 0 and _top_left(x2 - x1, y2 - y1)))
        and (w1 > 0 or (w1 == 0 and _top_left(x0 - x2, y0 - y2)))
        and (w2 > 0 or (w2 == 0 and _top_left(x1 - x0, y1 - y0)))
    )


def set_worker_threads(n: int | None) -> int:
    """Clamp and apply the numba thread count; returns the value in effect."""
    limit = numba.config.NUMBA_NUM_THREADS
    if n is None:
        n = limit
    n = max(1, min(int(n), limit))
    numba.set_num_threads(n)
    return n
