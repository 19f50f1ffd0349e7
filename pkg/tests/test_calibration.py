import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swathcube.calibration import (
    CalibrationError,
    CalibrationSet,
    CaptureSettings,
    IlluminationSpectrum,
    apply_stretch,
    band_coefficients,
    calibrate,
    calibrate_plane,
    compute_response,
    load_calibration,
    nearest_band,
    save_calibration,
    stretch_bounds,
    stretch_bounds_from_histogram,
    to_reflectance,
)

REF = CaptureSettings(framerate=249.0, exposure=0.0078, gain=1.0)


def _calib(bands=4, samples=6, seed=0):
    rng = np.random.default_rng(seed)
    return CalibrationSet(
        dark=rng.uniform(90.0, 110.0, (bands, samples)),
        rad=rng.uniform(0.5, 3.0, (bands, samples)),
        reference=REF,
    )


# ---------------------------------------------------------------------------
# Response model
# ---------------------------------------------------------------------------

def test_response_identity_at_reference():
    assert compute_response(REF, REF) == 1.0


def test_response_linear_in_exposure():
    s = CaptureSettings(249.0, REF.exposure * 2.0, 1.0)
    assert compute_response(s, REF) == pytest.approx(2.0)


def test_response_half_exposure_fixture():
    # 3.9 ms at 249 fps against a 7.8 ms reference
    s = CaptureSettings(249.0, 0.0039, 1.0)
    assert compute_response(s, REF) == pytest.approx(0.5)


def test_response_linear_in_gain():
    s = CaptureSettings(249.0, REF.exposure, 4.0)
    assert compute_response(s, REF) == pytest.approx(4.0)


def test_response_framerate_does_not_enter():
    s = CaptureSettings(100.0, REF.exposure, 1.0)
    assert compute_response(s, REF) == 1.0


def test_response_rejects_nonpositive():
    with pytest.raises(CalibrationError):
        CaptureSettings(249.0, 0.0, 1.0)


# ---------------------------------------------------------------------------
# The radiance formula
# ---------------------------------------------------------------------------

def test_calibrate_zero_point():
    calib = _calib()
    resp = np.ones(5)
    raw = calib.dark[2, 3]
    assert calibrate(raw, 2, 0, 3, calib, resp, "radiance") == 0.0


def test_calibrate_direct_arithmetic():
    calib = CalibrationSet(
        dark=np.full((1, 1), 100.0), rad=np.full((1, 1), 2.0), reference=REF
    )
    assert calibrate(150.0, 0, 0, 0, calib, np.ones(1), "radiance") == 100.0


def test_calibrate_raw_mode_is_identity():
    calib = _calib()
    assert calibrate(150.0, 0, 0, 0, calib, np.full(5, 3.0), "raw") == 150.0


def test_calibrate_relative_mode_applies_only_response():
    calib = _calib()
    resp = np.full(5, 2.0)
    assert calibrate(150.0, 1, 2, 3, calib, resp, "relative") == 75.0


def test_calibrate_negative_radiance_not_clamped():
    calib = _calib()
    raw = calib.dark[0, 0] - 5.0
    assert calibrate(raw, 0, 0, 0, calib, np.ones(1), "radiance") < 0.0


def test_mode_lattice():
    # raw -> relative -> radiance each enables exactly one more factor
    calib = _calib()
    resp = np.full(3, 0.5)
    rng = np.random.default_rng(1)
    for raw in rng.uniform(0.0, 400.0, 50):
        band, line, sample = rng.integers(0, [4, 3, 6])
        raw_v = calibrate(raw, band, line, sample, calib, resp, "raw")
        rel_v = calibrate(raw, band, line, sample, calib, resp, "relative")
        rad_v = calibrate(raw, band, line, sample, calib, resp, "radiance")
        assert raw_v == raw
        assert rel_v == raw_v / resp[line]
        assert rad_v == (raw - calib.dark[band, sample]) * calib.rad[band, sample] / resp[line]


def test_calibrate_affine_superposition():
    calib = _calib()
    resp = np.full(2, 1.3)
    b, ln, s = 1, 0, 2

    def f(x):
        return calibrate(x, b, ln, s, calib, resp, "radiance")

    # affine in raw DN: f(a*x + (1-a)*y) == a*f(x) + (1-a)*f(y)
    rng = np.random.default_rng(2)
    for _ in range(100):
        x, y, a = rng.uniform(0, 300), rng.uniform(0, 300), rng.uniform()
        assert f(a * x + (1 - a) * y) == pytest.approx(a * f(x) + (1 - a) * f(y), rel=1e-12, abs=1e-9)


def test_rad_scaling_linearity():
    calib = _calib()
    c = 3.7
    scaled = CalibrationSet(dark=calib.dark, rad=calib.rad * c, reference=REF)
    resp = np.ones(2)
    rng = np.random.default_rng(3)
    for _ in range(50):
        raw = rng.uniform(0, 400)
        b, s = rng.integers(0, [4, 6])
        v1 = calibrate(raw, b, 0, s, calib, resp, "radiance")
        v2 = calibrate(raw, b, 0, s, scaled, resp, "radiance")
        assert v2 == pytest.approx(c * v1, rel=1e-12)


def test_calibrate_plane_matches_scalar():
    calib = _calib()
    resp = np.array([1.0, 0.5, 2.0])
    rng = np.random.default_rng(4)
    plane = rng.uniform(0, 400, (3, 6))
    out = calibrate_plane(plane, 2, calib, resp, "radiance")
    for ln in range(3):
        for s in range(6):
            assert out[ln, s] == pytest.approx(
                calibrate(plane[ln, s], 2, ln, s, calib, resp, "radiance"), rel=1e-12
            )


def test_radiance_mode_requires_calibration():
    with pytest.raises(CalibrationError):
        calibrate(1.0, 0, 0, 0, None, np.ones(1), "radiance")


def test_band_coefficients_reflectance_folds_illumination():
    calib = _calib()
    illum = IlluminationSpectrum(np.array([2.0, 4.0, 8.0, 16.0]))
    dark, scale = band_coefficients(2, calib, "reflectance", illum)
    np.testing.assert_allclose(scale, calib.rad[2] / 8.0)
    np.testing.assert_allclose(dark, calib.dark[2])


def test_rad_must_be_positive():
    with pytest.raises(CalibrationError):
        CalibrationSet(dark=np.zeros((1, 2)), rad=np.array([[1.0, 0.0]]), reference=REF)


# ---------------------------------------------------------------------------
# Reflectance
# ---------------------------------------------------------------------------

def test_reflectance_unity():
    illum = IlluminationSpectrum(np.array([10.0, 20.0]))
    assert to_reflectance(20.0, 1, illum) == 1.0
    assert to_reflectance(0.0, 0, illum) == 0.0


def test_reflectance_gray_panel():
    # synthesize the illumination from a panel of known 0.5 reflectance
    panel_radiance = np.array([12.0, 30.0, 44.0])
    illum = IlluminationSpectrum(panel_radiance / 0.5)
    for b in range(3):
        assert to_reflectance(panel_radiance[b], b, illum) == pytest.approx(0.5, abs=1e-6)


def test_reflectance_may_exceed_one():
    illum = IlluminationSpectrum(np.array([10.0]))
    assert to_reflectance(15.0, 0, illum) == 1.5


def test_illumination_rejects_zero():
    with pytest.raises(CalibrationError):
        IlluminationSpectrum(np.array([1.0, 0.0]))


def test_illumination_from_csv(tmp_path):
    p = tmp_path / "illum.csv"
    p.write_text("wavelength_nm,radiance\n400,2.0\n500,4.0\n600,6.0\n")
    illum = IlluminationSpectrum.from_csv(p, np.array([400.0, 450.0, 600.0]))
    np.testing.assert_allclose(illum.values, [2.0, 3.0, 6.0])


# ---------------------------------------------------------------------------
# Stretch bounds
# ---------------------------------------------------------------------------

def test_stretch_1_to_100():
    b = stretch_bounds([np.arange(1.0, 101.0)], "per-channel")
    assert b.low[0] == 2.0
    assert b.high[0] == 98.0


def test_stretch_constant_image():
    b = stretch_bounds([np.full(50, 7.0)], "per-channel")
    assert b.low[0] == b.high[0] == 7.0
    out = apply_stretch(np.full(5, 7.0), b.low[0], b.high[0])
    np.testing.assert_array_equal(out, 0.5)  # degenerate range shows mid-gray


def test_stretch_matches_sort_oracle():
    rng = np.random.default_rng(5)
    values = rng.normal(50.0, 12.0, 5000)
    b = stretch_bounds([values], "per-channel")
    s = np.sort(values)
    assert b.low[0] == s[int(np.ceil(0.02 * 5000)) - 1]
    assert b.high[0] == s[int(np.ceil(0.98 * 5000)) - 1]


def test_stretch_common_pools_channels():
    a = np.arange(1.0, 101.0)
    c = np.arange(101.0, 201.0)
    b = stretch_bounds([a, c], "common")
    pooled = np.sort(np.concatenate([a, c]))
    assert b.low[0] == b.low[1] == pooled[int(np.ceil(0.02 * 200)) - 1]
    assert b.high[0] == b.high[1] == pooled[int(np.ceil(0.98 * 200)) - 1]


def test_stretch_per_channel_independent():
    a = np.arange(1.0, 101.0)
    c = np.arange(1001.0, 1101.0)
    b = stretch_bounds([a, c], "per-channel")
    assert b.low[0] == 2.0 and b.low[1] == 1002.0


@given(st.integers(10, 400))
@settings(max_examples=50, deadline=None)
def test_stretch_invariant_to_interior_values(n):
    # adding values strictly inside (low, high) that do not shift the
    # 2%/98% ranks leaves the bounds unchanged
    rng = np.random.default_rng(n)
    values = np.sort(rng.uniform(0.0, 100.0, n))
    b = stretch_bounds([values], "per-channel")
    lo, hi = b.low[0], b.high[0]
    if hi - lo < 1.0:
        return
    k = max(1, n // 50)  # small enough not to shift nearest ranks at 2%/98%
    inserted = np.concatenate([values, np.full(k, (lo + hi) / 2.0)])
    b2 = stretch_bounds([inserted], "per-channel")
    n2 = n + k
    # only assert when the rank indices are provably unchanged
    if int(np.ceil(0.02 * n2)) == int(np.ceil(0.02 * n)) and (
        n2 - int(np.ceil(0.98 * n2))
    ) == (n - int(np.ceil(0.98 * n))):
        assert b2.low[0] == lo
        assert b2.high[0] == hi


def test_histogram_bounds_close_to_exact():
    rng = np.random.default_rng(6)
    values = rng.normal(0.0, 1.0, 20000)
    counts, edges = np.histogram(values, bins=1024)
    lo, hi = stretch_bounds_from_histogram(counts, edges)
    exact = stretch_bounds([values], "per-channel")
    width = edges[1] - edges[0]
    assert abs(lo - exact.low[0]) <= width
    assert abs(hi - exact.high[0]) <= width


def test_stretch_none_mode():
    b = stretch_bounds([np.arange(10.0)], "none")
    assert b.mode == "none"


def test_stretch_requires_values():
    with pytest.raises(ValueError):
        stretch_bounds([np.array([])], "per-channel")


# ---------------------------------------------------------------------------
# Nearest band
# ---------------------------------------------------------------------------

def test_nearest_band_exact():
    wl = np.array([400.0, 500.0, 600.0])
    assert nearest_band(wl, 500.0) == 1


def test_nearest_band_clamps_beyond_range():
    wl = np.array([400.0, 500.0, 600.0])
    assert nearest_band(wl, 2000.0) == 2
    assert nearest_band(wl, 10.0) == 0


def test_nearest_band_tie_goes_low():
    wl = np.array([400.0, 500.0])
    assert nearest_band(wl, 450.0) == 0


def test_nearest_band_empty():
    with pytest.raises(ValueError):
        nearest_band(np.array([]), 500.0)


# ---------------------------------------------------------------------------
# Calibration file round trip
# ---------------------------------------------------------------------------

def test_calibration_file_round_trip(tmp_path):
    calib = _calib(bands=5, samples=7)
    wl = 400.0 + 10.0 * np.arange(5)
    save_calibration(tmp_path / "calib", calib, wl)
    loaded = load_calibration(tmp_path / "calib.hdr")
    np.testing.assert_allclose(loaded.dark, calib.dark, atol=1e-4)
    np.testing.assert_allclose(loaded.rad, calib.rad, atol=1e-6)
    assert loaded.reference == calib.reference
    np.testing.assert_allclose(loaded.wavelengths, wl)


def test_load_calibration_requires_two_lines(tmp_path):
    from helpers import make_test_header, write_raw_cube

    rng = np.random.default_rng(7)
    hdr = make_test_header(lines=3)
    hdr_path = write_raw_cube(tmp_path, "cal", rng.uniform(1, 2, (3, 3, 8)).astype(np.float32), hdr)
    with pytest.raises(CalibrationError, match="2 lines"):
        load_calibration(hdr_path)
