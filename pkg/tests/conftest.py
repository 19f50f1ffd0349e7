import numpy as np
import pytest

from swathcube.calibration import CalibrationSet, CaptureSettings, save_calibration
from swathcube.synth import (
    CameraModel,
    gradient_scene,
    simulate_capture,
    straight_trajectory,
)


@pytest.fixture(scope="session")
def small_collection(tmp_path_factory):
    """Three-cube simulated flight with calibration injected into the DN,
    plus the files the CLI consumes (cube list, calibration pair,
    illumination spectrum). Session-scoped: tests must not mutate it."""
    root = tmp_path_factory.mktemp("smallcoll")
    camera = CameraModel(samples=120, bands=3)
    scene = gradient_scene(3)
    rng = np.random.default_rng(42)

    reference = CaptureSettings(framerate=249.0, exposure=0.0078, gain=1.0)
    calib = CalibrationSet(
        dark=rng.uniform(95.0, 105.0, (3, 120)),
        rad=rng.uniform(1.5, 2.5, (3, 120)),
        reference=reference,
    )
    calib_hdr, _ = save_calibration(root / "calib", calib, camera.wavelengths)

    n_cubes, lines = 3, 50
    traj = straight_trajectory(
        n_cubes * lines / camera.framerate, noise_deg=(1.0, 1.0, 2.0), seed=5
    )
    sim = simulate_capture(scene, camera, traj, n_cubes, lines, root,
                           calibration=calib)

    list_file = root / "cubes.txt"
    list_file.write_text("".join(p.name + "\n" for p in sim.cube_paths))

    illum = root / "illum.csv"
    wl = camera.wavelengths
    illum.write_text(
        "wavelength_nm,radiance\n"
        + "".join(f"{w},{300.0 + 0.1 * w}\n" for w in [wl[0] - 5, *wl, wl[-1] + 5])
    )

    return {
        "root": root,
        "sim": sim,
        "camera": camera,
        "scene": scene,
        "calib": calib,
        "calib_path": calib_hdr,
        "list_file": list_file,
        "illum_path": illum,
        "pose_log": sim.pose_log_path,
    }
