#!/usr/bin/env python3
"""Generate synthetic flight fixtures: ENVI cubes + pose log (+ calibration).

Produces everything the CLI and viewer consume, so CI and quick local
experiments never need real sensor data:

    python scripts/make_fixtures.py out/flight --scene stripes --cubes 4 \
        --lines 250 --samples 300 --bands 8 --noise 3,2,3 --with-calibration
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from swathcube.calibration import CalibrationSet, CaptureSettings, save_calibration
from swathcube.synth import (
    CameraModel,
    checkerboard_scene,
    constant_scene,
    gradient_scene,
    lawnmower_trajectory,
    simulate_capture,
    straight_trajectory,
    stripe_scene,
)

SCENES = {
    "stripes": lambda bands: stripe_scene(bands, period=2.0, axis="north"),
    "checkerboard": lambda bands: checkerboard_scene(bands, size=2.0),
    "gradient": gradient_scene,
    "constant": constant_scene,
}


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("out", type=Path, help="output directory")
    p.add_argument("--scene", choices=sorted(SCENES), default="gradient")
    p.add_argument("--cubes", type=int, default=3)
    p.add_argument("--lines", type=int, default=250, help="lines per cube")
    p.add_argument("--samples", type=int, default=300)
    p.add_argument("--bands", type=int, default=8)
    p.add_argument("--speed", type=float, default=10.0, help="m/s")
    p.add_argument("--noise", default="0,0,0",
                   help="roll,pitch,yaw attitude noise amplitude, degrees")
    p.add_argument("--noise-tau", type=float, default=1.0, help="noise time constant, s")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--passes", type=int, default=1,
                   help=">1 flies a back-and-forth survey instead of one line")
    p.add_argument("--pass-spacing", type=float, default=12.0)
    p.add_argument("--data-type", type=int, default=4, choices=[1, 2, 4, 12])
    p.add_argument("--with-calibration", action="store_true",
                   help="inject dark/gain effects and write the calibration pair")
    args = p.parse_args()

    camera = CameraModel(samples=args.samples, bands=args.bands)
    noise = tuple(float(v) for v in args.noise.split(","))
    duration = args.cubes * args.lines / camera.framerate

    if args.passes > 1:
        pass_time = (duration - (args.passes - 1) * np.pi * args.pass_spacing / 2.0
                     / args.speed) / args.passes
        traj = lawnmower_trajectory(
            args.passes, max(pass_time, 1.0) * args.speed, args.pass_spacing,
            speed=args.speed, noise_deg=noise, noise_tau=args.noise_tau,
            seed=args.seed,
        )
    else:
        traj = straight_trajectory(
            duration, speed=args.speed, noise_deg=noise, noise_tau=args.noise_tau,
            seed=args.seed,
        )

    calib = None
    if args.with_calibration:
        rng = np.random.default_rng(args.seed + 1)
        calib = CalibrationSet(
            dark=rng.uniform(95.0, 105.0, (args.bands, args.samples)),
            rad=rng.uniform(1.5, 2.5, (args.bands, args.samples)),
            reference=CaptureSettings(249.0, 0.0078, 1.0),
        )

    sim = simulate_capture(
        SCENES[args.scene](args.bands), camera, traj, args.cubes, args.lines,
        args.out, calibration=calib, data_type=args.data_type,
    )

    list_file = args.out / "cubes.txt"
    list_file.write_text("".join(path.name + "\n" for path in sim.cube_paths))
    if calib is not None:
        save_calibration(args.out / "calib", calib, camera.wavelengths)

    print(f"wrote {len(sim.cube_paths)} cubes + pose log under {args.out}")
    print(f"  cube list: {list_file}")
    print(f"  capture duration: {sim.capture_duration:.2f} s")
    if calib is not None:
        print(f"  calibration: {args.out / 'calib.hdr'}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
