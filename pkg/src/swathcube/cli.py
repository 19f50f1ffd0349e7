"""Command-line rasterizer: cubes + pose log in, georeferenced ENVI cube out.

Jobs are described by a ``key = value`` config file, by flags, or both;
flags win. The timing report prints one machine-parseable line per stage
(``stage=render wall_ms=...``) so benchmark harnesses can scrape it.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import raster
from .calibration import MODES
from .collection import load_collection
from .cube_io import read_header

log = logging.getLogger("swathcube")


class ConfigError(ValueError):
    """Carries every validation problem found, not just the first."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


@dataclass
class JobConfig:
    cubes: list[Path] = field(default_factory=list)
    poses: Path | None = None
    output: Path | None = None
    wavelengths: list[float] | str = "all"
    gsd: float = 0.04
    ground: float | str = "auto"
    mode: str = "radiance"
    cube_range: tuple[int, int] | None = None
    calib: Path | None = None
    illum: Path | None = None
    fov: float = 47.5
    jobs: int | None = None
    no_data: float = 0.0
    nominal_agl: float = 40.0
    coverage_mask: bool = False


def _parse_config_file(path: Path) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError([f"{path}:{lineno}: expected 'key = value', got {line!r}"])
        key, _, value = line.partition("=")
        values[key.strip().lower().replace("-", "_")] = value.strip()
    return values


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="swathcube-export",
        description="Georectify a pushbroom collection into an ENVI datacube.",
    )
    p.add_argument("--config", type=Path, help="key = value job file; flags override it")
    p.add_argument("--cubes", type=Path, help="text file listing cube headers in capture order")
    p.add_argument("--poses", type=Path, help="pose log CSV (timestamp,lat,lon,alt,roll,pitch,yaw)")
    p.add_argument("--calib", type=Path, help="calibration ENVI pair (dark + radiance lines)")
    p.add_argument("--illum", type=Path, help="illumination spectrum CSV for reflectance mode")
    p.add_argument("--wavelengths", help="comma-separated nm list, or 'all'")
    p.add_argument("--gsd", type=float, help="output ground sample distance, meters")
    p.add_argument("--ground", help="flat-ground altitude in meters, or 'auto'")
    p.add_argument("--range", dest="cube_range", help="cube range a:b (inclusive, 0-based)")
    p.add_argument("--mode", choices=MODES, help="raw | relative | radiance | reflectance")
    p.add_argument("--output", type=Path, help="output data-file path (.hdr written alongside)")
    p.add_argument("--fov", type=float, help="camera full field of view, degrees")
    p.add_argument("--jobs", type=int, help="worker threads (default: hardware parallelism)")
    p.add_argument("--no-data", dest="no_data", type=float, help="value for uncovered pixels")
    p.add_argument("--coverage-mask", action="store_true",
                   help="also write a <output>_mask coverage cube")
    return p


def _merge(args: argparse.Namespace) -> JobConfig:
    cfg = JobConfig()
    raw: dict[str, str] = {}
    if args.config is not None:
        if not args.config.exists():
            raise ConfigError([f"config file not found: {args.config}"])
        raw = _parse_config_file(args.config)

    def pick(key: str, flag_value):
        return flag_value if flag_value is not None else raw.get(key)

    cubes = pick("cubes", args.cubes)
    if cubes is not None:
        cfg.cubes = [Path(cubes)]  # resolved to the list in validate_config
    poses = pick("poses", args.poses)
    if poses is not None:
        cfg.poses = Path(poses)
    output = pick("output", args.output)
    if output is not None:
        cfg.output = Path(output)
    for key, cast in [
        ("gsd", float), ("fov", float), ("no_data", float), ("jobs", int),
        ("nominal_agl", float),
    ]:
        v = pick(key, getattr(args, key, None))
        if v is not None:
            setattr(cfg, key, cast(v))
    mode = pick("mode", args.mode)
    if mode is not None:
        cfg.mode = str(mode)
    ground = pick("ground", args.ground)
    if ground is not None:
        cfg.ground = ground
    wl = pick("wavelengths", args.wavelengths)
    if wl is not None:
        cfg.wavelengths = wl
    rng = pick("range", args.cube_range)
    if rng is not None:
        cfg.cube_range = rng  # parsed in validate_config
    calib = pick("calib", args.calib)
    if calib is not None:
        cfg.calib = Path(calib)
    illum = pick("illum", args.illum)
    if illum is not None:
        cfg.illum = Path(illum)
    if args.coverage_mask or raw.get("coverage_mask", "").lower() in ("1", "true", "yes"):
        cfg.coverage_mask = True
    return cfg


def validate_config(cfg: JobConfig) -> tuple[JobConfig, list[str]]:
    """Resolve paths and normalize values; collect every problem at once.

    Returns the normalized config plus non-fatal warnings. Raises
    ConfigError listing all validation failures.
    """
    problems: list[str] = []
    warnings: list[str] = []

    if not cfg.cubes:
        problems.append("no cube list given (--cubes)")
        cube_paths: list[Path] = []
    else:
        list_file = cfg.cubes[0]
        if len(cfg.cubes) == 1 and list_file.suffix != ".hdr":
            if not list_file.exists():
                problems.append(f"cube list file not found: {list_file}")
                cube_paths = []
            else:
                base = list_file.parent
                cube_paths = [
                    (base / line.strip()) if not Path(line.strip()).is_absolute() else Path(line.strip())
                    for line in list_file.read_text().splitlines()
                    if line.strip() and not line.strip().startswith("#")
                ]
                if not cube_paths:
                    problems.append(f"cube list file is empty: {list_file}")
        else:
            cube_paths = list(cfg.cubes)
        for p in cube_paths:
            if not p.exists():
                problems.append(f"cube header not found: {p}")

    if cfg.poses is None:
        problems.append("no pose log given (--poses)")
    elif not cfg.poses.exists():
        problems.append(f"pose log not found: {cfg.poses}")

    if cfg.output is None:
        problems.append("no output path given (--output)")

    if cfg.gsd <= 0:
        problems.append(f"gsd must be positive, got {cfg.gsd}")
    if not 0.0 < cfg.fov < 180.0:
        problems.append(f"fov must be in (0, 180) degrees, got {cfg.fov}")

    if cfg.mode not in MODES:
        problems.append(f"unknown mode {cfg.mode!r}")
    if cfg.mode in ("radiance", "reflectance"):
        if cfg.calib is None:
            problems.append(f"mode {cfg.mode!r} requires --calib")
        elif not cfg.calib.exists():
            problems.append(f"calibration file not found: {cfg.calib}")
    if cfg.mode == "reflectance":
        if cfg.illum is None:
            problems.append("reflectance mode requires --illum")
        elif not cfg.illum.exists():
            problems.append(f"illumination spectrum not found: {cfg.illum}")

    if isinstance(cfg.ground, str) and cfg.ground != "auto":
        try:
            cfg.ground = float(cfg.ground)
        except ValueError:
            problems.append(f"ground must be 'auto' or meters, got {cfg.ground!r}")

    if isinstance(cfg.cube_range, str):
        try:
            a_s, _, b_s = cfg.cube_range.partition(":")
            a, b = int(a_s), int(b_s)
            cfg.cube_range = (a, b)
        except ValueError:
            problems.append(f"range must be a:b, got {cfg.cube_range!r}")
    if isinstance(cfg.cube_range, tuple):
        a, b = cfg.cube_range
        if a > b or a < 0:
            problems.append(f"cube range [{a}, {b}] is not a valid ascending range")
        elif cube_paths and b >= len(cube_paths):
            problems.append(
                f"cube range [{a}, {b}] out of bounds for {len(cube_paths)} cubes"
            )

    wavelengths: list[float] | str = "all"
    if isinstance(cfg.wavelengths, str) and cfg.wavelengths != "all":
        try:
            wavelengths = [float(w) for w in cfg.wavelengths.split(",") if w.strip()]
            if not wavelengths:
                problems.append("empty wavelength list")
        except ValueError:
            problems.append(f"bad wavelength list {cfg.wavelengths!r}")
    elif isinstance(cfg.wavelengths, list):
        wavelengths = cfg.wavelengths
    if isinstance(wavelengths, list) and cube_paths and not problems:
        try:
            hdr = read_header(cube_paths[0])
            lo, hi = float(hdr.wavelengths[0]), float(hdr.wavelengths[-1])
            for w in wavelengths:
                if not lo <= w <= hi:
                    warnings.append(
                        f"wavelength {w} nm outside sensor range [{lo}, {hi}]; "
                        "nearest band will be used"
                    )
        except Exception as e:  # header problems surface at load time too
            problems.append(f"cannot read first cube header: {e}")
    cfg.wavelengths = wavelengths

    if cfg.jobs is not None and cfg.jobs < 1:
        problems.append(f"jobs must be >= 1, got {cfg.jobs}")

    if problems:
        raise ConfigError(problems)
    cfg.cubes = cube_paths
    return cfg, warnings


def run_export(cfg: JobConfig) -> int:
    """Validate, load, render, write; returns the process exit status."""
    try:
        cfg, warns = validate_config(cfg)
    except ConfigError as e:
        for problem in e.problems:
            print(f"error: {problem}", file=sys.stderr)
        return 2
    for w in warns:
        log.warning(w)

    t0 = time.perf_counter()
    try:
        collection = load_collection(
            cfg.cubes,
            cfg.poses,
            fov_deg=cfg.fov,
            ground=cfg.ground if cfg.ground != "auto" else "auto",
            nominal_agl=cfg.nominal_agl,
            calibration_path=cfg.calib,
            illumination_path=cfg.illum,
        )
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    load_ms = (time.perf_counter() - t0) * 1000.0
    if collection.ground_estimated:
        log.info("ground=auto resolved to %.2f m", collection.ground.height)

    wavelengths = cfg.wavelengths
    if wavelengths == "all":
        wavelengths = [float(w) for w in collection.wavelengths]

    try:
        report = raster.export_cube(
            collection,
            wavelengths,
            cfg.gsd,
            cfg.output,
            mode=cfg.mode,
            no_data=cfg.no_data,
            cube_range=cfg.cube_range,
            jobs=cfg.jobs,
            write_coverage_mask=cfg.coverage_mask,
        )
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        Path(cfg.output).unlink(missing_ok=True)
        Path(str(cfg.output) + ".hdr").unlink(missing_ok=True)
        return 1

    report.timings_ms["load"] += load_ms
    for stage in ("load", "mesh", "render", "write"):
        print(f"stage={stage} wall_ms={report.timings_ms[stage]:.1f}")
    total = sum(report.timings_ms.values())
    print(f"stage=total wall_ms={total:.1f}")
    print(
        f"output={report.data_path} width={report.width} height={report.height} "
        f"bands={len(report.bands)}"
    )

    # exit 0 only if both files exist and the header validates
    try:
        out_hdr = read_header(report.header_path)
        ok = report.data_path.exists() and out_hdr.bands == len(report.bands)
    except Exception as e:
        print(f"error: output failed validation: {e}", file=sys.stderr)
        return 1
    return 0 if ok else 1


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("SWATHCUBE_LOG", "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = _merge(args)
    except ConfigError as e:
        for problem in e.problems:
            print(f"error: {problem}", file=sys.stderr)
        return 2
    return run_export(cfg)


if __name__ == "__main__":
    raise SystemExit(main())
