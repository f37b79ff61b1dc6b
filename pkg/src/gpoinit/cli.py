"""Command-line entry point: ``gpoinit [options] [--section.key=value ...]``."""

from __future__ import annotations

import argparse
import logging
import sys

import yaml

from .experiment import (ExperimentConfig, METHODS, apply_overrides, load_config,
                         parse_int_list, run_experiment)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="gpoinit",
        description="Benchmark planar monocular initialization methods on synthetic scenes.",
        epilog="Any config key can be overridden as --key=value or --section.key=value, "
               "e.g. --scene.clutter_points=20 --solver.max_iterations=100.")
    p.add_argument("--config", help="YAML experiment config")
    p.add_argument("--methods", help=f"comma-separated subset of {','.join(METHODS)}")
    p.add_argument("--frames", help="frame counts, '5,10,30' or '5:60:5'")
    p.add_argument("--seeds", type=int, help="number of seeds per cell")
    p.add_argument("--noise-px", type=float, help="pixel noise sigma")
    p.add_argument("--outlier-ratio", type=float, help="share of observations replaced")
    p.add_argument("--rotation-noise-deg", type=float, help="rotation noise sigma in degrees")
    p.add_argument("--ransac", choices=("on", "off"), help="homography RANSAC filtering")
    p.add_argument("--out", help="output directory")
    p.add_argument("--jobs", type=int, help="worker processes (0: one per CPU)")
    p.add_argument("--repeat-timing", type=int, help="repetitions for the median timing")
    p.add_argument("--no-timing", action="store_true",
                   help="leave timing columns empty so reruns are byte-identical")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _parse_overrides(extra) -> dict:
    out = {}
    for token in extra:
        if not token.startswith("--") or "=" not in token:
            raise ValueError(f"unrecognized argument {token!r}")
        key, value = token[2:].split("=", 1)
        out[key.replace("-", "_")] = yaml.safe_load(value)
    return out


def make_config(argv=None) -> ExperimentConfig:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        overrides = _parse_overrides(extra)
    except ValueError as exc:
        parser.error(str(exc))
    config = load_config(args.config) if args.config else ExperimentConfig()
    flat = {}
    if args.methods is not None:
        flat["methods"] = [m.strip() for m in args.methods.split(",") if m.strip()]
    if args.frames is not None:
        flat["frames"] = parse_int_list(args.frames)
    for name in ("seeds", "out", "jobs", "repeat_timing"):
        if getattr(args, name) is not None:
            flat[name] = getattr(args, name)
    if args.ransac is not None:
        flat["ransac"] = args.ransac == "on"
    if args.no_timing:
        flat["timing"] = False
    for flag, key in (("noise_px", "scene.noise_px"), ("outlier_ratio", "scene.outlier_ratio"),
                      ("rotation_noise_deg", "scene.rotation_noise_deg")):
        if getattr(args, flag) is not None:
            flat[key] = getattr(args, flag)
    flat.update(overrides)
    return apply_overrides(config, flat)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    verbose = "-v" in argv or "--verbose" in argv
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        config = make_config(argv)
    except (ValueError, TypeError, OSError, yaml.YAMLError) as exc:
        print(f"gpoinit: config error: {exc}", file=sys.stderr)
        return 2
    _, code = run_experiment(config)
    return code


if __name__ == "__main__":
    sys.exit(main())
