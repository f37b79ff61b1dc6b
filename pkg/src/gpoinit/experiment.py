"""Seeded benchmark sweeps over methods, window sizes and scenes."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .baselines import BaMode, bundle_adjust, init_dbscan, init_pnp_chain
from .constants import DBSCAN_EPS_DEG, DBSCAN_MIN_PTS, RANSAC_THRESHOLD_PX
from .evaluation import MetricsReport, compute_metrics
from .geometry import InitializationResult
from .gpo import run_gpo_pipeline
from .rotation import Rotation, matrix_to_quat
from .solver import SolverConfig
from .synth import SceneConfig, generate_scene

log = logging.getLogger(__name__)

METHODS = ("GPO", "GPO_noRANSAC", "PNP_BA", "BA", "BA_noRANSAC", "PBA", "FPBA",
           "PNP_CHAIN", "DBSCAN")
DEFAULT_FRAMES = tuple(range(5, 61, 5))
CSV_COLUMNS = ("method", "frames", "seed", "ate", "pne_deg", "pde", "avg_time_ms",
               "optim_time_ms", "converged", "error")
METRIC_COLUMNS = ("ate", "pne_deg", "pde", "avg_time_ms", "optim_time_ms")


@dataclass
class ExperimentConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    methods: list = field(default_factory=lambda: ["GPO"])
    frames: list = field(default_factory=lambda: list(DEFAULT_FRAMES))
    seeds: int = 1
    ransac: bool = True
    ransac_threshold_px: float = RANSAC_THRESHOLD_PX
    dbscan_eps_deg: float = DBSCAN_EPS_DEG
    dbscan_min_pts: int = DBSCAN_MIN_PTS
    out: str = "results"
    jobs: int = 0               # 0 means one worker per CPU
    repeat_timing: int = 5
    # with timing off the timing columns stay empty and reruns are byte-identical
    timing: bool = True
    trajectories: bool = True

    def __post_init__(self):
        if isinstance(self.scene, dict):
            self.scene = SceneConfig.from_dict(self.scene)
        if isinstance(self.solver, dict):
            self.solver = SolverConfig.from_dict(self.solver)
        if isinstance(self.methods, str):
            self.methods = [m for m in self.methods.split(",") if m]
        if isinstance(self.frames, (int, str)):
            self.frames = parse_int_list(str(self.frames))
        self.methods = list(self.methods)
        self.frames = [int(f) for f in self.frames]
        if not self.methods:
            raise ValueError("at least one method is required")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; choose from {list(METHODS)}")
        if not self.frames or min(self.frames) < 2:
            raise ValueError("frame sweep must be non-empty with counts >= 2")
        if self.seeds < 1:
            raise ValueError("seeds must be >= 1")
        if self.repeat_timing < 1:
            raise ValueError("repeat_timing must be >= 1")

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        d["scene"] = self.scene.to_dict()
        d["solver"] = self.solver.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def parse_int_list(text: str) -> list:
    """``"5,10,20"`` or ``"5:60:5"`` (inclusive stop) -> list of ints."""
    text = text.strip()
    if ":" in text:
        parts = [int(p) for p in text.split(":")]
        start, stop = parts[0], parts[1]
        step = parts[2] if len(parts) > 2 else 1
        return list(range(start, stop + 1, step))
    return [int(p) for p in text.split(",") if p.strip()]


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: top level must be a mapping")
    return ExperimentConfig.from_dict(data)


def apply_overrides(config: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    """Apply dotted-key overrides such as ``{"scene.noise_px": 1.0}``."""
    d = config.to_dict()
    for key, value in overrides.items():
        target = d
        parts = key.split(".")
        for p in parts[:-1]:
            if p not in target or not isinstance(target[p], dict):
                raise ValueError(f"unknown config section in {key!r}")
            target = target[p]
        if parts[-1] not in target:
            raise ValueError(f"unknown config key {key!r}")
        target[parts[-1]] = value
    return ExperimentConfig.from_dict(d)


# ------------------------------------------------------------------ methods

def run_method(name: str, window, config: ExperimentConfig, seed=0) -> InitializationResult:
    """Run one named method on a window."""
    ransac = config.ransac and not name.endswith("_noRANSAC")
    thr = config.ransac_threshold_px
    solver = config.solver

    def dbscan(r):
        return init_dbscan(window, ransac=r, threshold_px=thr, seed=seed,
                           eps_deg=config.dbscan_eps_deg, min_pts=config.dbscan_min_pts)

    if name in ("GPO", "GPO_noRANSAC"):
        return run_gpo_pipeline(window, ransac=ransac, config=solver, threshold_px=thr, seed=seed)
    if name == "PNP_CHAIN":
        return init_pnp_chain(window, ransac=ransac, threshold_px=thr, seed=seed)
    if name == "DBSCAN":
        return dbscan(ransac)
    if name == "PNP_BA":
        init = init_pnp_chain(window, ransac=ransac, threshold_px=thr, seed=seed)
        return bundle_adjust(window, init, BaMode.BA, ransac, solver, thr, seed, method=name)
    if name in ("BA", "BA_noRANSAC", "PBA", "FPBA"):
        mode = BaMode(name.split("_")[0])
        return bundle_adjust(window, dbscan(ransac), mode, ransac, solver, thr, seed,
                             method=name)
    raise ValueError(f"unknown method {name!r}")


def _scene_for(config: ExperimentConfig, frames: int, seed: int):
    return generate_scene(config.scene.replace(frames=frames, seed=config.scene.seed + seed))


def run_cell(config: ExperimentConfig, method: str, frames: int, seed: int):
    """One (method, frames, seed) run -> (MetricsReport, poses or None)."""
    report = MetricsReport(method=method, frames=frames, seed=seed)
    try:
        window, gt = _scene_for(config, frames, seed)
        result = run_method(method, window, config, seed)
        report = compute_metrics(result, gt, seed)
        if config.timing and config.repeat_timing > 1:
            totals, optims = [result.total_ms], [result.optim_ms]
            for _ in range(config.repeat_timing - 1):
                again = run_method(method, window, config, seed)
                totals.append(again.total_ms)
                optims.append(again.optim_ms)
            report.avg_time_ms = statistics.median(totals) / frames
            report.optim_time_ms = statistics.median(optims)
        if not config.timing:
            report.avg_time_ms = float("nan")
            report.optim_time_ms = float("nan")
        return report, result.poses
    except Exception as exc:  # a failed run becomes an error row
        log.debug("run %s/%d/%d failed", method, frames, seed, exc_info=True)
        report.error = f"{type(exc).__name__}: {exc}".replace("\n", " ")
        return report, None


def _run_cell_packed(args):
    return run_cell(*args)


# ------------------------------------------------------------------ output

def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        if math.isnan(v):
            return ""
        return format(v + 0.0, ".10g")
    return str(v)


def format_csv(reports) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in reports:
        d = r.to_dict()
        writer.writerow([_fmt(d[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def read_csv(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def summarize(reports) -> dict:
    """Per (method, frames) cell: mean, median and std of each metric."""
    cells: dict = {}
    for r in reports:
        cells.setdefault((r.method, r.frames), []).append(r)
    out = {}
    for (method, frames), rows in sorted(cells.items()):
        ok = [r for r in rows if not r.error]
        entry = {"method": method, "frames": frames, "runs": len(rows),
                 "failures": len(rows) - len(ok)}
        for col in METRIC_COLUMNS:
            vals = [getattr(r, col) for r in ok if not math.isnan(getattr(r, col))]
            if vals:
                entry[col] = {"mean": float(np.mean(vals)), "median": float(np.median(vals)),
                              "std": float(np.std(vals))}
            else:
                entry[col] = {"mean": None, "median": None, "std": None}
        out[f"{method}/{frames}"] = entry
    return out


def emit_trajectory(poses, path) -> None:
    """Write poses as ``index tx ty tz qx qy qz qw`` lines, camera to world."""
    lines = []
    for i, pose in enumerate(poses):
        q = matrix_to_quat(pose.R.T)        # (w, x, y, z), camera to world
        vals = list(pose.position) + [q[1], q[2], q[3], q[0]]
        lines.append(" ".join([str(i)] + [format(float(v) + 0.0, ".9g") for v in vals]))
    try:
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write trajectory to {path}: {exc}") from exc


def read_trajectory(path) -> list:
    """Inverse of :func:`emit_trajectory`; returns (rotation, position) pairs."""
    from .geometry import Pose

    poses = []
    with open(path) as fh:
        for line in fh:
            if not line.strip() or line.startswith("#"):
                continue
            v = [float(x) for x in line.split()]
            q_wc = np.array([v[7], v[4], v[5], v[6]])
            R_cw = Rotation(q_wc).matrix.T
            poses.append(Pose(Rotation.from_matrix(R_cw), np.array(v[1:4])))
    return poses


def cells(config: ExperimentConfig) -> list:
    return sorted((m, f, s) for m in config.methods for f in config.frames
                  for s in range(config.seeds))


def run_experiment(config: ExperimentConfig):
    """Run the whole sweep and write runs.csv, summary.json and trajectories.

    Returns ``(reports, exit_code)`` with exit code 1 when any run failed.
    """
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    todo = cells(config)
    jobs = config.jobs or os.cpu_count() or 1
    log.info("running %d cells on %d worker(s)", len(todo), jobs)
    args = [(config, m, f, s) for m, f, s in todo]
    results = []
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for k, res in enumerate(pool.map(_run_cell_packed, args, chunksize=1), 1):
                results.append(res)
                _progress(k, len(args), res[0])
    else:
        for k, a in enumerate(args, 1):
            res = run_cell(*a)
            results.append(res)
            _progress(k, len(args), res[0])
    reports = [r for r, _ in results]
    (out / "runs.csv").write_text(format_csv(reports))
    (out / "summary.json").write_text(json.dumps(summarize(reports), indent=2,
                                                 sort_keys=True) + "\n")
    if config.trajectories:
        tdir = out / "trajectories"
        tdir.mkdir(exist_ok=True)
        for report, poses in results:
            if poses is not None:
                emit_trajectory(poses, tdir / f"{report.method}_f{report.frames:03d}"
                                              f"_s{report.seed:03d}.txt")
    failed = sum(1 for r in reports if r.error)
    if failed:
        log.warning("%d of %d runs failed", failed, len(reports))
    return reports, (1 if failed else 0)


def _progress(k, n, report):
    status = report.error or "ok"
    log.info("[%d/%d] %s frames=%d seed=%d %s", k, n, report.method, report.frames,
             report.seed, status)
