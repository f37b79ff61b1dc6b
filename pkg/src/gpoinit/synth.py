"""Synthetic planar scenes with ground truth.

The world plane is ``z = 0`` with a chessboard-like grid of corners centred
on the origin. Cameras sit on the ``z < 0`` side and look towards ``+z``;
clutter points float between the cameras and the board.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .errors import InvisibleScene
from .geometry import CameraIntrinsics, Frame, FrameWindow, PlaneParams, Pose
from .rotation import Rotation

TRAJECTORIES = ("orbit", "lateral", "forward", "pure_rotation", "random_walk")

CLUTTER_HEIGHT = (0.05, 0.3)


@dataclass
class SceneConfig:
    frames: int = 10
    plane_points: int = 100
    clutter_points: int = 0
    grid_extent: float = 0.5
    trajectory: str = "orbit"
    noise_px: float = 0.0
    outlier_ratio: float = 0.0
    rotation_noise_deg: float = 0.0
    image_size: tuple = (640, 480)
    intrinsics: tuple = (500.0, 500.0, 320.0, 240.0)
    camera_distance: float = 1.2
    # motion per frame: degrees for orbit and pure_rotation, step * 2 cm otherwise
    step: float = 0.5
    seed: int = 0

    def __post_init__(self):
        self.image_size = tuple(int(v) for v in self.image_size)
        self.intrinsics = tuple(float(v) for v in self.intrinsics)
        if self.frames < 2:
            raise ValueError("need at least 2 frames")
        if self.plane_points < 4:
            raise ValueError("need at least 4 plane points")
        if self.noise_px < 0 or self.rotation_noise_deg < 0:
            raise ValueError("noise levels must be non-negative")
        if not 0 <= self.outlier_ratio < 1:
            raise ValueError("outlier_ratio must lie in [0, 1)")
        if self.trajectory not in TRAJECTORIES:
            raise ValueError(f"unknown trajectory {self.trajectory!r}; "
                             f"choose from {TRAJECTORIES}")
        if not 0.5 <= self.camera_distance <= 1.5:
            raise ValueError("camera_distance must lie in [0.5, 1.5] m")

    @property
    def camera(self) -> CameraIntrinsics:
        return CameraIntrinsics(*self.intrinsics)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["image_size"] = list(self.image_size)
        d["intrinsics"] = list(self.intrinsics)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> SceneConfig:
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown scene keys: {sorted(unknown)}")
        return cls(**d)

    def replace(self, **kw) -> SceneConfig:
        return dataclasses.replace(self, **kw)


@dataclass(eq=False)
class GroundTruth:
    poses: list
    plane: PlaneParams
    landmarks: np.ndarray          # (L, 3), row k belongs to track id k
    on_plane: np.ndarray           # (L,) bool
    clean_pixels: list             # per frame: {track id: noise-free pixel}
    outliers: set = field(default_factory=set)   # {(frame index, track id)}

    def plane_ids(self) -> set:
        return {int(j) for j in np.flatnonzero(self.on_plane)}


def grid_points(n, extent):
    """First n corners of the smallest square grid holding n points, centred."""
    side = int(np.ceil(np.sqrt(n)))
    ticks = np.linspace(-extent / 2, extent / 2, side)
    xx, yy = np.meshgrid(ticks, ticks)
    pts = np.column_stack([xx.ravel(), yy.ravel(), np.zeros(side * side)])
    return pts[:n]


def look_at(center, target):
    """World-to-camera rotation with the optical axis towards target, image y ~ world y."""
    z = np.asarray(target, dtype=float) - center
    z /= np.linalg.norm(z)
    x = np.cross([0.0, 1.0, 0.0], z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return Rotation.from_matrix(np.vstack([x, y, z]))


def _trajectory(cfg: SceneConfig, rng):
    m, h, step = cfg.frames, cfg.camera_distance, cfg.step
    k = np.arange(m, dtype=float)
    phi = rng.uniform(0, 2 * np.pi)          # direction of travel in the plane
    u = np.array([np.cos(phi), np.sin(phi), 0.0])
    v = np.array([-np.sin(phi), np.cos(phi), 0.0])
    ez = np.array([0.0, 0.0, 1.0])
    origin = np.zeros(3)
    jitter = rng.uniform(-0.02, 0.02, size=2)
    target = origin + np.array([jitter[0], jitter[1], 0.0])

    if cfg.trajectory == "orbit":
        theta0 = np.radians(rng.uniform(-15, -5))
        theta = theta0 + np.radians(step) * k
        wobble = 0.02 * np.sin(0.35 * k + rng.uniform(0, 2 * np.pi))
        centers = (h * (np.sin(theta)[:, None] * u - np.cos(theta)[:, None] * ez)
                   + wobble[:, None] * v)
        rots = [look_at(c, target) for c in centers]
    elif cfg.trajectory == "lateral":
        s = step * 0.02 * (k - (m - 1) / 2)
        centers = (s[:, None] * u - h * ez
                   + 0.02 * np.sin(0.3 * k)[:, None] * v
                   + 0.02 * np.cos(0.2 * k)[:, None] * ez)
        rots = [look_at(c, target) for c in centers]
    elif cfg.trajectory == "forward":
        s = step * 0.01 * k
        centers = (-(h + 0.1) * ez + s[:, None] * ez
                   + 0.02 * np.sin(0.3 * k)[:, None] * u
                   + 0.02 * np.cos(0.25 * k)[:, None] * v - 0.02 * v)
        rots = [look_at(c, target) for c in centers]
    elif cfg.trajectory == "pure_rotation":
        c = -h * ez
        centers = np.tile(c, (m, 1))
        ang = np.radians(step) * k
        targets = target + 0.25 * h * (np.sin(ang)[:, None] * u + 0.3 * np.sin(0.5 * ang)[:, None] * v)
        rots = [look_at(c, t) for t in targets]
    else:  # random_walk
        steps = rng.normal(0.0, step * 0.02, size=(m, 3))
        steps[0] = 0.0
        steps[:, 2] *= 0.5
        centers = -h * ez + np.cumsum(steps, axis=0)
        rots = [look_at(c, target) for c in centers]
    return [Pose(r, c) for r, c in zip(rots, centers)]


def perturb_rotations(window: FrameWindow, sigma_deg, seed) -> FrameWindow:
    """Right-multiply each non-reference rotation by a random axis-angle error.

    The angle of frame i is ``sigma_deg * z_i`` with ``z_i ~ N(0, 1)``; axes
    and z_i depend only on the seed, so sweeping sigma scales the same errors.
    """
    if sigma_deg < 0:
        raise ValueError("sigma_deg must be non-negative")
    if sigma_deg == 0:
        return window.with_rotations(window.rotations)
    rng = np.random.default_rng(seed)
    axes = rng.normal(size=(window.m, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    z = rng.normal(size=window.m)
    rots = [window.frames[0].rotation]
    for i in range(1, window.m):
        err = Rotation.from_rotvec(np.radians(sigma_deg) * z[i] * axes[i])
        rots.append(window.frames[i].rotation * err)
    return window.with_rotations(rots)


def generate_scene(config: SceneConfig):
    """Return ``(FrameWindow, GroundTruth)`` for the configured scene."""
    cfg = config
    traj_ss, noise_ss, outlier_ss, rot_ss, clutter_ss = np.random.SeedSequence(cfg.seed).spawn(5)
    K = cfg.camera
    W, H = cfg.image_size

    plane_pts = grid_points(cfg.plane_points, cfg.grid_extent)
    crng = np.random.default_rng(clutter_ss)
    if cfg.clutter_points:
        half = cfg.grid_extent / 2
        clutter = np.column_stack([
            crng.uniform(-half, half, cfg.clutter_points),
            crng.uniform(-half, half, cfg.clutter_points),
            -crng.uniform(*CLUTTER_HEIGHT, cfg.clutter_points),
        ])
        points = np.vstack([plane_pts, clutter])
    else:
        points = plane_pts
    on_plane = np.zeros(len(points), dtype=bool)
    on_plane[:cfg.plane_points] = True

    poses = _trajectory(cfg, np.random.default_rng(traj_ss))

    clean = []
    for pose in poses:
        x = pose.to_camera(points)
        z = x[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            px = np.column_stack([K.fx * x[:, 0] / z + K.cx, K.fy * x[:, 1] / z + K.cy])
        vis = (z > 1e-6) & (px[:, 0] >= 0) & (px[:, 0] < W) & (px[:, 1] >= 0) & (px[:, 1] < H)
        clean.append({j: px[j] for j in np.flatnonzero(vis)})

    # tracks are seeded in frame 0 and need a second observation
    seeded = set(clean[0])
    clean = [{j: p for j, p in c.items() if j in seeded} for c in clean]
    counts = {j: sum(j in c for c in clean) for j in seeded}
    keep = {j for j, c in counts.items() if c >= 2}
    clean = [{int(j): p for j, p in sorted(c.items()) if j in keep} for c in clean]
    for i, c in enumerate(clean):
        if len(c) < 4:
            raise InvisibleScene(f"frame {i} sees only {len(c)} tracks")

    nrng = np.random.default_rng(noise_ss)
    orng = np.random.default_rng(outlier_ss)
    observed, outliers = [], set()
    for i, c in enumerate(clean):
        ids = list(c)
        px = np.array([c[j] for j in ids])
        noise = nrng.normal(0.0, 1.0, size=px.shape) * cfg.noise_px
        px = px + noise
        bad = orng.random(len(ids)) < cfg.outlier_ratio
        repl = np.column_stack([orng.uniform(0, W, len(ids)), orng.uniform(0, H, len(ids))])
        px[bad] = repl[bad]
        for j, b in zip(ids, bad):
            if b:
                outliers.add((i, j))
        observed.append({j: px[k] for k, j in enumerate(ids)})

    frames = [Frame(p.rotation, obs) for p, obs in zip(poses, observed)]
    window = FrameWindow(K, frames)
    if cfg.rotation_noise_deg > 0:
        window = perturb_rotations(window, cfg.rotation_noise_deg,
                                   int(rot_ss.generate_state(1)[0]))
    gt = GroundTruth(poses=poses,
                     plane=PlaneParams(np.array([0.0, 0.0, 1.0]), 0.0),
                     landmarks=points, on_plane=on_plane, clean_pixels=clean,
                     outliers=outliers)
    return window, gt
