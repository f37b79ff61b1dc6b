"""Camera, plane and homography types plus closed-form planar geometry.

Conventions used throughout the package:

* A frame rotation ``R`` maps world coordinates into the camera frame.
* A :class:`Pose` stores that rotation and the camera centre ``C`` in world
  coordinates, so a world point ``P`` sits at ``R @ (P - C)`` in the camera.
* A plane is ``n . P + d = 0`` with unit ``n``; the canonical sign keeps
  ``d <= 0`` so that ``n`` points from the world origin towards the plane.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constants import (EPS_DEPTH, EPS_PLANE_DIST, EPS_POINT_DEPTH,
                        EPS_RAY_PLANE, HOMOGRAPHY_FROBENIUS,
                        HOMOGRAPHY_MIN_DET, UNIT_NORM_TOL)
from .errors import (BehindCamera, DegenerateDepth, DegeneratePlane,
                     EmptyWindow, NegativeDepth, RayParallelToPlane)
from .rotation import Rotation


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    @property
    def inverse(self) -> np.ndarray:
        return np.array([[1.0 / self.fx, 0.0, -self.cx / self.fx],
                         [0.0, 1.0 / self.fy, -self.cy / self.fy],
                         [0.0, 0.0, 1.0]])

    def unproject(self, pixels) -> np.ndarray:
        """Pixels (N, 2) -> normalized rays (N, 3) with unit z."""
        px = np.atleast_2d(np.asarray(pixels, dtype=float))
        return np.column_stack([(px[:, 0] - self.cx) / self.fx,
                                (px[:, 1] - self.cy) / self.fy,
                                np.ones(len(px))])


@dataclass(frozen=True, eq=False)
class Pose:
    """Camera pose: world-to-camera rotation and camera centre in world."""

    rotation: Rotation
    position: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.position, dtype=float).reshape(3)
        if not np.all(np.isfinite(c)):
            raise ValueError("pose position must be finite")
        object.__setattr__(self, "position", c)

    @classmethod
    def from_rt(cls, R, t_cw) -> Pose:
        """Build from ``x_cam = R @ X + t_cw``."""
        rot = R if isinstance(R, Rotation) else Rotation.from_matrix(R)
        return cls(rot, -rot.matrix.T @ np.asarray(t_cw, dtype=float))

    @property
    def R(self) -> np.ndarray:
        return self.rotation.matrix

    @property
    def t_cw(self) -> np.ndarray:
        return -self.rotation.matrix @ self.position

    def to_camera(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=float) - self.position) @ self.R.T


def canonical_plane(normal, distance):
    """Return (n, d) with unit n and d <= 0."""
    n = np.asarray(normal, dtype=float).reshape(3)
    norm = np.linalg.norm(n)
    if norm == 0 or not np.isfinite(norm):
        raise ValueError("plane normal must be non-zero and finite")
    n = n / norm
    d = float(distance) / norm
    if d > 0:
        n, d = -n, -d
    return n, d


@dataclass(frozen=True, eq=False)
class PlaneParams:
    """Plane ``normal . P + distance = 0``; always stored in canonical sign."""

    normal: np.ndarray
    distance: float

    def __post_init__(self):
        if not np.isfinite(self.distance):
            raise ValueError("plane distance must be finite")
        n, d = canonical_plane(self.normal, self.distance)
        assert abs(np.linalg.norm(n) - 1.0) < UNIT_NORM_TOL
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "distance", d)

    @classmethod
    def from_point_normal(cls, point, normal) -> PlaneParams:
        n = np.asarray(normal, dtype=float)
        n = n / np.linalg.norm(n)
        return cls(n, -float(n @ np.asarray(point, dtype=float)))

    def signed_distance(self, points) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.normal + self.distance


def normalize_homography(M) -> np.ndarray:
    """Scale M to Frobenius norm sqrt(3) with a non-negative (2, 2) entry."""
    M = np.asarray(M, dtype=float)
    fro = np.linalg.norm(M)
    if fro == 0 or not np.isfinite(fro):
        raise ValueError("homography must be finite and non-zero")
    M = M * (HOMOGRAPHY_FROBENIUS / fro)
    if M[2, 2] < 0 or (M[2, 2] == 0 and np.linalg.det(M) < 0):
        M = -M
    return M


@dataclass(frozen=True, eq=False)
class Homography:
    matrix: np.ndarray

    def __post_init__(self):
        M = normalize_homography(self.matrix)
        if abs(np.linalg.det(M)) <= HOMOGRAPHY_MIN_DET:
            raise ValueError("homography is singular")
        M.flags.writeable = False
        object.__setattr__(self, "matrix", M)

    def transfer(self, pixels) -> np.ndarray:
        """Map pixels (N, 2) through the homography; NaN where z vanishes."""
        px = np.atleast_2d(np.asarray(pixels, dtype=float))
        y = px @ self.matrix[:, :2].T + self.matrix[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            out = y[:, :2] / y[:, 2:3]
        out[np.abs(y[:, 2]) <= EPS_DEPTH] = np.nan
        return out

    def inverse(self) -> Homography:
        return Homography(np.linalg.inv(self.matrix))

    def __matmul__(self, other: Homography) -> Homography:
        return Homography(self.matrix @ other.matrix)

    def close_to(self, other: Homography, tol=1e-9) -> bool:
        return bool(np.max(np.abs(self.matrix - other.matrix)) <= tol)


@dataclass(frozen=True, eq=False)
class Landmark:
    id: int
    position: np.ndarray


@dataclass(eq=False)
class Frame:
    """One image of the window: its known rotation and tracked pixels by id."""

    rotation: Rotation
    observations: dict = field(default_factory=dict)
    _arrays: tuple = field(default=None, init=False, repr=False)

    def arrays(self):
        """Sorted track ids (N,) and their pixels (N, 2), cached.

        The cache assumes ``observations`` is not edited after first use.
        """
        if self._arrays is None or len(self._arrays[0]) != len(self.observations):
            ids = sorted(self.observations)
            px = np.array([self.observations[j] for j in ids], dtype=float).reshape(-1, 2)
            self._arrays = (np.array(ids, dtype=np.int64), px)
        return self._arrays


@dataclass(eq=False)
class FrameWindow:
    """A sliding window of frames; frame 0 is the reference frame.

    Every track is seeded in the reference frame, so any id seen in a later
    frame is also observed in frame 0.
    """

    intrinsics: CameraIntrinsics
    frames: list

    def __post_init__(self):
        if len(self.frames) < 2:
            raise EmptyWindow("a window needs at least two frames")
        ref = self.frames[0].observations
        for i, fr in enumerate(self.frames[1:], start=1):
            missing = set(fr.observations) - set(ref)
            if missing:
                raise ValueError(f"frame {i} has tracks absent from the reference "
                                 f"frame: {sorted(missing)[:5]}")

    @property
    def m(self) -> int:
        return len(self.frames)

    @property
    def rotations(self) -> list:
        return [f.rotation for f in self.frames]

    def track_ids(self) -> list:
        return sorted(self.frames[0].observations)

    def correspondences(self, i):
        """Sorted ids seen in frames 0 and i, with their pixels in both."""
        ref_ids, ref_px = self.frames[0].arrays()
        ids, pi = self.frames[i].arrays()
        p1 = ref_px[np.searchsorted(ref_ids, ids)]
        return ids.copy(), p1, pi.copy()

    def with_observations(self, keep) -> FrameWindow:
        """Copy keeping only the (frame index, track id) pairs in ``keep``.

        ``keep`` is a callable ``(i, track_id) -> bool``.
        """
        frames = [Frame(f.rotation, {j: p for j, p in f.observations.items() if keep(i, j)})
                  for i, f in enumerate(self.frames)]
        return FrameWindow(self.intrinsics, frames)

    def with_rotations(self, rotations) -> FrameWindow:
        frames = [Frame(r, dict(f.observations)) for r, f in zip(rotations, self.frames)]
        return FrameWindow(self.intrinsics, frames)

    def truncated(self, m) -> FrameWindow:
        return FrameWindow(self.intrinsics, self.frames[:m])


def normalize_pi(v) -> np.ndarray:
    """Perspective division (x, y, z) -> (x/z, y/z)."""
    v = np.asarray(v, dtype=float)
    if abs(v[2]) <= EPS_DEPTH:
        raise DegenerateDepth(f"cannot normalize vector with z={v[2]!r}")
    return v[:2] / v[2]


def project(K: CameraIntrinsics, pose: Pose, P):
    """Project world point P; returns (pixel, depth)."""
    x = pose.R @ (np.asarray(P, dtype=float) - pose.position)
    if x[2] <= EPS_POINT_DEPTH:
        raise BehindCamera(f"point depth {x[2]!r} is not in front of the camera")
    return normalize_pi(K.matrix @ x), float(x[2])


def project_points(K: CameraIntrinsics, pose: Pose, points):
    """Vectorized projection without cheirality checks; returns (pixels, depths)."""
    x = pose.to_camera(np.atleast_2d(points))
    z = x[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        px = np.column_stack([K.fx * x[:, 0] / z + K.cx, K.fy * x[:, 1] / z + K.cy])
    return px, z


def homography_from_pose_plane(K: CameraIntrinsics, R_21, t_21, n_c1, d_c1) -> Homography:
    """Homography induced by plane (n_c1, d_c1) of camera 1 for motion x2 = R x1 + t."""
    if abs(d_c1) <= EPS_PLANE_DIST:
        raise DegeneratePlane(f"plane distance {d_c1!r} too small")
    R = R_21.matrix if isinstance(R_21, Rotation) else np.asarray(R_21, dtype=float)
    t = np.asarray(t_21, dtype=float).reshape(3)
    n = np.asarray(n_c1, dtype=float).reshape(3)
    return Homography(K.matrix @ (R - np.outer(t, n) / d_c1) @ K.inverse)


def homography_world_form(K: CameraIntrinsics, R_i, R_1, t_i1_world, n_world) -> Homography:
    """K R_i (I - t n^T) R_1^T K^-1 with the plane distance folded into t."""
    Ri = R_i.matrix if isinstance(R_i, Rotation) else np.asarray(R_i, dtype=float)
    R1 = R_1.matrix if isinstance(R_1, Rotation) else np.asarray(R_1, dtype=float)
    t = np.asarray(t_i1_world, dtype=float).reshape(3)
    n = np.asarray(n_world, dtype=float).reshape(3)
    return Homography(K.matrix @ Ri @ (np.eye(3) - np.outer(t, n)) @ R1.T @ K.inverse)


def recover_depth(K: CameraIntrinsics, pose: Pose, plane: PlaneParams, pixel) -> float:
    """Depth along the pixel ray at which it meets the plane.

    Solves ``n . (C + m R^T K^-1 p) + d = 0`` for m.
    """
    ray = pose.R.T @ (K.inverse @ np.array([pixel[0], pixel[1], 1.0]))
    den = float(plane.normal @ ray)
    if abs(den) <= EPS_RAY_PLANE:
        raise RayParallelToPlane("pixel ray is parallel to the plane")
    m = (-plane.distance - float(plane.normal @ pose.position)) / den
    if m <= 0:
        raise NegativeDepth(f"plane lies behind the camera along this ray (m={m:.3g})")
    return m


def reconstruct_landmarks(window: FrameWindow, poses, plane: PlaneParams):
    """Intersect every observation ray with the plane and average per track.

    Returns ``(landmarks, dropped)``: landmarks sorted by id and the ids of
    tracks with no observation yielding a positive depth.
    """
    if window is None or window.m == 0:
        raise EmptyWindow("no frames to reconstruct from")
    K = window.intrinsics
    sums: dict = {}
    counts: dict = {}
    for frame, pose in zip(window.frames, poses):
        if not frame.observations:
            continue
        ids = sorted(frame.observations)
        px = np.array([frame.observations[j] for j in ids], dtype=float)
        rays = K.unproject(px) @ pose.R          # rows: R^T K^-1 p
        den = rays @ plane.normal
        num = -plane.distance - float(plane.normal @ pose.position)
        with np.errstate(divide="ignore", invalid="ignore"):
            depth = num / den
        ok = (np.abs(den) > EPS_RAY_PLANE) & (depth > 0) & np.isfinite(depth)
        pts = pose.position + np.where(ok, depth, 0.0)[:, None] * rays
        for j, good, P in zip(ids, ok, pts):
            if good:
                sums[j] = sums.get(j, 0.0) + P
                counts[j] = counts.get(j, 0) + 1
    all_ids = sorted(set().union(*(f.observations for f in window.frames)))
    landmarks = [Landmark(j, sums[j] / counts[j]) for j in all_ids if j in counts]
    dropped = [j for j in all_ids if j not in counts]
    return landmarks, dropped


@dataclass(eq=False)
class InitializationResult:
    """Output of any initialization method.

    ``poses`` follow the window's frame order; ``landmarks`` are sorted by id.
    Times are wall-clock milliseconds for the whole method and for its
    nonlinear optimization phase alone (zero for methods without one).
    """

    method: str
    poses: list
    plane: PlaneParams
    landmarks: list
    total_ms: float = 0.0
    optim_ms: float = 0.0
    converged: bool = True
    iterations: int = 0
    low_confidence: bool = False
    dropped_tracks: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def positions(self) -> np.ndarray:
        return np.array([p.position for p in self.poses])

    def landmark_array(self) -> np.ndarray:
        return np.array([lm.position for lm in self.landmarks]).reshape(-1, 3)

    def landmark_ids(self) -> list:
        return [lm.id for lm in self.landmarks]
