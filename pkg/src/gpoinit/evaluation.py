"""Trajectory alignment and the ATE / PNE / PDE metrics."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import DegenerateTrajectory, GpoInitError
from .geometry import InitializationResult, PlaneParams


@dataclass(frozen=True, eq=False)
class SimilarityTransform:
    """Maps an estimate onto ground truth as ``p' = (R p + T) / s``.

    This is the minimizer of ``sum |R p + T - s p_gt|^2``: rotation and
    translation act on the estimate, the scale on the ground truth.
    """

    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        R = np.asarray(self.rotation, dtype=float)
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-9) or np.linalg.det(R) <= 0:
            raise ValueError("rotation must be a proper rotation matrix")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float))

    def apply(self, points) -> np.ndarray:
        P = np.asarray(points, dtype=float)
        return (P @ self.rotation.T + self.translation) / self.scale

    def apply_plane(self, plane: PlaneParams) -> PlaneParams:
        """Plane through the transformed points of ``plane``."""
        n = self.rotation @ plane.normal
        return PlaneParams(n, (plane.distance - float(n @ self.translation)) / self.scale)


def _check_spread(P, what):
    centred = P - P.mean(axis=0)
    sv = np.linalg.svd(centred, compute_uv=False)
    if sv[0] <= 1e-12 or sv[1] <= 1e-9 * sv[0]:
        raise DegenerateTrajectory(f"{what} positions are coincident or collinear")


def umeyama_align(traj, traj_gt) -> SimilarityTransform:
    """Closed-form similarity minimizing ``sum |R p + T - s p_gt|^2``."""
    P = np.asarray(traj, dtype=float).reshape(-1, 3)
    G = np.asarray(traj_gt, dtype=float).reshape(-1, 3)
    if len(P) != len(G):
        raise ValueError(f"trajectory lengths differ: {len(P)} vs {len(G)}")
    if len(P) < 3:
        raise DegenerateTrajectory("need at least 3 positions to align")
    _check_spread(P, "estimated")
    _check_spread(G, "ground-truth")
    mp, mg = P.mean(axis=0), G.mean(axis=0)
    Pc, Gc = P - mp, G - mg
    U, S, Vt = np.linalg.svd(Gc.T @ Pc)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt)) or 1.0])
    R = U @ D @ Vt
    s = float(np.trace(np.diag(S) @ D)) / float((Gc ** 2).sum())
    if not s > 0:
        raise DegenerateTrajectory("alignment produced a non-positive scale")
    T = s * mg - R @ mp
    return SimilarityTransform(s, R, T)


def ate(traj, traj_gt, transform: SimilarityTransform | None = None) -> float:
    """RMSE between aligned estimated positions and ground truth."""
    G = np.asarray(traj_gt, dtype=float).reshape(-1, 3)
    U = transform or umeyama_align(traj, G)
    diff = U.apply(traj) - G
    return float(np.sqrt(np.mean(np.einsum("ij,ij->i", diff, diff))))


def pne(normal, normal_gt) -> float:
    """Angle between plane normals in degrees, ignoring their sign."""
    a = np.asarray(getattr(normal, "normal", normal), dtype=float)
    b = np.asarray(getattr(normal_gt, "normal", normal_gt), dtype=float)
    c = abs(float(a @ b)) / (np.linalg.norm(a) * np.linalg.norm(b))
    return float(np.degrees(np.arccos(min(c, 1.0))))


def pde(plane: PlaneParams, plane_gt: PlaneParams) -> float:
    """|d - d_gt| with both planes' normals oriented the same way."""
    d = plane.distance
    if float(plane.normal @ plane_gt.normal) < 0:
        d = -d
    return float(abs(d - plane_gt.distance))


@dataclass
class MetricsReport:
    method: str
    frames: int
    seed: int
    ate: float = float("nan")
    pne_deg: float = float("nan")
    pde: float = float("nan")
    avg_time_ms: float = float("nan")
    optim_time_ms: float = float("nan")
    converged: bool = False
    error: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def evaluation_plane(result: InitializationResult, seed=0) -> PlaneParams:
    """Plane fitted to the result's map by 3-point RANSAC.

    Falls back to the method's own plane when the map is too small or flat
    fitting fails.
    """
    from .baselines import fit_landmark_plane

    P = result.landmark_array()
    if len(P) >= 3:
        try:
            return fit_landmark_plane(P, result.positions[0], seed=seed)
        except GpoInitError:
            pass
    if result.plane is None:
        raise DegenerateTrajectory("result has neither a map nor a plane")
    return result.plane


def compute_metrics(result: InitializationResult, gt, seed=0) -> MetricsReport:
    """ATE after alignment, PNE of the fitted plane and PDE in ground-truth units.

    ``gt`` is a :class:`gpoinit.synth.GroundTruth`. PNE compares normals in
    the shared world orientation fixed by the known rotations; PDE compares
    distances after mapping the fitted plane through the alignment.
    """
    m = len(result.poses)
    G = np.array([p.position for p in gt.poses[:m]])
    U = umeyama_align(result.positions, G)
    plane = evaluation_plane(result, seed)
    return MetricsReport(
        method=result.method, frames=m, seed=seed,
        ate=ate(result.positions, G, U),
        pne_deg=pne(plane.normal, gt.plane.normal),
        pde=pde(U.apply_plane(plane), gt.plane),
        avg_time_ms=result.total_ms / m, optim_time_ms=result.optim_ms,
        converged=bool(result.converged))
