"""Global plane optimization.

The unknowns are the world-frame plane normal and one scaled translation per
non-reference frame. With known rotations, frame i relates to the reference
frame through the plane-induced homography

    H_i = K R_i (I - tau_i n^T) R_1^T K^-1,     tau_i = (C_1 - C_i) / d_1,

and the solver minimizes the squared transfer error of every track from the
reference image into frame i. The plane distance is fixed at ``d = -1`` with
the reference camera at the origin, which makes ``tau_i`` equal to the camera
centre ``C_i`` in plane-distance units.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .constants import MIN_MEDIAN_PARALLAX_PX, RANSAC_THRESHOLD_PX
from .errors import DegenerateTransfer, InsufficientTracks
from .estimation import filter_window_ransac
from .geometry import (FrameWindow, InitializationResult, PlaneParams, Pose,
                       reconstruct_landmarks)
from .rotation import quat_exp, quat_multiply, quat_to_matrix, rotation_between
from .solver import SolverConfig, robust_weights, solve

EZ = np.array([0.0, 0.0, 1.0])
PLANE_DISTANCE = -1.0


@dataclass(eq=False)
class GpoState:
    """Plane normal as a unit quaternion acting on +z, plus tau_2..tau_m."""

    quat: np.ndarray
    translations: np.ndarray     # (m - 1, 3)

    @property
    def normal(self) -> np.ndarray:
        return quat_to_matrix(self.quat) @ EZ

    @property
    def parameter_count(self) -> int:
        return 3 + self.translations.size

    def all_translations(self) -> np.ndarray:
        """Translations of every frame, the reference frame's being zero."""
        return np.vstack([np.zeros(3), self.translations])


@dataclass(eq=False)
class GpoResult:
    state: GpoState
    cost: float
    iterations: int
    converged: bool
    residual_count: int
    termination: str = ""
    observable: bool = True
    median_parallax_px: float = float("nan")
    cost_history: list = field(default_factory=list)


def initial_state(window: FrameWindow) -> GpoState:
    """Zero translations and the reference camera's optical axis as normal."""
    n = window.frames[0].rotation.matrix.T @ EZ
    return GpoState(rotation_between(EZ, n), np.zeros((window.m - 1, 3)))


class GpoProblem:
    """Residuals and normal equations of the transfer-error objective."""

    def __init__(self, window: FrameWindow, config: SolverConfig | None = None,
                 backend=None):
        self.window = window
        self.config = config or SolverConfig()
        self.kern = backend or kernels
        K = window.intrinsics
        R1 = window.frames[0].rotation.matrix
        ref_ids, ref_px = window.frames[0].arrays()
        ref_rays = K.unproject(ref_px) @ R1
        ids, pix, fidx = [], [], []
        for i in range(1, window.m):
            tid, px = window.frames[i].arrays()
            ids.append(tid)
            pix.append(px)
            fidx.append(np.full(len(tid), i - 1, dtype=np.int64))
        self.track_ids = np.concatenate(ids)
        self.rays = np.ascontiguousarray(ref_rays[np.searchsorted(ref_ids, self.track_ids)])
        self.pix = np.ascontiguousarray(np.vstack(pix))
        self.fidx = np.concatenate(fidx)
        self.KR = np.ascontiguousarray(
            np.stack([K.matrix @ f.rotation.matrix for f in window.frames[1:]]))
        self.nparams = 3 * window.m
        self.cols = np.empty((len(self.fidx), 6), dtype=np.int64)
        self.cols[:, :3] = np.arange(3)
        self.cols[:, 3:] = 3 + 3 * self.fidx[:, None] + np.arange(3)

    @property
    def residual_count(self) -> int:
        return 2 * len(self.fidx)

    def _eval(self, x: GpoState, jac):
        return self.kern.gpo_linearize(self.rays, self.pix, self.fidx, self.KR,
                                       np.ascontiguousarray(x.translations), x.normal, jac)

    def residuals(self, x: GpoState) -> np.ndarray:
        """Stacked residuals, frames outer and sorted track ids inner."""
        return self._eval(x, False)[0].reshape(-1)

    def jacobian(self, x: GpoState) -> np.ndarray:
        """Dense Jacobian w.r.t. [normal increment, tau_2, ..., tau_m]."""
        _, Jn, Jt, _ = self._eval(x, True)
        N = len(self.fidx)
        J = np.zeros((N, 2, self.nparams))
        J[:, :, :3] = Jn
        rows = np.arange(N)
        for k in range(3):
            J[rows, :, 3 + 3 * self.fidx + k] = Jt[:, :, k]
        return J.reshape(2 * N, self.nparams)

    def cost(self, x: GpoState) -> float:
        r = self._eval(x, False)[0]
        rho, _ = robust_weights(np.einsum("ij,ij->i", r, r), self.config)
        return 0.5 * float(rho.sum())

    def linearize(self, x: GpoState):
        r, Jn, Jt, _ = self._eval(x, True)
        rho, w = robust_weights(np.einsum("ij,ij->i", r, r), self.config)
        J = np.concatenate([Jn, Jt], axis=2)
        if self.config.loss != "none":
            sw = np.sqrt(w)
            J = J * sw[:, None, None]
            r = r * sw[:, None]
        A, g = self.kern.accumulate_normal_equations(J, r, self.cols, self.nparams)
        return 0.5 * float(rho.sum()), A, g

    def retract(self, x: GpoState, h) -> GpoState:
        q = quat_multiply(quat_exp(h[:3]), x.quat)
        q /= np.linalg.norm(q)
        return GpoState(q, x.translations + h[3:].reshape(-1, 3))

    def norm(self, x: GpoState) -> float:
        return 1.0 + float(np.linalg.norm(x.translations))


def gpo_residuals(state: GpoState, window: FrameWindow, strict=False) -> np.ndarray:
    """Stacked transfer residuals; frames outer, sorted track ids inner.

    Transfers with vanishing depth get a capped residual, or raise
    :class:`DegenerateTransfer` when ``strict``.
    """
    r, _, _, bad = GpoProblem(window)._eval(state, False)
    if strict and bad.any():
        raise DegenerateTransfer(f"{int(bad.sum())} transfers have vanishing depth")
    return r.reshape(-1)


def median_parallax(window: FrameWindow, problem: GpoProblem | None = None) -> float:
    """Median rotation-compensated displacement of tracks, in pixels.

    This is the transfer residual at zero translation.
    """
    problem = problem or GpoProblem(window)
    if not problem.residual_count:
        return 0.0
    x = GpoState(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros((window.m - 1, 3)))
    r = problem._eval(x, False)[0]
    return float(np.median(np.linalg.norm(r, axis=1)))


def solve_gpo(window: FrameWindow, config: SolverConfig | None = None,
              x0: GpoState | None = None, backend=None) -> GpoResult:
    config = config or SolverConfig()
    for i in range(1, window.m):
        shared = len(window.frames[i].observations)
        if shared < 4:
            raise InsufficientTracks(f"frame {i} shares only {shared} tracks with frame 0")
    problem = GpoProblem(window, config, backend)
    x0 = x0 if x0 is not None else initial_state(window)
    res = solve(problem, x0, config)
    parallax = median_parallax(window, problem)
    return GpoResult(state=res.x, cost=res.cost, iterations=res.iterations,
                     converged=res.converged, residual_count=problem.residual_count,
                     termination=res.termination,
                     observable=parallax >= MIN_MEDIAN_PARALLAX_PX,
                     median_parallax_px=parallax, cost_history=res.cost_history)


def state_to_poses(window: FrameWindow, state: GpoState) -> list:
    """Camera poses in the gauge C_1 = 0, plane distance -1."""
    # tau_i = (C_1 - C_i) / d  =>  C_i = C_1 - d tau_i
    centers = -PLANE_DISTANCE * state.all_translations()
    return [Pose(f.rotation, c) for f, c in zip(window.frames, centers)]


def run_gpo_pipeline(window: FrameWindow, ransac=True, config: SolverConfig | None = None,
                     threshold_px=RANSAC_THRESHOLD_PX, seed=0) -> InitializationResult:
    """Outlier filtering, plane optimization and planar map recovery."""
    t0 = time.perf_counter()
    dropped = []
    used = window
    if ransac:
        used, _, dropped = filter_window_ransac(window, threshold_px, seed=seed)
    t1 = time.perf_counter()
    result = solve_gpo(used, config)
    t2 = time.perf_counter()
    poses = state_to_poses(used, result.state)
    plane = PlaneParams(result.state.normal, PLANE_DISTANCE)
    landmarks, unrecovered = reconstruct_landmarks(used, poses, plane)
    t3 = time.perf_counter()
    return InitializationResult(
        method="GPO" if ransac else "GPO_noRANSAC", poses=poses, plane=plane,
        landmarks=landmarks, total_ms=1e3 * (t3 - t0), optim_ms=1e3 * (t2 - t1),
        converged=result.converged, iterations=result.iterations,
        low_confidence=not result.observable,
        dropped_tracks=sorted(set(dropped) | set(unrecovered)),
        info={"cost": result.cost, "termination": result.termination,
              "median_parallax_px": result.median_parallax_px,
              "residual_count": result.residual_count})
