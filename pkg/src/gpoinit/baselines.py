"""Comparison initializers: PnP chain, normal clustering and bundle adjustment.

All methods take the window's rotations as known and estimate camera centres
only. The scale gauge matches GPO: the first camera sits at the origin and the
initial plane is at distance one from it.
"""

from __future__ import annotations

import enum
import time

import numpy as np
from sklearn.cluster import DBSCAN

from . import kernels
from .constants import (DBSCAN_EPS_DEG, DBSCAN_MIN_PTS, EPS_POINT_DEPTH, MIN_RAY_ANGLE,
                        RANSAC_THRESHOLD_PX)
from .errors import (DegenerateConfiguration, GpoInitError, InsufficientParallax,
                     NegativeDepth, NoCluster, NoValidSolution)
from .estimation import (decompose_homography, estimate_homography_dlt, filter_cheirality,
                         filter_window_ransac, fit_plane_ransac, fit_translation_given_normal,
                         select_decomposition)
from .geometry import (CameraIntrinsics, FrameWindow, InitializationResult, Landmark,
                       PlaneParams, Pose, reconstruct_landmarks)
from .rotation import Rotation, quat_exp, quat_multiply, quat_to_matrix, rotation_between, skew
from .solver import SolverConfig, robust_weights, solve

EZ = np.array([0.0, 0.0, 1.0])
MAX_DBSCAN_EPS_DEG = 45.0


class BaMode(str, enum.Enum):
    BA = "BA"
    PBA = "PBA"
    FPBA = "FPBA"


class InitSource(str, enum.Enum):
    PNP = "PnP"
    DBSCAN = "DBSCAN"


def _mat(R):
    return R.matrix if isinstance(R, Rotation) else np.asarray(R, dtype=float)


def landmark_plane_threshold(points, origin=np.zeros(3)) -> float:
    """Plane-fit inlier threshold: 2 % of the median point distance to ``origin``."""
    dist = np.linalg.norm(np.asarray(points) - origin, axis=1)
    return 0.02 * float(np.median(dist)) if len(dist) else 0.0


def fit_landmark_plane(points, origin=np.zeros(3), seed=0) -> PlaneParams:
    P = np.asarray(points, dtype=float).reshape(-1, 3)
    thr = max(landmark_plane_threshold(P, origin), 1e-12)
    return fit_plane_ransac(P, thr, seed=seed).model


# ----------------------------------------------------------- triangulation

def _triangulate_many(m1, m2, R1, C1, R2, C2):
    """Linear triangulation of normalized rays m1, m2 (N, 3) -> (N, 3) points."""
    P1 = np.hstack([R1, (-R1 @ C1)[:, None]])
    P2 = np.hstack([R2, (-R2 @ C2)[:, None]])
    A = np.empty((len(m1), 4, 4))
    A[:, 0] = m1[:, :1] * P1[2] - P1[0]
    A[:, 1] = m1[:, 1:2] * P1[2] - P1[1]
    A[:, 2] = m2[:, :1] * P2[2] - P2[0]
    A[:, 3] = m2[:, 1:2] * P2[2] - P2[1]
    A /= np.linalg.norm(A, axis=2, keepdims=True)
    X = np.linalg.svd(A)[2][:, -1]
    with np.errstate(divide="ignore", invalid="ignore"):
        return X[:, :3] / X[:, 3:4]


def _ray_angles(m1, m2, R1, R2):
    a = m1 @ R1
    b = m2 @ R2
    cos = np.einsum("ij,ij->i", a, b) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
    sin = np.linalg.norm(np.cross(a, b), axis=1) / (np.linalg.norm(a, axis=1)
                                                    * np.linalg.norm(b, axis=1))
    return np.arctan2(sin, cos)


def triangulate(obs1, obs2, pose1: Pose, pose2: Pose, K: CameraIntrinsics, track_id=-1) -> Landmark:
    """Two-view linear triangulation with parallax and cheirality checks."""
    m1 = K.unproject(np.atleast_2d(obs1))
    m2 = K.unproject(np.atleast_2d(obs2))
    if _ray_angles(m1, m2, pose1.R, pose2.R)[0] <= MIN_RAY_ANGLE:
        raise InsufficientParallax("viewing rays are parallel")
    P = _triangulate_many(m1, m2, pose1.R, pose1.position, pose2.R, pose2.position)[0]
    if not np.all(np.isfinite(P)):
        raise InsufficientParallax("triangulated point is at infinity")
    for pose in (pose1, pose2):
        if (pose.to_camera(P[None])[0, 2]) <= EPS_POINT_DEPTH:
            raise NegativeDepth("triangulated point is behind a camera")
    return Landmark(track_id, P)


def _triangulate_valid(p1, pi, pose1: Pose, posei: Pose, K):
    """Vectorized triangulation; returns (points, ok-mask)."""
    m1, mi = K.unproject(p1), K.unproject(pi)
    P = _triangulate_many(m1, mi, pose1.R, pose1.position, posei.R, posei.position)
    ok = _ray_angles(m1, mi, pose1.R, posei.R) > MIN_RAY_ANGLE
    ok &= np.all(np.isfinite(P), axis=1)
    for pose in (pose1, posei):
        with np.errstate(invalid="ignore"):
            ok &= pose.to_camera(np.nan_to_num(P))[:, 2] > EPS_POINT_DEPTH
    return P, ok


# --------------------------------------------------------------------- PnP

def pnp_pose(landmarks, observations, K: CameraIntrinsics, rotation_known,
             max_iterations=10) -> Pose:
    """Camera centre from >= 4 2D-3D matches with the rotation given.

    A linear solve of ``m x R (P - C) = 0`` seeds a Gauss-Newton refinement
    of the reprojection error.
    """
    P = np.asarray(landmarks, dtype=float).reshape(-1, 3)
    px = np.asarray(observations, dtype=float).reshape(-1, 2)
    if len(P) < 4 or len(P) != len(px):
        raise DegenerateConfiguration(f"need >= 4 matched points, got {len(P)}")
    R = _mat(rotation_known)
    m = K.unproject(px)
    A = np.concatenate([skew(mk) @ R for mk in m])
    b = np.concatenate([skew(mk) @ (R @ Pk) for mk, Pk in zip(m, P)])
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[2] <= 1e-10 * sv[0]:
        raise DegenerateConfiguration("camera centre is not constrained by the matches")
    C = np.linalg.lstsq(A, b, rcond=None)[0]
    Rs = R[None]
    lidx = np.arange(len(P))
    cidx = np.zeros(len(P), dtype=np.int64)
    for _ in range(max_iterations):
        r, _, JC, bad = kernels.ba_linearize(P, lidx, cidx, Rs, C[None], px,
                                             K.fx, K.fy, K.cx, K.cy, True)
        if bad.any():
            break
        J = JC.reshape(-1, 3)
        step = np.linalg.lstsq(J, -r.reshape(-1), rcond=None)[0]
        C = C + step
        if np.linalg.norm(step) <= 1e-12 * (1.0 + np.linalg.norm(C)):
            break
    return Pose(Rotation.from_matrix(R), C)


# --------------------------------------------------------------- PnP chain

def init_pnp_chain(window: FrameWindow, ransac=True, threshold_px=RANSAC_THRESHOLD_PX,
                   seed=0, retriangulate=False) -> InitializationResult:
    """Two-view homography start, then PnP and triangulation frame by frame.

    A track is triangulated against the first frame as soon as it can be.
    With ``retriangulate`` it is triangulated again whenever a later frame
    sees it under a wider ray angle.
    """
    t0 = time.perf_counter()
    K = window.intrinsics
    used, dropped = window, []
    if ransac:
        used, models, dropped = filter_window_ransac(window, threshold_px, seed=seed)
    R = [f.rotation for f in used.frames]
    ids2, p1, p2 = used.correspondences(1)
    H = models[1] if ransac else estimate_homography_dlt(p1, p2)
    views = [(p1, p2)]
    if used.m > 2:
        views.append(used.correspondences(2)[1:])
    sol = select_decomposition(decompose_homography(H, K), K, R, views)
    if not sol.normal_observable:
        raise NoValidSolution("first pair has no translation to triangulate from")
    n_world = R[0].matrix.T @ sol.normal
    tau2 = fit_translation_given_normal(K, R[0], R[1], n_world, p1, p2)
    poses = [Pose(R[0], np.zeros(3)), Pose(R[1], tau2)]
    points: dict = {}
    angles: dict = {}

    def add_points(i):
        ids, q1, qi = used.correspondences(i)
        if not len(ids):
            return
        P, ok = _triangulate_valid(q1, qi, poses[0], poses[i], K)
        ang = _ray_angles(K.unproject(q1), K.unproject(qi), poses[0].R, poses[i].R)
        for j, Pj, good, a in zip(ids.tolist(), P, ok, ang):
            if not good or (j in points and not (retriangulate and a > angles[j])):
                continue
            points[j] = Pj
            angles[j] = a

    add_points(1)
    for i in range(2, used.m):
        ids, _, qi = used.correspondences(i)
        known = [k for k, j in enumerate(ids.tolist()) if j in points]
        Pk = np.array([points[ids[k]] for k in known]).reshape(-1, 3)
        poses.append(pnp_pose(Pk, qi[known], K, R[i]))
        add_points(i)
    order = sorted(points)
    landmarks = [Landmark(j, points[j]) for j in order]
    if len(landmarks) < 3:
        raise DegenerateConfiguration("too few triangulated points to fit a plane")
    plane = fit_landmark_plane(np.array([points[j] for j in order]), seed=seed)
    t1 = time.perf_counter()
    lost = set(used.track_ids()) - set(points)
    return InitializationResult(
        method="PNP_CHAIN", poses=poses, plane=plane, landmarks=landmarks,
        total_ms=1e3 * (t1 - t0), optim_ms=0.0,
        dropped_tracks=sorted(set(dropped) | lost),
        info={"first_pair_normal": n_world.tolist()})


# ------------------------------------------------------- normal clustering

def _axial_distance_deg(normals):
    c = np.clip(np.abs(normals @ normals.T), 0.0, 1.0)
    return np.degrees(np.arccos(c))


def cluster_normals_dbscan(normals, eps_deg=DBSCAN_EPS_DEG, min_pts=DBSCAN_MIN_PTS) -> np.ndarray:
    """Normalized mean of the largest DBSCAN cluster under axial angular distance."""
    N = np.asarray(normals, dtype=float).reshape(-1, 3)
    if len(N) < min_pts:
        raise NoCluster(f"{len(N)} candidates is fewer than min_pts={min_pts}")
    N = N / np.linalg.norm(N, axis=1, keepdims=True)
    labels = DBSCAN(eps=eps_deg, min_samples=min_pts,
                    metric="precomputed").fit_predict(_axial_distance_deg(N))
    found = labels[labels >= 0]
    if not len(found):
        raise NoCluster("every candidate normal is noise")
    counts = np.bincount(found)
    members = N[labels == int(np.argmax(counts))]
    # align signs to the first member before averaging
    members = members * np.where(members @ members[0] < 0, -1.0, 1.0)[:, None]
    mean = members.sum(axis=0)
    return mean / np.linalg.norm(mean)


def _valid_solutions(H, K, p1, pi):
    try:
        sols = decompose_homography(H, K)
    except GpoInitError:
        return []
    return filter_cheirality(sols, K.unproject(p1))


def init_dbscan(window: FrameWindow, ransac=True, threshold_px=RANSAC_THRESHOLD_PX, seed=0,
                eps_deg=DBSCAN_EPS_DEG, min_pts=DBSCAN_MIN_PTS) -> InitializationResult:
    """Cluster decomposition normals from every (first, i) pair.

    Each frame keeps the translation of its candidate closest to the
    clustered normal; the map is then recovered by ray-plane intersection.
    When no cluster forms, the radius is doubled up to 45 degrees.
    """
    t0 = time.perf_counter()
    K = window.intrinsics
    used, dropped = window, []
    models = None
    if ransac:
        used, models, dropped = filter_window_ransac(window, threshold_px, seed=seed)
    R1 = used.frames[0].rotation.matrix
    per_frame = [None]
    candidates = []
    for i in range(1, used.m):
        _, p1, pi = used.correspondences(i)
        try:
            H = models[i] if ransac else estimate_homography_dlt(p1, pi)
        except GpoInitError:
            per_frame.append([])
            continue
        sols = _valid_solutions(H, K, p1, pi)
        per_frame.append(sols)
        candidates.extend(R1.T @ s.normal for s in sols if s.normal_observable)
    # few candidates (short windows) may not reach min_pts within eps: widen it
    eps = eps_deg
    while True:
        try:
            n_world = cluster_normals_dbscan(candidates, eps, min_pts)
            break
        except NoCluster:
            if 2 * eps > MAX_DBSCAN_EPS_DEG or len(candidates) < min_pts:
                raise
            eps *= 2
    centres = [np.zeros(3)]
    for i in range(1, used.m):
        Ri = used.frames[i].rotation.matrix
        sols = per_frame[i]
        if not sols:
            _, p1, pi = used.correspondences(i)
            centres.append(fit_translation_given_normal(K, R1, Ri, n_world, p1, pi))
            continue
        best = max(sols, key=lambda s: (abs(float((R1.T @ s.normal) @ n_world))
                                        if s.normal_observable else -1.0))
        # K^-1 H K = R_i1 - t n_c1^T  with  t = R_i tau,  n_c1 = R_1 n
        tau = Ri.T @ best.t_over_d
        if float((R1.T @ best.normal) @ n_world) < 0:
            tau = -tau
        centres.append(tau)
    poses = [Pose(f.rotation, c) for f, c in zip(used.frames, centres)]
    plane = PlaneParams(n_world, -1.0)
    landmarks, unrecovered = reconstruct_landmarks(used, poses, plane)
    t1 = time.perf_counter()
    return InitializationResult(
        method="DBSCAN", poses=poses, plane=plane, landmarks=landmarks,
        total_ms=1e3 * (t1 - t0), optim_ms=0.0,
        dropped_tracks=sorted(set(dropped) | set(unrecovered)),
        info={"candidates": len(candidates), "eps_deg": eps})


# -------------------------------------------------------- bundle adjustment

def plane_basis(quat) -> np.ndarray:
    """Columns e1, e2, n of the plane frame given by a quaternion acting on +z."""
    return quat_to_matrix(quat)


def lift_plane_coordinates(uv, quat, distance) -> np.ndarray:
    """In-plane (u, v) -> world points ``R(q) (u, v, -d)`` on ``n.P + d = 0``."""
    uv = np.atleast_2d(uv)
    local = np.column_stack([uv, np.full(len(uv), -distance)])
    return local @ plane_basis(quat).T


def project_plane_coordinates(points, quat) -> np.ndarray:
    """World points -> in-plane (u, v), the inverse of the lift on the plane."""
    return (np.atleast_2d(points) @ plane_basis(quat))[:, :2]


class BaState:
    """Camera centres, landmarks and (for plane modes) the plane quaternion."""

    def __init__(self, centres, landmarks, quat=None, distance=0.0):
        self.centres = np.asarray(centres, dtype=float)
        self.landmarks = np.asarray(landmarks, dtype=float)
        self.quat = None if quat is None else np.asarray(quat, dtype=float)
        self.distance = float(distance)

    @property
    def normal(self):
        return quat_to_matrix(self.quat) @ EZ

    def points(self) -> np.ndarray:
        if self.quat is None:
            return self.landmarks
        return lift_plane_coordinates(self.landmarks, self.quat, self.distance)


class BundleAdjustmentProblem:
    """Reprojection error over camera centres 2..m and landmarks.

    Column layout: ``[C_2 .. C_m, landmarks, plane increment]`` where
    landmarks take 3 columns (BA) or 2 (PBA, FPBA) and the plane increment
    (PBA only) is a 2-dof rotation of the normal about the in-plane axes.
    """

    def __init__(self, window: FrameWindow, track_ids, mode: BaMode,
                 config: SolverConfig | None = None, backend=None):
        self.window = window
        self.mode = BaMode(mode)
        self.config = config or SolverConfig()
        self.kern = backend or kernels
        self.K = window.intrinsics
        self.track_ids = sorted(track_ids)
        tracks = np.array(self.track_ids, dtype=np.int64)
        lidx, cidx, pix = [], [], []
        for i, f in enumerate(window.frames):
            ids, px = f.arrays()
            keep = np.isin(ids, tracks)
            lidx.append(np.searchsorted(tracks, ids[keep]))
            cidx.append(np.full(int(keep.sum()), i, dtype=np.int64))
            pix.append(px[keep])
        self.lidx = np.concatenate(lidx).astype(np.int64)
        self.cidx = np.concatenate(cidx)
        self.pix = np.ascontiguousarray(np.vstack(pix))
        self.R = np.ascontiguousarray(np.stack([f.rotation.matrix for f in window.frames]))
        self.ldim = 3 if self.mode is BaMode.BA else 2
        ncam = 3 * (window.m - 1)
        nl = len(self.track_ids)
        width = 3 + self.ldim + (2 if self.mode is BaMode.PBA else 0)
        self.plane_col = ncam + self.ldim * nl
        self.nparams = self.plane_col + (2 if self.mode is BaMode.PBA else 0)
        cols = np.full((len(self.lidx), width), -1, dtype=np.int64)
        cam = self.cidx > 0
        cols[cam, :3] = 3 * (self.cidx[cam, None] - 1) + np.arange(3)
        cols[:, 3:3 + self.ldim] = ncam + self.ldim * self.lidx[:, None] + np.arange(self.ldim)
        if self.mode is BaMode.PBA:
            cols[:, 3 + self.ldim:] = self.plane_col + np.arange(2)
        self.cols = cols

    @property
    def residual_count(self) -> int:
        return 2 * len(self.lidx)

    def _eval(self, x: BaState, jac):
        P = np.ascontiguousarray(x.points())
        return self.kern.ba_linearize(P, self.lidx, self.cidx, self.R,
                                      np.ascontiguousarray(x.centres), self.pix,
                                      self.K.fx, self.K.fy, self.K.cx, self.K.cy, jac)

    def residuals(self, x: BaState) -> np.ndarray:
        return self._eval(x, False)[0].reshape(-1)

    def _blocks(self, x: BaState, JP, JC):
        parts = [JC]
        if self.mode is BaMode.BA:
            parts.append(JP)
        else:
            B = plane_basis(x.quat)
            parts.append(JP @ B[:, :2])
            if self.mode is BaMode.PBA:
                # left rotation delta = B[:, :2] w of the plane frame moves P by delta x P
                P = x.points()[self.lidx]
                dP = np.stack([np.cross(B[:, 0], P), np.cross(B[:, 1], P)], axis=2)
                parts.append(np.einsum("nij,njk->nik", JP, dP))
        return np.concatenate(parts, axis=2)

    def jacobian(self, x: BaState) -> np.ndarray:
        _, JP, JC, _ = self._eval(x, True)
        Jb = self._blocks(x, JP, JC)
        N = len(self.lidx)
        J = np.zeros((N, 2, self.nparams))
        rows = np.arange(N)
        for k in range(self.cols.shape[1]):
            ok = self.cols[:, k] >= 0
            J[rows[ok], :, self.cols[ok, k]] = Jb[ok, :, k]
        return J.reshape(2 * N, self.nparams)

    def cost(self, x: BaState) -> float:
        r = self._eval(x, False)[0]
        rho, _ = robust_weights(np.einsum("ij,ij->i", r, r), self.config)
        return 0.5 * float(rho.sum())

    def linearize(self, x: BaState):
        r, JP, JC, _ = self._eval(x, True)
        rho, w = robust_weights(np.einsum("ij,ij->i", r, r), self.config)
        J = self._blocks(x, JP, JC)
        if self.config.loss != "none":
            sw = np.sqrt(w)
            J = J * sw[:, None, None]
            r = r * sw[:, None]
        A, g = self.kern.accumulate_normal_equations(np.ascontiguousarray(J),
                                                     np.ascontiguousarray(r),
                                                     self.cols, self.nparams)
        return 0.5 * float(rho.sum()), A, g

    def retract(self, x: BaState, h) -> BaState:
        ncam = 3 * (self.window.m - 1)
        centres = x.centres.copy()
        centres[1:] += h[:ncam].reshape(-1, 3)
        landmarks = x.landmarks + h[ncam:self.plane_col].reshape(x.landmarks.shape)
        quat = x.quat
        if self.mode is BaMode.PBA:
            delta = plane_basis(quat)[:, :2] @ h[self.plane_col:]
            quat = quat_multiply(quat_exp(delta), quat)
            quat = quat / np.linalg.norm(quat)
        return BaState(centres, landmarks, quat, x.distance)

    def norm(self, x: BaState) -> float:
        return 1.0 + float(np.linalg.norm(x.centres)) + float(np.linalg.norm(x.landmarks))


def initial_ba_state(init: InitializationResult, track_ids, mode: BaMode) -> BaState:
    pos = {lm.id: lm.position for lm in init.landmarks}
    P = np.array([pos[j] for j in track_ids]).reshape(-1, 3)
    centres = init.positions
    if BaMode(mode) is BaMode.BA:
        return BaState(centres, P)
    if init.plane is None:
        raise DegenerateConfiguration(f"{mode} needs a plane from the initializer")
    quat = rotation_between(EZ, init.plane.normal)
    uv = project_plane_coordinates(P, quat)
    return BaState(centres, uv, quat, init.plane.distance)


def bundle_adjust(window: FrameWindow, init: InitializationResult, mode=BaMode.BA, ransac=True,
                  config: SolverConfig | None = None, threshold_px=RANSAC_THRESHOLD_PX, seed=0,
                  method=None, backend=None) -> InitializationResult:
    """Refine an initialization by minimizing reprojection error.

    Rotations stay fixed and the first camera centre is held at its initial
    value. BA frees every landmark, PBA keeps them on a plane whose normal is
    optimized (distance fixed as the scale gauge), FPBA keeps the initial
    plane fixed.
    """
    mode = BaMode(mode)
    config = config or SolverConfig()
    t0 = time.perf_counter()
    used, dropped = window, []
    if ransac:
        used, _, dropped = filter_window_ransac(window, threshold_px, seed=seed)
    have = {lm.id for lm in init.landmarks}
    track_ids = [j for j in used.track_ids() if j in have]
    if len(track_ids) < 4:
        raise DegenerateConfiguration("fewer than 4 initialized landmarks to adjust")
    t1 = time.perf_counter()
    problem = BundleAdjustmentProblem(used, track_ids, mode, config, backend)
    x0 = initial_ba_state(init, track_ids, mode)
    res = solve(problem, x0, config)
    t2 = time.perf_counter()
    x = res.x
    poses = [Pose(f.rotation, c) for f, c in zip(used.frames, x.centres)]
    P = x.points()
    landmarks = [Landmark(j, p) for j, p in zip(track_ids, P)]
    if mode is BaMode.BA:
        plane = fit_landmark_plane(P, x.centres[0], seed=seed)
    else:
        plane = PlaneParams(x.normal, x.distance)
    t3 = time.perf_counter()
    lost = set(window.track_ids()) - set(track_ids)
    return InitializationResult(
        method=method or mode.value, poses=poses, plane=plane, landmarks=landmarks,
        total_ms=init.total_ms + 1e3 * (t3 - t0), optim_ms=1e3 * (t2 - t1),
        converged=res.converged, iterations=res.iterations,
        dropped_tracks=sorted(set(dropped) | lost),
        info={"cost": res.cost, "initial_cost": res.initial_cost,
              "termination": res.termination, "init_method": init.method,
              "residual_count": problem.residual_count})
