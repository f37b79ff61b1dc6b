"""Robust two-view homography estimation, analytic decomposition and plane fitting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constants import (CHEIRALITY_MIN_FRACTION, HOMOGRAPHY_MIN_DET, PLANE_RANSAC_MAX_ITERS, PURE_ROTATION_TOL,
                        RANSAC_CONFIDENCE, RANSAC_MAX_ITERS,
                        RANSAC_MIN_INLIERS, RANSAC_THRESHOLD_PX,
                        TRACK_MAX_OUTLIER_FRACTION)
from .errors import (DegenerateConfiguration, InsufficientInliers,
                     NoValidSolution, NumericalFailure)
from .geometry import CameraIntrinsics, FrameWindow, Homography, PlaneParams
from .rotation import Rotation


@dataclass(frozen=True)
class Correspondence:
    id: int
    p1: tuple
    p2: tuple


def correspondence_arrays(corrs):
    """List of Correspondence -> (ids, p1 (N, 2), p2 (N, 2))."""
    ids = np.array([c.id for c in corrs], dtype=int)
    p1 = np.array([c.p1 for c in corrs], dtype=float).reshape(-1, 2)
    p2 = np.array([c.p2 for c in corrs], dtype=float).reshape(-1, 2)
    return ids, p1, p2


@dataclass(eq=False)
class RansacResult:
    model: object
    inliers: np.ndarray      # indices into the input arrays, ascending
    iterations: int
    ids: np.ndarray = None   # track ids of the inliers when ids were given

    @property
    def inlier_count(self) -> int:
        return len(self.inliers)


@dataclass(eq=False)
class DecompositionSolution:
    """Motion and plane with ``K^-1 H K ~ R - t_over_d n^T``.

    ``t_over_d`` is the camera-2 translation divided by the signed
    camera-1 plane distance (negative for a visible plane), and ``normal``
    points from camera 1 towards the plane.
    """

    rotation: Rotation
    t_over_d: np.ndarray
    normal: np.ndarray
    normal_observable: bool = True
    score: float = field(default=float("nan"), compare=False)

    def calibrated(self) -> np.ndarray:
        return self.rotation.matrix - np.outer(self.t_over_d, self.normal)


# --------------------------------------------------------------------- DLT

def _hartley(pts):
    c = pts.mean(axis=0)
    dist = np.sqrt(((pts - c) ** 2).sum(axis=1)).mean()
    if dist <= 0:
        raise DegenerateConfiguration("all points coincide")
    s = math.sqrt(2.0) / dist
    return np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])


def _collinear(a, b, c, tol=1e-9):
    ab, ac = b - a, c - a
    cross = ab[0] * ac[1] - ab[1] * ac[0]
    scale = max(np.dot(ab, ab), np.dot(ac, ac), 1e-300)
    return abs(cross) <= tol * scale


def _sample_degenerate(p):
    return (_collinear(p[0], p[1], p[2]) or _collinear(p[0], p[1], p[3])
            or _collinear(p[0], p[2], p[3]) or _collinear(p[1], p[2], p[3]))


def estimate_homography_dlt(p1, p2) -> Homography:
    """Least-squares algebraic homography p2 ~ H p1 with Hartley normalization."""
    p1 = np.asarray(p1, dtype=float).reshape(-1, 2)
    p2 = np.asarray(p2, dtype=float).reshape(-1, 2)
    if len(p1) < 4 or len(p1) != len(p2):
        raise DegenerateConfiguration("need at least 4 matching correspondences")
    if len(p1) == 4 and (_sample_degenerate(p1) or _sample_degenerate(p2)):
        raise DegenerateConfiguration("three of the four points are collinear")
    T1, T2 = _hartley(p1), _hartley(p2)
    a = p1 @ T1[:2, :2].T + T1[:2, 2]
    b = p2 @ T2[:2, :2].T + T2[:2, 2]
    n = len(a)
    A = np.zeros((2 * n, 9))
    x, y = a[:, 0], a[:, 1]
    u, v = b[:, 0], b[:, 1]
    A[0::2, 0], A[0::2, 1], A[0::2, 2] = -x, -y, -1.0
    A[0::2, 6], A[0::2, 7], A[0::2, 8] = u * x, u * y, u
    A[1::2, 3], A[1::2, 4], A[1::2, 5] = -x, -y, -1.0
    A[1::2, 6], A[1::2, 7], A[1::2, 8] = v * x, v * y, v
    try:
        _, s, Vt = np.linalg.svd(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("SVD failed in DLT") from exc
    if len(s) >= 8 and s[7] <= 1e-10 * s[0]:
        raise DegenerateConfiguration("correspondences do not determine a homography")
    Hn = Vt[-1].reshape(3, 3)
    H = np.linalg.solve(T2, Hn @ T1)
    try:
        return Homography(H)
    except ValueError as exc:
        raise DegenerateConfiguration(str(exc)) from exc


def _apply(M, px):
    y = px @ M[:, :2].T + M[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        out = y[:, :2] / y[:, 2:3]
    out[np.abs(y[:, 2]) <= 1e-12] = np.nan
    return out


def transfer_errors(H: Homography, p1, p2):
    """Forward and backward transfer distances (inf where undefined)."""
    f = np.linalg.norm(_apply(H.matrix, p1) - p2, axis=1)
    b = np.linalg.norm(_apply(np.linalg.inv(H.matrix), p2) - p1, axis=1)
    f[~np.isfinite(f)] = np.inf
    b[~np.isfinite(b)] = np.inf
    return f, b


def symmetric_transfer_error(H: Homography, p1, p2):
    """Root-mean-square of the forward and backward transfer distances."""
    f, b = transfer_errors(H, p1, p2)
    return np.sqrt(0.5 * (f * f + b * b))


def _required_iterations(inlier_ratio, sample_size, confidence):
    if inlier_ratio <= 0:
        return math.inf
    good = inlier_ratio ** sample_size
    if good >= 1.0:
        return 1
    return math.ceil(math.log(1.0 - confidence) / math.log(1.0 - good))


def _batch_collinear(p, tol=1e-9):
    """(B, 4, 2) samples -> (B,) True where any three points are collinear."""
    out = np.zeros(len(p), dtype=bool)
    for a, b, c in ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)):
        ab = p[:, b] - p[:, a]
        ac = p[:, c] - p[:, a]
        cross = ab[:, 0] * ac[:, 1] - ab[:, 1] * ac[:, 0]
        scale = np.maximum(np.maximum((ab * ab).sum(1), (ac * ac).sum(1)), 1e-300)
        out |= np.abs(cross) <= tol * scale
    return out


def _minimal_homographies(a, b):
    """Exact homographies for batches of 4 correspondences, h33 fixed to 1.

    a, b: (B, 4, 2). Returns (H (B, 3, 3), ok (B,)).
    """
    B = len(a)
    M = np.zeros((B, 8, 8))
    rhs = np.zeros((B, 8))
    x, y = a[..., 0], a[..., 1]
    u, v = b[..., 0], b[..., 1]
    M[:, 0::2, 0], M[:, 0::2, 1], M[:, 0::2, 2] = x, y, 1.0
    M[:, 0::2, 6], M[:, 0::2, 7] = -u * x, -u * y
    M[:, 1::2, 3], M[:, 1::2, 4], M[:, 1::2, 5] = x, y, 1.0
    M[:, 1::2, 6], M[:, 1::2, 7] = -v * x, -v * y
    rhs[:, 0::2], rhs[:, 1::2] = u, v
    det = np.abs(np.linalg.det(M))
    scale = np.prod(np.linalg.norm(M, axis=2), axis=1)
    ok = det > 1e-10 * scale
    H = np.zeros((B, 3, 3))
    if ok.any():
        h = np.linalg.solve(M[ok], rhs[ok][..., None])[..., 0]
        H[ok] = np.concatenate([h, np.ones((len(h), 1))], axis=1).reshape(-1, 3, 3)
    return H, ok


def _batch_symmetric_error(H, p1, p2):
    """(B, 3, 3) homographies -> (B, N) RMS of forward/backward transfer distance."""
    def apply(M, p):
        y = np.matmul(np.c_[p, np.ones(len(p))], M.transpose(0, 2, 1))
        with np.errstate(divide="ignore", invalid="ignore"):
            return y[..., :2] / y[..., 2:3]
    Hinv = np.linalg.inv(H)
    with np.errstate(invalid="ignore"):
        f = ((apply(H, p1) - p2) ** 2).sum(-1)
        b = ((apply(Hinv, p2) - p1) ** 2).sum(-1)
        e = np.sqrt(0.5 * (f + b))
    e[~np.isfinite(e)] = np.inf
    return e


def ransac_homography(p1, p2, threshold_px=RANSAC_THRESHOLD_PX, max_iters=RANSAC_MAX_ITERS,
                      seed=0, confidence=RANSAC_CONFIDENCE, ids=None,
                      min_inliers=RANSAC_MIN_INLIERS, batch=64) -> RansacResult:
    """4-point RANSAC scored by symmetric transfer error, refit by DLT on inliers.

    Hypotheses are drawn sequentially from one seeded generator and visited
    in draw order; batching only changes how many are evaluated ahead of the
    adaptive stopping test, never which one wins.
    """
    p1 = np.asarray(p1, dtype=float).reshape(-1, 2)
    p2 = np.asarray(p2, dtype=float).reshape(-1, 2)
    n = len(p1)
    if n < 4:
        raise DegenerateConfiguration("need at least 4 correspondences")
    T1, T2 = _hartley(p1), _hartley(p2)
    a_all = p1 @ T1[:2, :2].T + T1[:2, 2]
    b_all = p2 @ T2[:2, :2].T + T2[:2, 2]
    rng = np.random.default_rng(seed)
    best_mask, best_count = None, -1
    needed = max_iters
    it = 0
    while it < min(max_iters, needed):
        nb = int(min(batch, max_iters - it))
        idx = np.array([rng.choice(n, 4, replace=False) for _ in range(nb)])
        valid = ~(_batch_collinear(p1[idx]) | _batch_collinear(p2[idx]))
        Hn, ok = _minimal_homographies(a_all[idx], b_all[idx])
        valid &= ok
        Hs = np.linalg.inv(T2) @ Hn @ T1
        norms = np.linalg.norm(Hs, axis=(1, 2))
        valid &= np.isfinite(norms) & (norms > 0)
        Hs[~valid] = np.eye(3)
        Hs[valid] /= norms[valid, None, None]
        valid &= np.abs(np.linalg.det(Hs)) > HOMOGRAPHY_MIN_DET
        counts = np.full(nb, -1)
        masks = np.zeros((nb, n), dtype=bool)
        if valid.any():
            masks[valid] = _batch_symmetric_error(Hs[valid], p1, p2) < threshold_px
            counts[valid] = masks[valid].sum(axis=1)
        for k in range(nb):
            if it >= min(max_iters, needed):
                break
            it += 1
            if counts[k] > best_count:
                best_mask, best_count = masks[k], int(counts[k])
                needed = _required_iterations(best_count / n, 4, confidence)
    if best_count < min_inliers:
        raise InsufficientInliers(f"best hypothesis has {max(best_count, 0)} inliers "
                                  f"(< {min_inliers})")
    mask = best_mask
    H = estimate_homography_dlt(p1[mask], p2[mask])
    # local refinement: refit while the consensus grows
    for _ in range(5):
        new_mask = symmetric_transfer_error(H, p1, p2) < threshold_px
        if new_mask.sum() < mask.sum() or np.array_equal(new_mask, mask):
            break
        mask = new_mask
        H = estimate_homography_dlt(p1[mask], p2[mask])
    mask = symmetric_transfer_error(H, p1, p2) < threshold_px
    if mask.sum() < min_inliers:
        raise InsufficientInliers(f"refit kept {int(mask.sum())} inliers (< {min_inliers})")
    inliers = np.flatnonzero(mask)
    out_ids = None if ids is None else np.asarray(ids)[inliers]
    return RansacResult(model=H, inliers=inliers, iterations=it, ids=out_ids)


def filter_window_ransac(window: FrameWindow, threshold_px=RANSAC_THRESHOLD_PX, seed=0,
                         max_iters=RANSAC_MAX_ITERS,
                         max_outlier_fraction=TRACK_MAX_OUTLIER_FRACTION):
    """Keep the plane-consistent part of a window.

    Each frame is tested against the reference frame with
    :func:`ransac_homography`. Observations failing their pair's test are
    removed, and tracks failing in more than ``max_outlier_fraction`` of
    their pairs are removed entirely (together with their reference pixel).

    Returns ``(filtered_window, homographies, rejected_track_ids)`` where
    ``homographies[i]`` is the model for frame i (None for frame 0).
    """
    outlier_pairs: dict = {}
    pair_counts: dict = {}
    inlier_sets = [None]
    models = [None]
    for i in range(1, window.m):
        ids, p1, pi = window.correspondences(i)
        res = ransac_homography(p1, pi, threshold_px, max_iters, seed=(seed, i), ids=ids)
        good = set(res.ids.tolist())
        inlier_sets.append(good)
        models.append(res.model)
        for j in ids.tolist():
            pair_counts[j] = pair_counts.get(j, 0) + 1
            if j not in good:
                outlier_pairs[j] = outlier_pairs.get(j, 0) + 1
    rejected = {j for j, c in outlier_pairs.items()
                if c > max_outlier_fraction * pair_counts[j]}

    def keep(i, j):
        if j in rejected:
            return False
        return i == 0 or j in inlier_sets[i]

    filtered = window.with_observations(keep)
    # drop reference pixels whose track lost every other observation
    alive = set().union(*(f.observations for f in filtered.frames[1:]))
    filtered = filtered.with_observations(lambda i, j: j in alive)
    return filtered, models, sorted(rejected | (set(window.track_ids()) - alive))


# ------------------------------------------------------------ decomposition

def _opposite_minor(M, row, col):
    x1 = 1 if col == 0 else 0
    x2 = 1 if col == 2 else 2
    y1 = 1 if row == 0 else 0
    y2 = 1 if row == 2 else 2
    return M[y1, x2] * M[y2, x1] - M[y1, x1] * M[y2, x2]


def _sign(x):
    return 1.0 if x >= 0 else -1.0


def euclidean_homography(H: Homography, K: CameraIntrinsics) -> np.ndarray:
    """K^-1 H K scaled to unit middle singular value and positive determinant."""
    Hm = H.matrix if isinstance(H, Homography) else np.asarray(H, dtype=float)
    G = K.inverse @ Hm @ K.matrix
    try:
        s = np.linalg.svd(G, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("SVD failed on calibrated homography") from exc
    if not np.all(np.isfinite(s)) or s[1] <= 0:
        raise NumericalFailure("calibrated homography has no usable singular values")
    G = G / s[1]
    if np.linalg.det(G) < 0:
        G = -G
    return G


def decompose_homography(H: Homography, K: CameraIntrinsics) -> list:
    """Analytic decomposition into at most four (R, t/d, n) candidates.

    Works on ``S = G^T G - I`` of the calibrated homography ``G`` and builds
    the two normal candidates from the opposite minors of S, following the
    closed-form construction of Malis and Vargas. A near-rotation ``G`` yields
    a single solution with zero translation and an unobservable normal.
    """
    G = euclidean_homography(H, K)
    S = G.T @ G - np.eye(3)
    if np.max(np.abs(S)) < PURE_ROTATION_TOL:
        U, _, Vt = np.linalg.svd(G)
        R = U @ Vt
        return [DecompositionSolution(Rotation.from_matrix(R), np.zeros(3),
                                      np.array([0.0, 0.0, 1.0]), normal_observable=False)]

    M00 = max(_opposite_minor(S, 0, 0), 0.0)
    M11 = max(_opposite_minor(S, 1, 1), 0.0)
    M22 = max(_opposite_minor(S, 2, 2), 0.0)
    rM00, rM11, rM22 = math.sqrt(M00), math.sqrt(M11), math.sqrt(M22)
    e12 = _sign(_opposite_minor(S, 1, 2))
    e02 = _sign(_opposite_minor(S, 0, 2))
    e01 = _sign(_opposite_minor(S, 0, 1))

    k = int(np.argmax(np.abs(np.diag(S))))
    if k == 0:
        npa = np.array([S[0, 0], S[0, 1] + rM22, S[0, 2] + e12 * rM11])
        npb = np.array([S[0, 0], S[0, 1] - rM22, S[0, 2] - e12 * rM11])
    elif k == 1:
        npa = np.array([S[0, 1] + rM22, S[1, 1], S[1, 2] - e02 * rM00])
        npb = np.array([S[0, 1] - rM22, S[1, 1], S[1, 2] + e02 * rM00])
    else:
        npa = np.array([S[0, 2] + e01 * rM11, S[1, 2] + rM00, S[2, 2]])
        npb = np.array([S[0, 2] - e01 * rM11, S[1, 2] - rM00, S[2, 2]])

    trace = float(np.trace(S))
    v = 2.0 * math.sqrt(max(1.0 + trace - M00 - M11 - M22, 0.0))
    esii = _sign(S[k, k])
    r = math.sqrt(max(2.0 + trace + v, 0.0))
    nt = math.sqrt(max(2.0 + trace - v, 0.0))
    na = npa / np.linalg.norm(npa)
    nb = npb / np.linalg.norm(npb)
    ta_star = 0.5 * nt * (esii * r * nb - nt * na)
    tb_star = 0.5 * nt * (esii * r * na - nt * nb)
    if v <= 0:
        raise NumericalFailure("degenerate homography spectrum")

    out = []
    for t_star, nrm in ((ta_star, na), (tb_star, nb)):
        R = G @ (np.eye(3) - (2.0 / v) * np.outer(t_star, nrm))
        if np.linalg.det(R) < 0:
            R = -R
        # project onto SO(3) to wash out rounding
        U, _, Vt = np.linalg.svd(R)
        R = U @ Vt
        t = R @ t_star
        rot = Rotation.from_matrix(R)
        # G = R + t n^T  <=>  G = R - (-t) n^T
        out.append(DecompositionSolution(rot, -t, nrm.copy()))
        out.append(DecompositionSolution(rot, t.copy(), -nrm))
    return out


def _plane_depths(sol: DecompositionSolution, m1):
    """Depths of reference rays m1 (N, 3) in views 1 and 2 for |d1| = 1."""
    z1 = 1.0 / (m1 @ sol.normal)
    z2 = z1 * (m1 @ sol.calibrated().T)[:, 2]
    return z1, z2


def visible_fraction(sol: DecompositionSolution, m1) -> float:
    """Share of reference rays m1 (N, 3) in front of both cameras."""
    if not sol.normal_observable:
        return 1.0
    z1, z2 = _plane_depths(sol, m1)
    return float(np.mean((z1 > 0) & (z2 > 0)))


def filter_cheirality(solutions, m1, min_fraction=CHEIRALITY_MIN_FRACTION) -> list:
    """Candidates that keep the points in front of both cameras.

    A candidate survives when its visible share reaches
    ``min(min_fraction, best share)``, so noisy pairs where no candidate is
    perfect still keep their most plausible solutions. Candidates with no
    visible point never survive.
    """
    if not solutions:
        return []
    frac = [visible_fraction(s, m1) for s in solutions]
    need = min(min_fraction, max(frac))
    return [s for s, f in zip(solutions, frac) if f >= need and f > 0]


def fit_translation_given_normal(K: CameraIntrinsics, R_1, R_i, n_world, p1, pi):
    """Least-squares scaled translation tau for frame i with the plane normal fixed.

    Uses the linear constraint ``m_i x R_i (u - tau n.u) = 0`` with
    ``u = R_1^T K^-1 p1`` and ``m_i = K^-1 p_i``.
    """
    R1 = R_1.matrix if isinstance(R_1, Rotation) else R_1
    Ri = R_i.matrix if isinstance(R_i, Rotation) else R_i
    u = K.unproject(p1) @ R1
    mi = K.unproject(pi)
    s = u @ n_world
    Ru = u @ Ri.T
    a = np.cross(mi, Ru)                          # m x R u
    # m x (R tau) s = s [m]x R tau
    rows = []
    for mk, sk in zip(mi, s):
        rows.append(sk * (np.array([[0, -mk[2], mk[1]], [mk[2], 0, -mk[0]],
                                    [-mk[1], mk[0], 0]]) @ Ri))
    A = np.vstack(rows)
    b = a.reshape(-1)
    return np.linalg.lstsq(A, b, rcond=None)[0]


def _rms_transfer(H: Homography, p1, p2):
    e = np.linalg.norm(H.transfer(p1) - p2, axis=1)
    e[~np.isfinite(e)] = 1e12
    return float(np.sqrt(np.mean(e * e)))


def select_decomposition(solutions, K: CameraIntrinsics, rotations, views) -> DecompositionSolution:
    """Pick the physically plausible candidate.

    rotations: known world-to-camera rotations ``[R_1, R_2, R_3, ...]``
    views: ``[(p1, p2), (p1, p3), ...]`` pixel arrays for frames 2, 3, ...;
    the first entry holds the pair the solutions were decomposed from.

    Candidates failing :func:`filter_cheirality` on the first pair are
    discarded. Survivors are ranked by transfer error in the further views
    (translation refit with the candidate normal held fixed) when there are
    any, otherwise by two-view transfer error of the homography rebuilt
    from the known relative rotation.
    """
    if not solutions:
        raise NoValidSolution("no candidate solutions")
    p1, p2 = views[0]
    m1 = K.unproject(p1)
    survivors = filter_cheirality(solutions, m1)
    if not survivors:
        raise NoValidSolution("every candidate violates cheirality")
    if len(survivors) == 1:
        return survivors[0]

    R1 = rotations[0].matrix
    R2 = rotations[1].matrix
    scored = []
    for sol in survivors:
        n_world = R1.T @ sol.normal
        if len(views) > 1:
            errs = []
            for k, (q1, qk) in enumerate(views[1:], start=2):
                tau = fit_translation_given_normal(K, R1, rotations[k], n_world, q1, qk)
                Hk = Homography(K.matrix @ rotations[k].matrix
                                @ (np.eye(3) - np.outer(tau, n_world)) @ R1.T @ K.inverse)
                errs.append(_rms_transfer(Hk, q1, qk))
            score = float(np.mean(errs))
        else:
            R21 = R2 @ R1.T
            H2 = Homography(K.matrix @ (R21 - np.outer(sol.t_over_d, sol.normal)) @ K.inverse)
            score = _rms_transfer(H2, p1, p2)
        scored.append((round(score, 9), tuple(np.round(sol.normal, 12)), sol, score))
    scored.sort(key=lambda s: (s[0], s[1]))
    best = scored[0][2]
    best.score = scored[0][3]
    return best


# ----------------------------------------------------------- plane fitting

def _plane_from_points(P):
    c = P.mean(axis=0)
    w, V = np.linalg.eigh((P - c).T @ (P - c))
    n = V[:, 0]
    return PlaneParams(n, -float(n @ c)), w


def fit_plane_ransac(points, threshold, seed=0, max_iters=PLANE_RANSAC_MAX_ITERS,
                     confidence=RANSAC_CONFIDENCE) -> RansacResult:
    """3-point RANSAC plane with a least-squares refit on the inliers."""
    P = np.asarray(points, dtype=float).reshape(-1, 3)
    n = len(P)
    if n < 3:
        raise DegenerateConfiguration("need at least 3 points")
    span = np.linalg.svd(P - P.mean(axis=0), compute_uv=False)
    if span[1] <= 1e-12 * max(span[0], 1e-300):
        raise DegenerateConfiguration("points are collinear")
    rng = np.random.default_rng(seed)
    best_mask, best_count = None, -1
    needed = max_iters
    it = 0
    while it < min(max_iters, needed):
        it += 1
        idx = rng.choice(n, 3, replace=False)
        a, b, c = P[idx]
        nrm = np.cross(b - a, c - a)
        ln = np.linalg.norm(nrm)
        if ln <= 1e-12 * max(np.linalg.norm(b - a) * np.linalg.norm(c - a), 1e-300):
            continue
        nrm /= ln
        mask = np.abs((P - a) @ nrm) < threshold
        count = int(mask.sum())
        if count > best_count:
            best_mask, best_count = mask, count
            needed = _required_iterations(count / n, 3, confidence)
    if best_count < 3:
        raise DegenerateConfiguration("no non-degenerate plane hypothesis")
    mask = best_mask
    plane, _ = _plane_from_points(P[mask])
    for _ in range(5):
        new_mask = np.abs(plane.signed_distance(P)) < threshold
        if new_mask.sum() < 3 or np.array_equal(new_mask, mask):
            break
        mask = new_mask
        plane, _ = _plane_from_points(P[mask])
    mask = np.abs(plane.signed_distance(P)) < threshold
    if mask.sum() < 3:
        raise DegenerateConfiguration("refit plane lost its support")
    return RansacResult(model=plane, inliers=np.flatnonzero(mask), iterations=it)
