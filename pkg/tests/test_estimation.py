import numpy as np
import pytest

from gpoinit.errors import DegenerateConfiguration, InsufficientInliers, NoValidSolution
from gpoinit.estimation import (Correspondence, DecompositionSolution, correspondence_arrays,
                                decompose_homography, estimate_homography_dlt, filter_cheirality,
                                filter_window_ransac, fit_plane_ransac, ransac_homography,
                                select_decomposition, symmetric_transfer_error)
from gpoinit.geometry import Homography, PlaneParams, Pose, project_points
from gpoinit.rotation import Rotation
from gpoinit.synth import SceneConfig, generate_scene

from conftest import K_DEFAULT, random_rotation


def random_homography(rng, strength=0.2):
    M = np.eye(3) + strength * rng.normal(size=(3, 3))
    M[2, :2] *= 1e-3          # keep the projective part pixel-sized
    return Homography(M)


def test_dlt_exact_four_points():
    rng = np.random.default_rng(0)
    for _ in range(50):
        H = random_homography(rng)
        # jittered quad corners keep the sample in general position
        p1 = np.array([[100.0, 100.0], [540.0, 100.0], [540.0, 380.0], [100.0, 380.0]])
        p1 = p1 + rng.uniform(-60, 60, (4, 2))
        p2 = H.transfer(p1)
        est = estimate_homography_dlt(p1, p2)
        assert est.close_to(H, 1e-9)


def test_dlt_identity():
    rng = np.random.default_rng(1)
    p = rng.uniform(0, 500, (10, 2))
    assert estimate_homography_dlt(p, p).close_to(Homography(np.eye(3)), 1e-12)


def test_dlt_collinear_rejected():
    p = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [5.0, 1.0]])
    with pytest.raises(DegenerateConfiguration):
        estimate_homography_dlt(p, p)
    line = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    with pytest.raises(DegenerateConfiguration):
        estimate_homography_dlt(line, line)


def test_dlt_too_few_points():
    with pytest.raises(DegenerateConfiguration):
        estimate_homography_dlt(np.zeros((3, 2)), np.zeros((3, 2)))


def test_dlt_permutation_invariant():
    rng = np.random.default_rng(2)
    H = random_homography(rng)
    p1 = rng.uniform(0, 640, (30, 2))
    p2 = H.transfer(p1) + rng.normal(scale=0.5, size=(30, 2))
    perm = rng.permutation(30)
    a = estimate_homography_dlt(p1, p2)
    b = estimate_homography_dlt(p1[perm], p2[perm])
    np.testing.assert_allclose(a.matrix, b.matrix, atol=1e-12)


def test_correspondence_arrays():
    corrs = [Correspondence(3, (1.0, 2.0), (3.0, 4.0)), Correspondence(5, (5.0, 6.0), (7.0, 8.0))]
    ids, p1, p2 = correspondence_arrays(corrs)
    assert list(ids) == [3, 5]
    np.testing.assert_array_equal(p2[1], [7.0, 8.0])


# ------------------------------------------------------------------ RANSAC

def two_layer_pixels(rng, n_plane, n_off, baseline=0.3):
    """Pixels of a z=1 plane and of points well off it, in two views."""
    plane_pts = np.column_stack([rng.uniform(-0.4, 0.4, (n_plane, 2)), np.ones(n_plane)])
    off = np.column_stack([rng.uniform(-0.4, 0.4, (n_off, 2)), rng.uniform(0.5, 0.7, n_off)])
    P = np.vstack([plane_pts, off])
    pose1 = Pose(Rotation.identity(), np.zeros(3))
    pose2 = Pose(Rotation.from_rotvec([0.0, 0.05, 0.0]), np.array([baseline, 0.05, 0.0]))
    p1, _ = project_points(K_DEFAULT, pose1, P)
    p2, _ = project_points(K_DEFAULT, pose2, P)
    return p1, p2


def test_ransac_all_inliers():
    rng = np.random.default_rng(3)
    p1, p2 = two_layer_pixels(rng, 100, 0)
    res = ransac_homography(p1, p2, seed=0)
    assert res.inlier_count == 100


def test_ransac_two_layer_exact_inliers():
    rng = np.random.default_rng(4)
    p1, p2 = two_layer_pixels(rng, 80, 20)
    res = ransac_homography(p1, p2, seed=1)
    np.testing.assert_array_equal(res.inliers, np.arange(80))


def test_ransac_gross_outliers_recall():
    recalls = []
    for seed in range(100):
        rng = np.random.default_rng(1000 + seed)
        p1, p2 = two_layer_pixels(rng, 100, 0)
        p2 = p2 + rng.normal(size=p2.shape)
        bad = rng.permutation(100)[:50]
        p2[bad] = rng.uniform([0, 0], [640, 480], (50, 2))
        truth = np.setdiff1d(np.arange(100), bad)
        res = ransac_homography(p1, p2, threshold_px=3.0, seed=seed)
        recalls.append(np.isin(truth, res.inliers).mean())
    assert np.mean(recalls) >= 0.95


def test_ransac_deterministic():
    rng = np.random.default_rng(5)
    p1, p2 = two_layer_pixels(rng, 60, 30)
    p2 = p2 + rng.normal(scale=0.5, size=p2.shape)
    a = ransac_homography(p1, p2, seed=7)
    b = ransac_homography(p1, p2, seed=7)
    np.testing.assert_array_equal(a.inliers, b.inliers)
    np.testing.assert_array_equal(a.model.matrix, b.model.matrix)
    assert a.iterations == b.iterations


def test_ransac_batch_size_does_not_change_result():
    rng = np.random.default_rng(6)
    p1, p2 = two_layer_pixels(rng, 50, 50)
    p2 = p2 + rng.normal(scale=0.5, size=p2.shape)
    a = ransac_homography(p1, p2, seed=2, batch=1)
    b = ransac_homography(p1, p2, seed=2, batch=64)
    np.testing.assert_array_equal(a.inliers, b.inliers)
    assert a.iterations == b.iterations


def test_ransac_insufficient_inliers():
    rng = np.random.default_rng(7)
    p1 = rng.uniform(0, 640, (20, 2))
    p2 = rng.uniform(0, 640, (20, 2))
    with pytest.raises(InsufficientInliers):
        ransac_homography(p1, p2, threshold_px=0.01, seed=0)


def test_ransac_inliers_respect_threshold():
    rng = np.random.default_rng(8)
    p1, p2 = two_layer_pixels(rng, 70, 30)
    p2 = p2 + rng.normal(scale=1.0, size=p2.shape)
    res = ransac_homography(p1, p2, threshold_px=3.0, seed=0, ids=np.arange(100) + 10)
    err = symmetric_transfer_error(res.model, p1, p2)
    assert np.all(err[res.inliers] < 3.0)
    np.testing.assert_array_equal(res.ids, res.inliers + 10)


def test_filter_window_removes_clutter():
    # 2 degrees per frame gives clutter enough parallax to fail the 3 px test
    window, gt = generate_scene(SceneConfig(frames=10, seed=1, clutter_points=20, step=2.0))
    filtered, models, rejected = filter_window_ransac(window, seed=0)
    kept = set(filtered.track_ids())
    assert kept <= gt.plane_ids()
    assert len(models) == window.m and models[0] is None
    assert set(rejected) == set(window.track_ids()) - kept


# ----------------------------------------------------------- decomposition

def random_decomposition_case(rng):
    """Random visible plane and relative motion in camera-1 coordinates.

    Both cameras stay on the same side of the plane.
    """
    while True:
        n = rng.normal(size=3)
        n[2] = abs(n[2]) + 1.0
        n /= np.linalg.norm(n)
        d = -rng.uniform(0.5, 3.0)
        R = random_rotation(rng, 0.4)
        t = rng.normal(scale=0.3, size=3)
        if np.linalg.norm(t) < 0.02:
            continue
        sol = DecompositionSolution(R, t / d, n)
        # points on the plane seen by camera 1
        m1 = np.column_stack([rng.uniform(-0.3, 0.3, (30, 2)), np.ones(30)])
        z1 = -d / (m1 @ n)
        X2 = (z1[:, None] * m1) @ R.matrix.T + t
        C2 = -R.matrix.T @ t
        same_side = (n @ C2 + d) / d > 0.05
        if same_side and np.all(z1 > 0) and np.all(X2[:, 2] > 0):
            return sol, m1


def compose(sol, K=K_DEFAULT):
    return Homography(K.matrix @ sol.calibrated() @ K.inverse)


def contains(solutions, sol, tol=1e-6):
    for s in solutions:
        if (s.rotation.angle_to(sol.rotation) < tol
                and np.allclose(s.t_over_d, sol.t_over_d, atol=tol)
                and np.allclose(s.normal, sol.normal, atol=tol)):
            return True
    return False


def test_decompose_contains_generator():
    rng = np.random.default_rng(9)
    for _ in range(200):
        sol, _ = random_decomposition_case(rng)
        sols = decompose_homography(compose(sol), K_DEFAULT)
        assert 1 <= len(sols) <= 4
        assert contains(sols, sol)


def test_decompose_solutions_recompose():
    rng = np.random.default_rng(10)
    for _ in range(50):
        sol, _ = random_decomposition_case(rng)
        H = compose(sol)
        for s in decompose_homography(H, K_DEFAULT):
            assert compose(s).close_to(H, 1e-8)


def test_decompose_pure_rotation():
    R = Rotation.from_rotvec([0.1, -0.05, 0.2])
    H = Homography(K_DEFAULT.matrix @ R.matrix @ K_DEFAULT.inverse)
    sols = decompose_homography(H, K_DEFAULT)
    assert any(s.rotation.angle_to(R) < 1e-9 and np.allclose(s.t_over_d, 0) for s in sols)
    assert not sols[0].normal_observable


def test_decompose_identity():
    sols = decompose_homography(Homography(np.eye(3)), K_DEFAULT)
    assert any(s.rotation.angle_to(Rotation.identity()) < 1e-12
               and np.allclose(s.t_over_d, 0) for s in sols)


def test_select_single_survivor():
    rng = np.random.default_rng(11)
    sol, m1 = random_decomposition_case(rng)
    p1 = m1 @ K_DEFAULT.matrix.T
    p1 = p1[:, :2]
    bad = DecompositionSolution(sol.rotation, -sol.t_over_d, -sol.normal)
    out = select_decomposition([bad, sol], K_DEFAULT,
                               [Rotation.identity(), sol.rotation], [(p1, p1)])
    assert out is sol


def test_select_all_behind_camera():
    rng = np.random.default_rng(12)
    sol, m1 = random_decomposition_case(rng)
    p1 = (m1 @ K_DEFAULT.matrix.T)[:, :2]
    flipped = DecompositionSolution(sol.rotation, sol.t_over_d, -sol.normal)
    with pytest.raises(NoValidSolution):
        select_decomposition([flipped], K_DEFAULT, [Rotation.identity(), sol.rotation],
                             [(p1, p1)])


def test_select_three_view_recovers_truth(clean_scene):
    window, gt = clean_scene
    K = window.intrinsics
    _, p1, p2 = window.correspondences(1)
    _, q1, q3 = window.correspondences(window.m - 1)
    H = estimate_homography_dlt(p1, p2)
    sols = decompose_homography(H, K)
    best = select_decomposition(sols, K, window.rotations[:1] + [window.frames[1].rotation,
                                                                  window.frames[-1].rotation],
                                [(p1, p2), (q1, q3)])
    n_true_c1 = gt.poses[0].R @ gt.plane.normal
    assert abs(abs(best.normal @ n_true_c1) - 1.0) < 1e-8


def test_filter_cheirality_drops_hidden():
    rng = np.random.default_rng(13)
    sol, m1 = random_decomposition_case(rng)
    flipped = DecompositionSolution(sol.rotation, sol.t_over_d, -sol.normal)
    assert filter_cheirality([sol, flipped], m1) == [sol]


# ------------------------------------------------------------ plane fitting

def test_fit_plane_exact():
    rng = np.random.default_rng(14)
    P = np.column_stack([rng.uniform(-1, 1, (30, 2)), np.ones(30)])
    plane = fit_plane_ransac(P, 1e-6, seed=0).model
    np.testing.assert_allclose(plane.normal, [0.0, 0.0, 1.0], atol=1e-12)
    assert plane.distance == pytest.approx(-1.0, abs=1e-12)


def test_fit_plane_with_scatter():
    rng = np.random.default_rng(15)
    truth = PlaneParams(np.array([0.2, -0.3, 0.9]), -1.5)
    u = np.cross(truth.normal, [1.0, 0, 0])
    u /= np.linalg.norm(u)
    v = np.cross(truth.normal, u)
    foot = -truth.distance * truth.normal
    on = foot + rng.uniform(-1, 1, (90, 1)) * u + rng.uniform(-1, 1, (90, 1)) * v
    off = foot + rng.uniform(-1, 1, (10, 3)) + truth.normal * 0.5
    res = fit_plane_ransac(np.vstack([on, off]), 1e-3, seed=0)
    np.testing.assert_array_equal(res.inliers, np.arange(90))
    np.testing.assert_allclose(res.model.normal, truth.normal, atol=1e-9)
    assert res.model.distance == pytest.approx(truth.distance, abs=1e-9)


def test_fit_plane_collinear():
    P = np.array([[0.0, 0, 0], [1.0, 1, 1], [2.0, 2, 2]])
    with pytest.raises(DegenerateConfiguration):
        fit_plane_ransac(P, 0.1)


def test_fit_plane_inliers_within_threshold():
    rng = np.random.default_rng(16)
    P = np.column_stack([rng.uniform(-1, 1, (100, 2)), rng.normal(scale=0.02, size=100)])
    res = fit_plane_ransac(P, 0.03, seed=1)
    assert np.all(np.abs(res.model.signed_distance(P[res.inliers])) < 0.03)
