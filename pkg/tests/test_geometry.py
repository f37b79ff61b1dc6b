import numpy as np
import pytest

from gpoinit.errors import (BehindCamera, DegenerateDepth, DegeneratePlane, EmptyWindow,
                            NegativeDepth, RayParallelToPlane)
from gpoinit.geometry import (CameraIntrinsics, Frame, FrameWindow, Homography, PlaneParams,
                              Pose, canonical_plane, homography_from_pose_plane,
                              homography_world_form, normalize_homography, normalize_pi,
                              project, project_points, recover_depth, reconstruct_landmarks)
from gpoinit.rotation import Rotation

from conftest import random_rotation


# ---------------------------------------------------------------- normalize_pi

def test_normalize_pi_divides_by_z():
    np.testing.assert_allclose(normalize_pi([2.0, 4.0, 2.0]), [1.0, 2.0])


def test_normalize_pi_principal_ray():
    np.testing.assert_allclose(normalize_pi([0.0, 0.0, 1.0]), [0.0, 0.0])


def test_normalize_pi_rejects_zero_depth():
    with pytest.raises(DegenerateDepth):
        normalize_pi([3.0, -6.0, 1e-15])


# --------------------------------------------------------------------- project

def test_project_principal_point(K, identity_pose):
    px, depth = project(K, identity_pose, [0.0, 0.0, 1.0])
    np.testing.assert_allclose(px, [320.0, 240.0])
    assert depth == 1.0


def test_project_offset(K, identity_pose):
    px, _ = project(K, identity_pose, [0.1, 0.0, 1.0])
    np.testing.assert_allclose(px, [370.0, 240.0])


def test_project_behind_camera(K, identity_pose):
    with pytest.raises(BehindCamera):
        project(K, identity_pose, [0.0, 0.0, -1.0])


def test_project_matches_projection_matrix(K):
    rng = np.random.default_rng(1)
    for _ in range(20):
        R = random_rotation(rng)
        C = rng.normal(size=3)
        pose = Pose(R, C)
        P = C + R.matrix.T @ np.array([*rng.uniform(-1, 1, 2), rng.uniform(1, 5)])
        Pmat = K.matrix @ np.hstack([R.matrix, (-R.matrix @ C)[:, None]])
        y = Pmat @ np.append(P, 1.0)
        px, _ = project(K, pose, P)
        np.testing.assert_allclose(px, y[:2] / y[2], atol=1e-9)
        np.testing.assert_allclose(project_points(K, pose, P[None])[0][0], px, atol=1e-9)


def test_pose_from_rt_round_trip():
    rng = np.random.default_rng(2)
    R = random_rotation(rng)
    t = rng.normal(size=3)
    pose = Pose.from_rt(R, t)
    np.testing.assert_allclose(pose.t_cw, t, atol=1e-12)
    X = rng.normal(size=3)
    np.testing.assert_allclose(pose.to_camera(X[None])[0], R.matrix @ X + t, atol=1e-12)


def test_intrinsics_reject_non_positive_focal():
    with pytest.raises(ValueError):
        CameraIntrinsics(0.0, 500.0, 1.0, 1.0)


# ------------------------------------------------------------------ planes

def test_plane_sign_is_canonical():
    p = PlaneParams(np.array([0.0, 0.0, -2.0]), 2.0)
    np.testing.assert_allclose(p.normal, [0.0, 0.0, 1.0])
    assert p.distance == -1.0


def test_canonical_plane_idempotent_and_same_points():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n, d = canonical_plane(rng.normal(size=3), rng.normal())
        n2, d2 = canonical_plane(n, d)
        np.testing.assert_allclose(n, n2, atol=1e-15)
        assert d == pytest.approx(d2, abs=1e-15) and d <= 0
        # a point on the original plane stays on the canonical one
        P = -d * n + np.cross(n, rng.normal(size=3))
        assert abs(n @ P + d) < 1e-12


# ------------------------------------------------------------- homographies

def test_normalized_homography_gauge():
    rng = np.random.default_rng(4)
    M = rng.normal(size=(3, 3))
    H = normalize_homography(-5.0 * M)
    assert np.isclose(np.linalg.norm(H), np.sqrt(3.0))
    assert H[2, 2] >= 0
    np.testing.assert_allclose(normalize_homography(H), H)


def test_identity_homography_is_fixed_by_gauge():
    np.testing.assert_allclose(Homography(np.eye(3) * 7.0).matrix, np.eye(3), atol=1e-15)


def test_singular_homography_rejected():
    with pytest.raises(ValueError):
        Homography(np.diag([1.0, 1.0, 0.0]))


def test_pose_plane_homography_identity(K):
    H = homography_from_pose_plane(K, Rotation.identity(), np.zeros(3), [0.3, 0.1, 0.9], 1.0)
    np.testing.assert_allclose(H.matrix, np.eye(3), atol=1e-12)


def test_pose_plane_homography_pure_rotation(K):
    R = Rotation.from_rotvec([0.1, -0.2, 0.05])
    for n, d in (([0, 0, 1.0], -1.0), ([1.0, 0, 0], 3.0)):
        H = homography_from_pose_plane(K, R, np.zeros(3), n, d)
        expected = Homography(K.matrix @ R.matrix @ K.inverse)
        assert H.close_to(expected, 1e-12)


def test_pose_plane_homography_rejects_zero_distance(K):
    with pytest.raises(DegeneratePlane):
        homography_from_pose_plane(K, Rotation.identity(), np.ones(3), [0, 0, 1.0], 0.0)


def _two_view_scene(rng):
    """Random camera pair facing a random plane; returns everything in world terms."""
    n = rng.normal(size=3)
    n /= np.linalg.norm(n)
    plane = PlaneParams(n, -rng.uniform(1.0, 3.0))
    foot = -plane.distance * plane.normal
    R1 = random_rotation(rng)
    C1 = foot - plane.normal * rng.uniform(1.0, 2.0)
    R2 = R1 * random_rotation(rng, 0.2)
    C2 = C1 + rng.normal(scale=0.2, size=3)
    u = np.cross(plane.normal, [1.0, 0.0, 0.0])
    u /= np.linalg.norm(u)
    v = np.cross(plane.normal, u)
    pts = foot + rng.uniform(-0.3, 0.3, (10, 1)) * u + rng.uniform(-0.3, 0.3, (10, 1)) * v
    return plane, Pose(R1, C1), Pose(R2, C2), pts


def test_homography_transfers_plane_points(K):
    rng = np.random.default_rng(5)
    checked = 0
    while checked < 20:
        plane, p1, p2, pts = _two_view_scene(rng)
        x1, z1 = project_points(K, p1, pts)
        x2, z2 = project_points(K, p2, pts)
        if np.any(z1 <= 0) or np.any(z2 <= 0):
            continue
        R21 = p2.R @ p1.R.T
        t21 = p2.t_cw - R21 @ p1.t_cw
        n_c1 = p1.R @ plane.normal
        d_c1 = plane.distance + plane.normal @ p1.position
        H = homography_from_pose_plane(K, R21, t21, n_c1, d_c1)
        np.testing.assert_allclose(H.transfer(x1), x2, atol=1e-9)
        checked += 1


def test_world_form_matches_pose_plane_form(K):
    rng = np.random.default_rng(6)
    for _ in range(20):
        plane, p1, p2, _ = _two_view_scene(rng)
        R21 = p2.R @ p1.R.T
        t21 = p2.t_cw - R21 @ p1.t_cw
        n_c1 = p1.R @ plane.normal
        d_c1 = plane.distance + plane.normal @ p1.position
        H_a = homography_from_pose_plane(K, R21, t21, n_c1, d_c1)
        tau = (p1.position - p2.position) / d_c1
        H_b = homography_world_form(K, p2.rotation, p1.rotation, tau, plane.normal)
        assert H_a.close_to(H_b, 1e-9)


def test_world_form_zero_translation(K):
    Ri = Rotation.from_rotvec([0.2, 0.1, -0.3])
    R1 = Rotation.from_rotvec([-0.1, 0.05, 0.2])
    H = homography_world_form(K, Ri, R1, np.zeros(3), [0, 0, 1.0])
    expected = Homography(K.matrix @ Ri.matrix @ R1.matrix.T @ K.inverse)
    assert H.close_to(expected, 1e-12)


def test_world_form_reduces_to_pose_plane_form_with_identity_rotations(K):
    t = np.array([0.1, -0.2, 0.05])
    n = np.array([0.2, 0.1, 1.0])
    n /= np.linalg.norm(n)
    H_world = homography_world_form(K, Rotation.identity(), Rotation.identity(), t, n)
    H_pose = homography_from_pose_plane(K, Rotation.identity(), t, n, 1.0)
    assert H_world.close_to(H_pose, 1e-12)


def test_homography_composition(K):
    rng = np.random.default_rng(7)
    for _ in range(10):
        plane, p1, p2, _ = _two_view_scene(rng)
        p3 = Pose(p2.rotation * random_rotation(rng, 0.1), p2.position + rng.normal(scale=0.1, size=3))

        def H(a, b):
            d_a = plane.distance + plane.normal @ a.position
            return homography_world_form(K, b.rotation, a.rotation,
                                         (a.position - b.position) / d_a, plane.normal)

        assert H(p1, p3).close_to(H(p2, p3) @ H(p1, p2), 1e-9)


def test_homography_inverse():
    rng = np.random.default_rng(8)
    H = Homography(np.eye(3) + 0.1 * rng.normal(size=(3, 3)))
    assert (H @ H.inverse()).close_to(Homography(np.eye(3)), 1e-12)


# ----------------------------------------------------------- depth recovery

def test_recover_depth_reference_camera(K, identity_pose):
    plane = PlaneParams(np.array([0.0, 0.0, 1.0]), -1.0)
    assert recover_depth(K, identity_pose, plane, [320.0, 240.0]) == pytest.approx(1.0)


def test_recover_depth_raised_camera(K):
    plane = PlaneParams(np.array([0.0, 0.0, 1.0]), -1.0)
    pose = Pose(Rotation.identity(), np.array([0.0, 0.0, -1.0]))
    assert recover_depth(K, pose, plane, [320.0, 240.0]) == pytest.approx(2.0)


def test_recover_depth_parallel_ray(K, identity_pose):
    plane = PlaneParams(np.array([1.0, 0.0, 0.0]), -1.0)
    with pytest.raises(RayParallelToPlane):
        recover_depth(K, identity_pose, plane, [320.0, 240.0])


def test_recover_depth_plane_behind(K, identity_pose):
    plane = PlaneParams(np.array([0.0, 0.0, 1.0]), 1.0)     # z = -1
    with pytest.raises(NegativeDepth):
        recover_depth(K, identity_pose, plane, [320.0, 240.0])


def test_recover_depth_inverts_projection(K):
    rng = np.random.default_rng(9)
    count = 0
    while count < 50:
        plane, pose, _, pts = _two_view_scene(rng)
        for P in pts:
            try:
                px, depth = project(K, pose, P)
            except BehindCamera:
                continue
            assert recover_depth(K, pose, plane, px) == pytest.approx(depth, abs=1e-9)
            count += 1


# ------------------------------------------------------------ reconstruction

def test_reconstruct_landmarks_matches_ground_truth(clean_scene):
    window, gt = clean_scene
    landmarks, dropped = reconstruct_landmarks(window, gt.poses, gt.plane)
    assert not dropped
    for lm in landmarks:
        np.testing.assert_allclose(lm.position, gt.landmarks[lm.id], atol=1e-9)


def test_reconstruct_single_observation_track(K, identity_pose):
    plane = PlaneParams(np.array([0.0, 0.0, 1.0]), -2.0)
    frames = [Frame(Rotation.identity(), {7: np.array([370.0, 240.0])}),
              Frame(Rotation.identity(), {})]
    window = FrameWindow(K, frames)
    poses = [identity_pose, identity_pose]
    (lm,), dropped = reconstruct_landmarks(window, poses, plane)
    assert lm.id == 7 and not dropped
    np.testing.assert_allclose(lm.position, [0.2, 0.0, 2.0], atol=1e-12)


def test_reconstruct_drops_parallel_track(K, identity_pose):
    plane = PlaneParams(np.array([1.0, 0.0, 0.0]), -1.0)
    frames = [Frame(Rotation.identity(), {1: np.array([320.0, 240.0]),
                                          2: np.array([400.0, 240.0])}),
              Frame(Rotation.identity(), {1: np.array([320.0, 240.0])})]
    window = FrameWindow(K, frames)
    landmarks, dropped = reconstruct_landmarks(window, [identity_pose] * 2, plane)
    assert dropped == [1]
    assert [lm.id for lm in landmarks] == [2]


def test_empty_window_rejected(K):
    with pytest.raises(EmptyWindow):
        FrameWindow(K, [Frame(Rotation.identity(), {})])


def test_window_requires_reference_tracks(K):
    frames = [Frame(Rotation.identity(), {1: np.zeros(2)}),
              Frame(Rotation.identity(), {2: np.zeros(2)})]
    with pytest.raises(ValueError):
        FrameWindow(K, frames)


def test_correspondences_are_sorted(clean_scene):
    window, _ = clean_scene
    ids, p1, p2 = window.correspondences(3)
    assert list(ids) == sorted(ids)
    for j, a, b in zip(ids, p1, p2):
        np.testing.assert_array_equal(a, window.frames[0].observations[j])
        np.testing.assert_array_equal(b, window.frames[3].observations[j])
