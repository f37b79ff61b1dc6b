import numpy as np
import pytest

from gpoinit.errors import DegenerateTrajectory
from gpoinit.evaluation import (MetricsReport, SimilarityTransform, ate, compute_metrics, pde,
                                pne, umeyama_align)
from gpoinit.geometry import PlaneParams
from gpoinit.gpo import run_gpo_pipeline

from conftest import random_rotation


def random_traj(rng, n=20):
    return rng.normal(size=(n, 3))


def test_umeyama_identity():
    P = random_traj(np.random.default_rng(0))
    U = umeyama_align(P, P)
    assert U.scale == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(U.rotation, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(U.translation, 0.0, atol=1e-12)


def test_umeyama_recovers_known_similarity():
    rng = np.random.default_rng(1)
    G = random_traj(rng)
    R0 = random_rotation(rng).matrix
    P = 2.0 * G @ R0.T
    U = umeyama_align(P, G)
    assert U.scale == pytest.approx(2.0, abs=1e-12)
    np.testing.assert_allclose(U.rotation, R0.T, atol=1e-12)
    np.testing.assert_allclose(U.apply(P), G, atol=1e-12)


def test_umeyama_convention():
    """R and T act on the estimate, s on ground truth."""
    rng = np.random.default_rng(2)
    G, P = random_traj(rng), random_traj(rng)
    U = umeyama_align(P, G)
    cost = np.sum((P @ U.rotation.T + U.translation - U.scale * G) ** 2)
    for _ in range(20):
        dR = random_rotation(rng, 0.01).matrix
        alt = np.sum((P @ (dR @ U.rotation).T + U.translation - U.scale * G) ** 2)
        assert alt >= cost - 1e-12


def test_umeyama_degenerate():
    with pytest.raises(DegenerateTrajectory):
        umeyama_align(np.zeros((2, 3)), np.ones((2, 3)))
    line = np.outer(np.arange(5.0), [1.0, 2.0, 3.0])
    with pytest.raises(DegenerateTrajectory):
        umeyama_align(line, np.random.default_rng(3).normal(size=(5, 3)))
    with pytest.raises(ValueError):
        umeyama_align(np.zeros((4, 3)), np.zeros((5, 3)))


def test_ate_zero_cases():
    rng = np.random.default_rng(4)
    G = random_traj(rng)
    assert ate(G, G) < 1e-12
    R0 = random_rotation(rng).matrix
    assert ate(3.7 * G @ R0.T + [1.0, -2.0, 0.5], G) < 1e-12


def test_ate_single_offset_matches_direct_evaluation():
    rng = np.random.default_rng(5)
    G = random_traj(rng, 10)
    P = G.copy()
    P[3] += [0.05, 0.0, 0.0]
    U = umeyama_align(P, G)
    direct = np.sqrt(np.mean(np.sum(((P @ U.rotation.T + U.translation) / U.scale - G) ** 2, axis=1)))
    assert ate(P, G) == pytest.approx(direct, rel=1e-12)
    # alignment can only shrink the raw offset contribution
    assert 0 < ate(P, G) <= 0.05 * np.sqrt(1 / 10)


def test_pne_examples():
    n = np.array([0.3, -0.2, 0.9])
    assert pne(n, n) == pytest.approx(0.0, abs=1e-6)
    assert pne(-n, n) == pytest.approx(0.0, abs=1e-6)
    assert pne([1.0, 0, 0], [0, 1.0, 0]) == pytest.approx(90.0)
    plane = PlaneParams(np.array([0.0, 0.0, 1.0]), -1.0)
    assert pne(plane, plane) == 0.0


def test_pde_examples():
    a = PlaneParams(np.array([0.0, 0.0, 1.0]), -1.0)
    assert pde(a, a) == 0.0
    b = PlaneParams(np.array([0.0, 0.0, 1.0]), -1.1)
    assert pde(b, a) == pytest.approx(0.1)


def test_pde_scale_absorbed_by_alignment():
    rng = np.random.default_rng(6)
    G = random_traj(rng)
    gt = PlaneParams(np.array([0.2, 0.3, 0.9]), -2.0)
    s, R0 = 0.3, random_rotation(rng).matrix
    T0 = rng.normal(size=3)
    # estimate = (R0 (gt frame) * s + T0); plane transformed the same way
    P = s * G @ R0.T + T0
    n_est = R0 @ gt.normal
    est_plane = PlaneParams(n_est, s * gt.distance - n_est @ T0)
    U = umeyama_align(P, G)
    assert pde(U.apply_plane(est_plane), gt) < 1e-12


def test_apply_plane_maps_points():
    rng = np.random.default_rng(7)
    U = SimilarityTransform(1.7, random_rotation(rng).matrix, rng.normal(size=3))
    plane = PlaneParams(np.array([0.0, 0.6, 0.8]), -1.3)
    u = np.cross(plane.normal, [1.0, 0, 0])
    P = -plane.distance * plane.normal + rng.normal(size=(5, 1)) * u
    moved = U.apply_plane(plane)
    np.testing.assert_allclose(moved.signed_distance(U.apply(P)), 0.0, atol=1e-12)


def test_similarity_validation():
    with pytest.raises(ValueError):
        SimilarityTransform(0.0, np.eye(3), np.zeros(3))
    with pytest.raises(ValueError):
        SimilarityTransform(1.0, -np.eye(3), np.zeros(3))


def test_compute_metrics_noise_free(clean_scene):
    window, gt = clean_scene
    report = compute_metrics(run_gpo_pipeline(window, ransac=False), gt, seed=0)
    assert isinstance(report, MetricsReport)
    assert report.ate < 1e-9
    assert report.pne_deg < 1e-6
    assert report.pde < 1e-9
    assert report.frames == window.m and report.converged
    assert report.avg_time_ms > 0
    assert set(report.to_dict()) >= {"ate", "pne_deg", "pde", "error"}
