import numpy as np
import pytest

from gpoinit.geometry import CameraIntrinsics, Pose
from gpoinit.rotation import Rotation
from gpoinit.synth import SceneConfig, generate_scene

K_DEFAULT = CameraIntrinsics(500.0, 500.0, 320.0, 240.0)


def random_rotation(rng, max_angle=np.pi):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return Rotation.from_rotvec(axis * rng.uniform(0, max_angle))


def relative_to_first(gt, m=None):
    """Ground-truth centres shifted to C_1 = 0 and scaled to unit plane distance."""
    C = np.array([p.position for p in gt.poses[:m]])
    C1 = C[0]
    dist = abs(gt.plane.normal @ C1 + gt.plane.distance)
    return (C - C1) / dist


@pytest.fixture
def K():
    return K_DEFAULT


@pytest.fixture(scope="session")
def clean_scene():
    return generate_scene(SceneConfig(frames=10, seed=0))


@pytest.fixture(scope="session")
def noisy_scene():
    return generate_scene(SceneConfig(frames=30, seed=3, noise_px=1.0, clutter_points=20))


@pytest.fixture
def identity_pose():
    return Pose(Rotation.identity(), np.zeros(3))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
