"""Unit quaternions (w, x, y, z) and the SO(3) helpers built on them."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constants import UNIT_NORM_TOL


def skew(v):
    """Cross-product matrix: skew(a) @ b == cross(a, b)."""
    return np.array([[0.0, -v[2], v[1]],
                     [v[2], 0.0, -v[0]],
                     [-v[1], v[0], 0.0]])


def quat_multiply(a, b):
    """Hamilton product a * b."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_to_matrix(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(R):
    """Shepperd's method; returns the quaternion with w >= 0."""
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    if tr > 0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = np.array([0.25 * s,
                      (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s,
                      (R[1, 0] - R[0, 1]) / s])
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = np.array([(R[2, 1] - R[1, 2]) / s, 0.25 * s,
                      (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s])
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = np.array([(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s,
                      0.25 * s, (R[1, 2] + R[2, 1]) / s])
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = np.array([(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s,
                      (R[1, 2] + R[2, 1]) / s, 0.25 * s])
    q /= np.linalg.norm(q)
    return q if q[0] >= 0 else -q


def quat_exp(rotvec):
    """Quaternion of the rotation by angle |rotvec| about rotvec."""
    rotvec = np.asarray(rotvec, dtype=float)
    theta = np.linalg.norm(rotvec)
    if theta < 1e-8:
        # second-order series keeps the result unit-norm to machine precision
        q = np.concatenate([[1.0 - theta * theta / 8.0], 0.5 * rotvec])
        return q / np.linalg.norm(q)
    half = 0.5 * theta
    return np.concatenate([[np.cos(half)], np.sin(half) / theta * rotvec])


def quat_log(q):
    q = np.asarray(q, dtype=float)
    if q[0] < 0:
        q = -q
    v = q[1:]
    s = np.linalg.norm(v)
    if s < 1e-12:
        return 2.0 * v
    return 2.0 * np.arctan2(s, q[0]) / s * v


def rotation_between(a, b):
    """Quaternion of the minimal rotation taking unit vector a onto unit vector b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = float(np.dot(a, b))
    if c < -1.0 + 1e-12:
        # antiparallel: any axis orthogonal to a works; pick a deterministic one
        axis = np.cross(a, [1.0, 0.0, 0.0])
        if np.linalg.norm(axis) < 1e-6:
            axis = np.cross(a, [0.0, 1.0, 0.0])
        axis /= np.linalg.norm(axis)
        return np.concatenate([[0.0], axis])
    q = np.concatenate([[1.0 + c], np.cross(a, b)])
    return q / np.linalg.norm(q)


@dataclass(frozen=True, eq=False)
class Rotation:
    """A proper rotation stored as a unit quaternion (w, x, y, z).

    Frame rotations in this package map world coordinates into the camera
    frame, i.e. ``x_cam = R @ (X_world - C)``.
    """

    quat: np.ndarray
    _matrix: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        q = np.asarray(self.quat, dtype=float).reshape(4)
        norm = np.linalg.norm(q)
        if not np.isfinite(norm) or norm == 0.0:
            raise ValueError(f"invalid quaternion {q}")
        if abs(norm - 1.0) > UNIT_NORM_TOL:
            q = q / norm
        q.flags.writeable = False
        object.__setattr__(self, "quat", q)
        m = quat_to_matrix(q)
        m.flags.writeable = False
        object.__setattr__(self, "_matrix", m)

    @classmethod
    def identity(cls) -> Rotation:
        return cls(np.array([1.0, 0.0, 0.0, 0.0]))

    @classmethod
    def from_matrix(cls, R) -> Rotation:
        return cls(matrix_to_quat(R))

    @classmethod
    def from_rotvec(cls, rotvec) -> Rotation:
        return cls(quat_exp(rotvec))

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    def as_rotvec(self) -> np.ndarray:
        return quat_log(self.quat)

    def inverse(self) -> Rotation:
        w, x, y, z = self.quat
        return Rotation(np.array([w, -x, -y, -z]))

    def __mul__(self, other: Rotation) -> Rotation:
        return Rotation(quat_multiply(self.quat, other.quat))

    def apply(self, v):
        return np.asarray(v, dtype=float) @ self._matrix.T

    def angle_to(self, other: Rotation) -> float:
        d = abs(float(np.dot(self.quat, other.quat)))
        return 2.0 * float(np.arccos(min(1.0, d)))

    def __repr__(self):
        return "Rotation(w={:.6g}, x={:.6g}, y={:.6g}, z={:.6g})".format(*self.quat)
