"""Fixed-dimension linear algebra and rigid-body pose primitives.

Vectors are plain numpy arrays: 3-vectors for positions/directions, 6-vectors
for spatial twists and wrenches ordered [linear, angular]. Rotation matrices
are 3x3 arrays whose columns are the frame axes. Everything here is pure and
allocation-light; callers may share inputs across threads freely.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateFrame, NotOrthonormal

EPS_DEGENERATE = 1e-9
EPS_ORTHONORMAL = 1e-6
EPS_GIMBAL = 1e-9


def vec3(x, y, z):
    return np.array([x, y, z], dtype=float)


def as_vec(v, n):
    """Coerce to a float array of length n, rejecting anything non-finite."""
    a = np.asarray(v, dtype=float).reshape(-1)
    if a.shape[0] != n:
        raise ValueError(f"expected {n}-vector, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("vector has non-finite entries")
    return a


@dataclass(frozen=True)
class Pose:
    """Rigid-body pose: position in meters, rotation as a 3x3 matrix."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float).reshape(3, 3))

    def transform_point(self, p):
        return self.rotation @ np.asarray(p, dtype=float) + self.position

    def compose(self, other: "Pose") -> "Pose":
        """self applied after other: result maps other's local frame to this frame."""
        return Pose(self.rotation @ other.position + self.position,
                    self.rotation @ other.rotation)

    def matrix(self):
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.position
        return T

    @staticmethod
    def from_matrix(T) -> "Pose":
        T = np.asarray(T, dtype=float)
        return Pose(T[:3, 3].copy(), T[:3, :3].copy())


@dataclass(frozen=True)
class EulerAngles:
    """Z-Y-X angles in radians: psi about z, phi about y, theta about x."""

    phi: float
    theta: float
    psi: float
    gimbal_lock: bool = False

    def as_array(self):
        return np.array([self.phi, self.theta, self.psi])


def is_rotation(R, tol=1e-9):
    R = np.asarray(R, dtype=float)
    return (np.allclose(R.T @ R, np.eye(3), atol=tol)
            and abs(np.linalg.det(R) - 1.0) < tol)


def orthonormal_frame(x_vec, y_vec):
    """Build a right-handed orthonormal triple (i, j, k) from two plane axes.

    i follows x_vec, k the normal x_vec x y_vec; j is recomputed as k x i so
    the triple is exactly orthonormal even when the inputs are not quite
    perpendicular (depth noise routinely skews them).
    """
    x = as_vec(x_vec, 3)
    y = as_vec(y_vec, 3)
    nx = np.linalg.norm(x)
    if nx <= EPS_DEGENERATE:
        raise DegenerateFrame(f"x axis has near-zero norm {nx:g}")
    cross = np.cross(x, y)
    nc = np.linalg.norm(cross)
    if nc <= EPS_DEGENERATE:
        raise DegenerateFrame("plane axes are parallel or one is near zero")
    i = x / nx
    k = cross / nc
    j = np.cross(k, i)
    return i, j, k


def rotation_from_axes(i, j, k):
    """Assemble a rotation matrix whose columns are the given axes.

    The triple must already be orthonormal to within 1e-6; one Gram-Schmidt
    polish pass is applied so the result satisfies the strict rotation
    invariant (orthonormal to 1e-9, det +1).
    """
    i = as_vec(i, 3)
    j = as_vec(j, 3)
    k = as_vec(k, 3)
    for a, name in ((i, "i"), (j, "j"), (k, "k")):
        if abs(np.linalg.norm(a) - 1.0) > EPS_ORTHONORMAL:
            raise NotOrthonormal(f"axis {name} is not unit length")
    if (abs(i @ j) > EPS_ORTHONORMAL or abs(i @ k) > EPS_ORTHONORMAL
            or abs(j @ k) > EPS_ORTHONORMAL):
        raise NotOrthonormal("axes are not mutually orthogonal")
    if np.linalg.det(np.column_stack([i, j, k])) < 0:
        raise NotOrthonormal("axes form a left-handed triple")
    # Gram-Schmidt polish: keep i, re-orthogonalize j, rebuild k.
    i = i / np.linalg.norm(i)
    j = j - (j @ i) * i
    j = j / np.linalg.norm(j)
    k = np.cross(i, j)
    return np.column_stack([i, j, k])


def rotation_from_euler(e: EulerAngles):
    """Rebuild the rotation for Z-Y-X angles: Rz(psi) @ Ry(phi) @ Rx(theta)."""
    cps, sps = np.cos(e.psi), np.sin(e.psi)
    cph, sph = np.cos(e.phi), np.sin(e.phi)
    cth, sth = np.cos(e.theta), np.sin(e.theta)
    Rz = np.array([[cps, -sps, 0], [sps, cps, 0], [0, 0, 1]])
    Ry = np.array([[cph, 0, sph], [0, 1, 0], [-sph, 0, cph]])
    Rx = np.array([[1, 0, 0], [0, cth, -sth], [0, sth, cth]])
    return Rz @ Ry @ Rx


def euler_from_rotation(R) -> EulerAngles:
    """Extract Z-Y-X angles with quadrant-safe two-argument arctangents.

    theta = atan2(j_z, k_z), phi = asin(-i_z), psi = atan2(i_y, i_x).
    At gimbal lock (|i_z| ~ 1) theta is pinned to 0, the whole remaining
    rotation folds into psi, and the gimbal_lock flag is set.
    """
    R = np.asarray(R, dtype=float)
    iz = float(np.clip(R[2, 0], -1.0, 1.0))
    if abs(iz) >= 1.0 - EPS_GIMBAL:
        phi = np.arcsin(-iz)
        theta = 0.0
        # With phi = -/+ pi/2 and theta = 0, R[0,1] = -sin(psi +/- theta')
        # collapses to functions of psi alone:
        psi = float(np.arctan2(-R[0, 1], R[1, 1]))
        return EulerAngles(float(phi), theta, psi, gimbal_lock=True)
    phi = float(np.arcsin(-iz))
    theta = float(np.arctan2(R[2, 1], R[2, 2]))
    psi = float(np.arctan2(R[1, 0], R[0, 0]))
    return EulerAngles(phi, theta, psi, gimbal_lock=False)


def rotvec_to_matrix(r):
    """Rodrigues exponential of a rotation vector (axis * angle)."""
    r = as_vec(r, 3)
    angle = np.linalg.norm(r)
    if angle < 1e-12:
        return np.eye(3)
    axis = r / angle
    K = skew(axis)
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * (K @ K)


def matrix_to_rotvec(R):
    """Rotation-matrix logarithm as a rotation vector."""
    R = np.asarray(R, dtype=float)
    c = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    angle = np.arccos(c)
    if angle < 1e-9:
        return np.zeros(3)
    if np.pi - angle < 1e-6:
        # Near pi the antisymmetric part vanishes; recover axis from R + I.
        A = (R + np.eye(3)) / 2.0
        axis = np.sqrt(np.clip(np.diag(A), 0.0, None))
        # Fix signs using the largest component.
        m = int(np.argmax(axis))
        if axis[m] < 1e-12:
            return np.zeros(3)
        sign = np.ones(3)
        for idx in range(3):
            if idx != m and A[m, idx] < 0:
                sign[idx] = -1.0
        axis = axis * sign
        axis /= np.linalg.norm(axis)
        return axis * angle
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return w * (angle / (2.0 * np.sin(angle)))


def skew(v):
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def orientation_error(R_target, R_current):
    """Rotation vector taking R_current onto R_target (world frame)."""
    return matrix_to_rotvec(np.asarray(R_target) @ np.asarray(R_current).T)


def pose_error_twist(target: Pose, current: Pose):
    """6-vector [position error, orientation error] from current to target."""
    return np.concatenate([target.position - current.position,
                           orientation_error(target.rotation, current.rotation)])
