"""DH-parameterized 6-DOF serial chain: FK, geometric Jacobian, DLS IK.

Standard Denavit-Hartenberg convention, T_i = Rz(theta_i) Tz(d_i) Tx(a_i)
Rx(alpha_i), all joints revolute. The default model uses published UR5e
nominal parameters loaded from configs/ur5e.yaml.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import ConfigError, JointLimitViolation, NoConvergence, SingularMap
from .mathcore import Pose, as_vec, pose_error_twist

_CONFIG_DIR = os.path.join(os.path.dirname(__file__), "configs")
DEFAULT_MODEL_PATH = os.path.join(_CONFIG_DIR, "ur5e.yaml")


@dataclass(frozen=True)
class ManipulatorModel:
    """Six revolute joints described by DH rows (a, alpha, d, theta_offset)."""

    a: np.ndarray
    alpha: np.ndarray
    d: np.ndarray
    theta_offset: np.ndarray
    joint_lower: np.ndarray
    joint_upper: np.ndarray
    velocity_limit: np.ndarray
    base: Pose = field(default_factory=Pose)
    name: str = "arm"

    def __post_init__(self):
        for attr in ("a", "alpha", "d", "theta_offset",
                     "joint_lower", "joint_upper", "velocity_limit"):
            object.__setattr__(self, attr, as_vec(getattr(self, attr), 6))
        if np.any(self.joint_lower >= self.joint_upper):
            raise ConfigError("joint limits must satisfy lower < upper")
        if np.any(self.velocity_limit <= 0):
            raise ConfigError("velocity limits must be > 0")

    def clamp_joints(self, theta):
        return np.clip(as_vec(theta, 6), self.joint_lower, self.joint_upper)

    def within_limits(self, theta, tol=1e-9):
        theta = as_vec(theta, 6)
        return bool(np.all(theta >= self.joint_lower - tol)
                    and np.all(theta <= self.joint_upper + tol))


def load_model(path=DEFAULT_MODEL_PATH) -> ManipulatorModel:
    """Load a model config (YAML): dh rows, limits, base pose."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"model config not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"model config is not valid YAML: {exc}") from exc
    try:
        dh = raw["dh"]
        rows = [(float(r["a"]), float(r["alpha"]), float(r["d"]),
                 float(r.get("theta_offset", 0.0))) for r in dh]
        if len(rows) != 6:
            raise ConfigError(f"expected 6 dh rows, got {len(rows)}")
        a, alpha, d, off = (np.array(col) for col in zip(*rows))
        lower = raw.get("joint_lower", [-2 * np.pi] * 6)
        upper = raw.get("joint_upper", [2 * np.pi] * 6)
        vel = raw.get("velocity_limit", [np.pi] * 6)
        base = raw.get("base", {})
        base_pose = Pose(np.array(base.get("position", [0, 0, 0]), dtype=float),
                         np.array(base.get("rotation", np.eye(3).tolist()), dtype=float))
        return ManipulatorModel(a, alpha, d, off, lower, upper, vel,
                                base_pose, str(raw.get("name", "arm")))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad model config {path}: {exc}") from exc


def default_model() -> ManipulatorModel:
    return load_model(DEFAULT_MODEL_PATH)


def dh_transform(a, alpha, d, theta):
    """Homogeneous transform for one DH row."""
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(alpha), np.sin(alpha)
    return np.array([
        [ct, -st * ca, st * sa, a * ct],
        [st, ct * ca, -ct * sa, a * st],
        [0.0, sa, ca, d],
        [0.0, 0.0, 0.0, 1.0],
    ])


def frame_chain(model: ManipulatorModel, theta):
    """All 7 frames base..end-effector as 4x4 transforms (base pose included)."""
    theta = as_vec(theta, 6)
    T = model.base.matrix()
    frames = [T]
    q = theta + model.theta_offset
    for j in range(6):
        T = T @ dh_transform(model.a[j], model.alpha[j], model.d[j], q[j])
        frames.append(T)
    return frames


def forward_kinematics(model: ManipulatorModel, theta) -> Pose:
    """End-effector pose of the chain composed with the base pose."""
    return Pose.from_matrix(frame_chain(model, theta)[-1])


def joint_positions(model: ManipulatorModel, theta):
    """Frame origins (7, 3): base plus one per joint; row -1 is the EE."""
    return np.array([T[:3, 3] for T in frame_chain(model, theta)])


def batch_frame_origins(model: ManipulatorModel, thetas):
    """Frame origins for many configurations at once: (N, 6) -> (N, 7, 3)."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    N = thetas.shape[0]
    q = thetas + model.theta_offset
    T = np.broadcast_to(model.base.matrix(), (N, 4, 4)).copy()
    origins = np.empty((N, 7, 3))
    origins[:, 0] = T[:, :3, 3]
    for j in range(6):
        ct, st = np.cos(q[:, j]), np.sin(q[:, j])
        ca, sa = np.cos(model.alpha[j]), np.sin(model.alpha[j])
        A = np.zeros((N, 4, 4))
        A[:, 0, 0] = ct
        A[:, 0, 1] = -st * ca
        A[:, 0, 2] = st * sa
        A[:, 0, 3] = model.a[j] * ct
        A[:, 1, 0] = st
        A[:, 1, 1] = ct * ca
        A[:, 1, 2] = -ct * sa
        A[:, 1, 3] = model.a[j] * st
        A[:, 2, 1] = sa
        A[:, 2, 2] = ca
        A[:, 2, 3] = model.d[j]
        A[:, 3, 3] = 1.0
        T = T @ A
        origins[:, j + 1] = T[:, :3, 3]
    return origins


def jacobian(model: ManipulatorModel, theta):
    """Geometric Jacobian, rows [linear(3), angular(3)], columns by joint.

    Column j is (z_j x (p_e - p_j), z_j) for revolute joint j, with z_j and
    p_j taken from the frame preceding the joint.
    """
    frames = frame_chain(model, theta)
    p_e = frames[-1][:3, 3]
    J = np.zeros((6, 6))
    for j in range(6):
        z = frames[j][:3, 2]
        p = frames[j][:3, 3]
        J[:3, j] = np.cross(z, p_e - p)
        J[3:, j] = z
    return J


def dls_joint_velocity(model: ManipulatorModel, theta, x_dot_ref, lam=0.05,
                       J=None):
    """Damped-least-squares map from Cartesian twist to joint velocity.

    Solves theta_dot = J' (J J' + lambda^2 I)^-1 x_dot_ref, which minimizes
    ||J theta_dot - x_dot_ref||^2 + lambda^2 ||theta_dot||^2. With lam = 0 a
    singular Jacobian (sigma_min < 1e-10) raises SingularMap instead of
    amplifying noise without bound.
    """
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    x_dot_ref = as_vec(x_dot_ref, 6)
    if J is None:
        J = jacobian(model, theta)
    if lam == 0.0:
        sigma_min = np.linalg.svd(J, compute_uv=False)[-1]
        if sigma_min < 1e-10:
            raise SingularMap(f"sigma_min = {sigma_min:.3e} with lambda = 0")
        return np.linalg.solve(J, x_dot_ref)
    JJt = J @ J.T + (lam * lam) * np.eye(6)
    return J.T @ np.linalg.solve(JJt, x_dot_ref)


def dls_pose_ik(model: ManipulatorModel, theta_seed, target: Pose,
                tol=1e-6, max_iters=200, lam=0.05, step_scale=1.0):
    """Newton-style pose IK driven by dls_joint_velocity on the error twist.

    Returns joints whose FK is within tol of the target (position in m,
    orientation in rad, geodesic). Raises NoConvergence when the budget runs
    out and JointLimitViolation when the converged solution exceeds limits;
    never silently returns an unconverged state.
    """
    theta = as_vec(theta_seed, 6).copy()
    for _ in range(max_iters):
        current = forward_kinematics(model, theta)
        err = pose_error_twist(target, current)
        if np.linalg.norm(err[:3]) <= tol and np.linalg.norm(err[3:]) <= tol:
            if not model.within_limits(theta):
                raise JointLimitViolation("converged IK solution exceeds joint limits")
            return theta
        # Error-proportional damping: full DLS damping far out, Newton-like
        # steps close in, floored so singular rows stay bounded.
        lam_eff = min(lam, max(1e-4, float(np.linalg.norm(err))))
        step = dls_joint_velocity(model, theta, err, lam_eff)
        norm = np.linalg.norm(step)
        if norm > 0.5:
            step = step * (0.5 / norm)
        theta = theta + step_scale * step
    raise NoConvergence(f"pose IK did not converge in {max_iters} iterations")
