"""Virtual mass-spring-damper admittance dynamics.

Maps a measured external wrench to a compliance offset that is blended into
the nominal Cartesian plan:

    M_d dd(dx) + B_d d(dx) + K_d dx = F_ext        (per enabled axis)
    x_cmd(t) = x_d(t) + dx(t)

Passivity requires M_d > 0, B_d > 0, K_d >= 0 elementwise, which
validate_params enforces. The state is advanced with an exact zero-order-hold
discretization of the per-axis linear dynamics by default (the force is held
constant over one tick), so the discrete trajectory matches the continuous
solution at sample times to machine precision. A semi-implicit Euler variant
is kept for comparison runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.linalg import expm

from .errors import PassivityViolation
from .mathcore import Pose, as_vec, rotvec_to_matrix

DEFAULT_MASS = 5.0        # kg, paper's simulation value
DEFAULT_DAMPING = 50.0    # N s/m
DEFAULT_STIFFNESS = 100.0  # N/m


@dataclass(frozen=True)
class AdmittanceParams:
    """Diagonal virtual dynamics, stored as hashable tuples (6 axes each).

    Axes are [x, y, z, rx, ry, rz]; rotational axes are masked off by default
    since only translational pushes are exercised. Force components with
    magnitude under force_deadband are treated as zero to keep sensor noise
    from walking the offset. The offset is clamped per axis to offset_limit
    as a workspace-safety box.
    """

    mass: tuple = (DEFAULT_MASS,) * 6
    damping: tuple = (DEFAULT_DAMPING,) * 6
    stiffness: tuple = (DEFAULT_STIFFNESS,) * 6
    axis_mask: tuple = (True, True, True, False, False, False)
    force_deadband: float = 0.5
    offset_limit: tuple = (0.30,) * 6
    integrator: str = "exact"  # "exact" | "semi_implicit"

    @staticmethod
    def from_scalars(mass=DEFAULT_MASS, damping=DEFAULT_DAMPING,
                     stiffness=DEFAULT_STIFFNESS, **kw) -> "AdmittanceParams":
        return AdmittanceParams(mass=(float(mass),) * 6,
                                damping=(float(damping),) * 6,
                                stiffness=(float(stiffness),) * 6, **kw)

    def mass_vec(self):
        return np.array(self.mass)

    def damping_vec(self):
        return np.array(self.damping)

    def stiffness_vec(self):
        return np.array(self.stiffness)

    def mask_vec(self):
        return np.array(self.axis_mask, dtype=bool)

    def limit_vec(self):
        return np.array(self.offset_limit)


@dataclass(frozen=True)
class AdmittanceState:
    """Compliance offset dx, its rate, and the last effective force seen."""

    delta_x: np.ndarray = field(default_factory=lambda: np.zeros(6))
    delta_x_dot: np.ndarray = field(default_factory=lambda: np.zeros(6))
    last_force: np.ndarray = field(default_factory=lambda: np.zeros(6))

    def __post_init__(self):
        object.__setattr__(self, "delta_x", np.asarray(self.delta_x, dtype=float).reshape(6).copy())
        object.__setattr__(self, "delta_x_dot", np.asarray(self.delta_x_dot, dtype=float).reshape(6).copy())
        object.__setattr__(self, "last_force", np.asarray(self.last_force, dtype=float).reshape(6).copy())


@dataclass(frozen=True)
class Wrench:
    """External force (N) and torque (N m) on the end-effector."""

    force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    torque: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "force", as_vec(self.force, 3))
        object.__setattr__(self, "torque", as_vec(self.torque, 3))

    def as_array(self):
        return np.concatenate([self.force, self.torque])

    @staticmethod
    def from_array(a) -> "Wrench":
        a = as_vec(a, 6)
        return Wrench(a[:3], a[3:])


def validate_params(params: AdmittanceParams):
    """Raise PassivityViolation unless M > 0, B > 0, K >= 0 on enabled axes."""
    mask = params.mask_vec()
    for name, vec, strict in (("mass", params.mass, True),
                              ("damping", params.damping, True),
                              ("stiffness", params.stiffness, False)):
        for axis in range(6):
            if not mask[axis]:
                continue
            v = vec[axis]
            if not np.isfinite(v):
                raise PassivityViolation(f"{name}[{axis}] is not finite")
            if strict and v <= 0.0:
                raise PassivityViolation(f"{name}[{axis}] = {v:g} must be > 0")
            if not strict and v < 0.0:
                raise PassivityViolation(f"{name}[{axis}] = {v:g} must be >= 0")
    limits = params.limit_vec()
    if np.any(limits[mask] <= 0.0):
        raise PassivityViolation("offset_limit must be > 0 on enabled axes")
    if params.force_deadband < 0.0:
        raise PassivityViolation("force_deadband must be >= 0")
    if params.integrator not in ("exact", "semi_implicit"):
        raise PassivityViolation(f"unknown integrator {params.integrator!r}")
    return params


@lru_cache(maxsize=64)
def _zoh_matrices(mass, damping, stiffness, mask, dt):
    """Per-axis exact discrete update: [x, v]' = Ad [x, v] + Bd f.

    Computed from the matrix exponential of the augmented system
    [[A, B], [0, 0]] so a zero stiffness (singular A) needs no special case.
    """
    Ad = np.zeros((6, 2, 2))
    Bd = np.zeros((6, 2))
    for axis in range(6):
        if not mask[axis]:
            Ad[axis] = np.eye(2)
            continue
        m, b, k = mass[axis], damping[axis], stiffness[axis]
        aug = np.zeros((3, 3))
        aug[0, 1] = 1.0
        aug[1, 0] = -k / m
        aug[1, 1] = -b / m
        aug[1, 2] = 1.0 / m
        E = expm(aug * dt)
        Ad[axis] = E[:2, :2]
        Bd[axis] = E[:2, 2]
    return Ad, Bd


def effective_force(params: AdmittanceParams, f_ext: Wrench):
    """Wrench actually seen by the virtual dynamics: masked and deadbanded."""
    f = f_ext.as_array().copy()
    f[~params.mask_vec()] = 0.0
    f[np.abs(f) < params.force_deadband] = 0.0
    return f


def admittance_step(state: AdmittanceState, params: AdmittanceParams,
                    f_ext: Wrench, dt: float) -> AdmittanceState:
    """Advance the virtual dynamics one tick of length dt (0 < dt <= 0.01 s).

    Masked axes stay pinned at zero. The offset is clamped to offset_limit
    with the rate zeroed on the clamped axis.
    """
    if not 0.0 < dt <= 0.01:
        raise ValueError(f"dt = {dt:g} outside (0, 0.01] s")
    f = effective_force(params, f_ext)
    mask = params.mask_vec()
    x = state.delta_x.copy()
    v = state.delta_x_dot.copy()

    if params.integrator == "exact":
        Ad, Bd = _zoh_matrices(params.mass, params.damping, params.stiffness,
                               params.axis_mask, dt)
        xn = Ad[:, 0, 0] * x + Ad[:, 0, 1] * v + Bd[:, 0] * f
        vn = Ad[:, 1, 0] * x + Ad[:, 1, 1] * v + Bd[:, 1] * f
    else:
        m = params.mass_vec()
        accel = np.zeros(6)
        accel[mask] = ((f - params.damping_vec() * v
                        - params.stiffness_vec() * x) / m)[mask]
        vn = v + accel * dt
        xn = x + vn * dt

    xn[~mask] = 0.0
    vn[~mask] = 0.0
    limit = params.limit_vec()
    clamped = np.abs(xn) > limit
    if np.any(clamped):
        xn[clamped] = np.sign(xn[clamped]) * limit[clamped]
        vn[clamped] = 0.0
    return AdmittanceState(xn, vn, f)


def reference_velocity(state: AdmittanceState, nominal_velocity):
    """Cartesian velocity command: nominal plan rate plus the compliance rate."""
    return as_vec(nominal_velocity, 6) + state.delta_x_dot


def blend_command(x_d: Pose, state: AdmittanceState) -> Pose:
    """Commanded pose: nominal pose shifted by the compliance offset.

    The translational offset adds to the position; the rotational offset is
    applied as a world-frame rotation-vector exponential (identity when the
    rotational axes are masked and therefore zero).
    """
    rot_offset = state.delta_x[3:]
    if np.any(rot_offset != 0.0):
        R = rotvec_to_matrix(rot_offset) @ x_d.rotation
    else:
        R = x_d.rotation
    return Pose(x_d.position + state.delta_x[:3], R)


def stored_energy(state: AdmittanceState, params: AdmittanceParams) -> float:
    """Virtual energy E = 1/2 v' M v + 1/2 x' K x on enabled axes."""
    mask = params.mask_vec()
    x = state.delta_x[mask]
    v = state.delta_x_dot[mask]
    m = params.mass_vec()[mask]
    k = params.stiffness_vec()[mask]
    return float(0.5 * np.sum(m * v * v) + 0.5 * np.sum(k * x * x))


def rollout(params: AdmittanceParams, forces, dt: float,
            state: AdmittanceState | None = None):
    """Run the dynamics over a force sequence; returns (dx, dx_dot, f_eff).

    forces is an (n, 6) array of wrenches, one per tick. The returned arrays
    have n+1 rows: row i is the state at time i*dt, with f_eff[i] the
    effective force held over tick i (last row zero-padded).
    """
    forces = np.atleast_2d(np.asarray(forces, dtype=float))
    n = forces.shape[0]
    state = state or AdmittanceState()
    dx = np.zeros((n + 1, 6))
    dv = np.zeros((n + 1, 6))
    fe = np.zeros((n + 1, 6))
    dx[0] = state.delta_x
    dv[0] = state.delta_x_dot
    for i in range(n):
        w = Wrench.from_array(forces[i])
        fe[i] = effective_force(params, w)
        state = admittance_step(state, params, w, dt)
        dx[i + 1] = state.delta_x
        dv[i + 1] = state.delta_x_dot
    return dx, dv, fe


def dissipated_energy_series(dx, dv, f_eff, params: AdmittanceParams, dt: float):
    """Cumulative dissipated energy per tick from a rollout log.

    Injected work uses the zero-order-hold convention that matches the
    integrator: over tick i the force f_eff[i] is constant, so its work is
    f_eff[i] . (dx[i+1] - dx[i]) exactly. Dissipated = injected - stored.
    For passive parameters this is non-negative up to float roundoff.
    """
    m = params.mass_vec()
    k = params.stiffness_vec()
    work = np.sum(f_eff[:-1] * (dx[1:] - dx[:-1]), axis=1)
    energy = 0.5 * np.sum(m * dv * dv, axis=1) + 0.5 * np.sum(k * dx * dx, axis=1)
    injected = np.concatenate([[0.0], np.cumsum(work)])
    return injected - (energy - energy[0]), injected


def relax(params: AdmittanceParams, state: AdmittanceState) -> AdmittanceState:
    """State with the offset released (used by reset commands)."""
    return replace(state, delta_x=np.zeros(6), delta_x_dot=np.zeros(6))
