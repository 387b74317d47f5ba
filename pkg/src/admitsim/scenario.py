"""Fixed-timestep composition of planner, admittance, DLS, and velocity loop.

Each tick, in order: evaluate the scripted force profile, look up the
nominal reference (the plan clock always advances; the plan is never
regenerated), blend the admittance offset into the commanded pose, form the
Cartesian velocity command (nominal rate + compliance rate + a proportional
pose correction), map it to joint space with damped least squares, run the
PID velocity loop and plant, then integrate the joints and the virtual
dynamics. Identical seeds and inputs give bit-identical logs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .admittance import (AdmittanceParams, AdmittanceState, Wrench,
                         admittance_step, blend_command, reference_velocity,
                         validate_params)
from .errors import AdmitsimError, ConfigError, NumericalDivergence, PlanFailure
from .kinematics import (default_model, dls_joint_velocity, forward_kinematics,
                         jacobian, joint_positions)
from .mathcore import Pose, as_vec, matrix_to_rotvec, pose_error_twist
from .planner import (PlannerParams, Trajectory, reference_at, rrt_star_plan,
                      time_parameterize)
from .runlog import COLUMNS, RunLog, scenario_hash
from .velocity_loop import JointPlantModel, PidGains, PidState, closed_loop_step


@dataclass(frozen=True)
class ForceSegment:
    """One scripted push: wrench held for `duration` with cosine edge ramps."""

    start: float
    duration: float
    wrench: np.ndarray  # (6,)
    ramp: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "wrench", as_vec(self.wrench, 6))
        if self.duration <= 0:
            raise ConfigError("force segment duration must be > 0")
        if self.ramp < 0 or 2 * self.ramp > self.duration:
            raise ConfigError("ramp must satisfy 0 <= 2*ramp <= duration")

    @property
    def end(self):
        return self.start + self.duration

    def envelope(self, t):
        if t < self.start or t >= self.end:
            return 0.0
        if self.ramp == 0:
            return 1.0
        if t < self.start + self.ramp:
            return 0.5 * (1 - np.cos(np.pi * (t - self.start) / self.ramp))
        if t > self.end - self.ramp:
            return 0.5 * (1 - np.cos(np.pi * (self.end - t) / self.ramp))
        return 1.0


@dataclass(frozen=True)
class ForceProfile:
    segments: tuple = ()

    def __post_init__(self):
        segs = tuple(sorted(self.segments, key=lambda s: s.start))
        for a, b in zip(segs, segs[1:]):
            if b.start < a.end:
                raise ConfigError("force segments must not overlap")
        object.__setattr__(self, "segments", segs)

    def force_at(self, t):
        f = np.zeros(6)
        for seg in self.segments:
            env = seg.envelope(t)
            if env:
                f += seg.wrench * env
        return f

    def last_release(self):
        """End time of the final segment, or None when the profile is empty."""
        if not self.segments:
            return None
        return max(seg.end for seg in self.segments)


@dataclass
class Scenario:
    """Everything needed to reproduce one deterministic run."""

    model: ManipulatorModel = field(default_factory=default_model)
    admittance: AdmittanceParams = field(default_factory=AdmittanceParams)
    gains: PidGains = field(default_factory=PidGains)
    plant: JointPlantModel = field(default_factory=JointPlantModel)
    planner: PlannerParams = field(default_factory=PlannerParams)
    start_joints: np.ndarray = field(
        default_factory=lambda: np.array([0.0, -np.pi / 2, np.pi / 2,
                                          -np.pi / 2, -np.pi / 2, 0.0]))
    goal_pose: Pose | None = None
    goal_joints: np.ndarray | None = None
    obstacles: tuple = ()
    force_profile: ForceProfile = field(default_factory=ForceProfile)
    tick_rate: float = 1000.0
    duration: float = 8.0
    seed: int = 0
    correction_gain: float = 5.0   # 1/s, proportional pose correction
    dls_lambda: float = 0.05
    v_max: float = 0.1             # m/s trajectory speed bound
    a_max: float = 0.5             # m/s^2
    name: str = "scenario"

    def __post_init__(self):
        self.start_joints = as_vec(self.start_joints, 6)
        if self.goal_joints is not None:
            self.goal_joints = as_vec(self.goal_joints, 6)
        if not 100.0 <= self.tick_rate <= 2000.0:
            raise ConfigError(f"tick_rate {self.tick_rate:g} outside [100, 2000] Hz")
        if self.duration <= 0:
            raise ConfigError("duration must be > 0")
        validate_params(self.admittance)
        if self.goal_pose is None and self.goal_joints is None:
            raise ConfigError("scenario needs goal_pose or goal_joints")

    @property
    def dt(self):
        return 1.0 / self.tick_rate

    def describe(self) -> dict:
        """JSON-safe dictionary for hashing and log metadata."""
        d = {
            "name": self.name,
            "seed": self.seed,
            "tick_rate": self.tick_rate,
            "duration": self.duration,
            "correction_gain": self.correction_gain,
            "dls_lambda": self.dls_lambda,
            "v_max": self.v_max,
            "a_max": self.a_max,
            "start_joints": self.start_joints.tolist(),
            "goal_joints": None if self.goal_joints is None else self.goal_joints.tolist(),
            "goal_pose": None if self.goal_pose is None else {
                "position": self.goal_pose.position.tolist(),
                "rotation": self.goal_pose.rotation.tolist(),
            },
            "model": self.model.name,
            "admittance": {
                "mass": list(self.admittance.mass),
                "damping": list(self.admittance.damping),
                "stiffness": list(self.admittance.stiffness),
                "axis_mask": [bool(b) for b in self.admittance.axis_mask],
                "force_deadband": self.admittance.force_deadband,
                "offset_limit": list(self.admittance.offset_limit),
                "integrator": self.admittance.integrator,
            },
            "gains": {
                "kp": self.gains.kp.tolist(),
                "ki": self.gains.ki.tolist(),
                "kd": self.gains.kd.tolist(),
                "integral_limit": self.gains.integral_limit.tolist(),
            },
            "plant": {
                "time_constant": self.plant.time_constant.tolist(),
                "velocity_limit": self.plant.velocity_limit.tolist(),
                "noise_sigma": self.plant.noise_sigma,
            },
            "planner": {
                "max_iters": self.planner.max_iters,
                "step_size": self.planner.step_size,
                "rewire_gamma": self.planner.rewire_gamma,
                "goal_bias": self.planner.goal_bias,
                "seed": self.planner.seed,
                "collision_margin": self.planner.collision_margin,
            },
            "obstacles": [
                {"kind": o.kind, "center": o.center.tolist(),
                 "extents": None if o.extents is None else o.extents.tolist(),
                 "radius": o.radius}
                for o in self.obstacles
            ],
            "force_profile": [
                {"start": s.start, "duration": s.duration,
                 "wrench": s.wrench.tolist(), "ramp": s.ramp}
                for s in self.force_profile.segments
            ],
        }
        return d


def plan_trajectory(scenario: Scenario) -> Trajectory:
    """Plan and time-parameterize the nominal path for a scenario."""
    goal_pose = scenario.goal_pose
    if goal_pose is None:
        goal_pose = forward_kinematics(scenario.model, scenario.goal_joints)
    try:
        path = rrt_star_plan(scenario.model, scenario.start_joints, goal_pose,
                             list(scenario.obstacles), scenario.planner,
                             goal_joints=scenario.goal_joints)
    except AdmitsimError as exc:
        raise PlanFailure(f"planning failed: {exc}") from exc
    return time_parameterize(path, scenario.model, scenario.v_max,
                             scenario.a_max, scenario.tick_rate)


class SimulationStepper:
    """Owns the mutable per-tick state; shared by batch runs and the service.

    force_overlay(t) lets a caller add wrenches on top of the scripted
    profile (the operator-console path); physics consumes it only at tick
    boundaries so replayed command scripts reproduce batch runs exactly.
    """

    def __init__(self, scenario: Scenario, trajectory: Trajectory | None = None):
        self.scenario = scenario
        self.trajectory = trajectory if trajectory is not None else plan_trajectory(scenario)
        self.rng = np.random.default_rng(scenario.seed)
        self.reset()

    def reset(self):
        s = self.scenario
        self.tick = 0
        self.theta = s.start_joints.copy()
        self.theta_dot = np.zeros(6)
        self.adm_state = AdmittanceState()
        self.pid_state = PidState()
        self.admittance = s.admittance
        self.rng = np.random.default_rng(s.seed)

    @property
    def t(self):
        return self.tick * self.scenario.dt

    def set_admittance(self, params: AdmittanceParams):
        validate_params(params)
        self.admittance = params

    def step(self, extra_wrench=None):
        """Advance one tick; returns the log row for the tick just executed."""
        s = self.scenario
        dt = s.dt
        t = self.t
        f = s.force_profile.force_at(t)
        if extra_wrench is not None:
            f = f + as_vec(extra_wrench, 6)

        xd_pose, xd_vel = reference_at(self.trajectory, t)
        x_cmd = blend_command(xd_pose, self.adm_state)
        actual = forward_kinematics(s.model, self.theta)
        J = jacobian(s.model, self.theta)

        correction = s.correction_gain * pose_error_twist(x_cmd, actual)
        xdot_cmd = reference_velocity(self.adm_state, xd_vel) + correction
        theta_dot_ref = dls_joint_velocity(s.model, self.theta, xdot_cmd,
                                           s.dls_lambda, J=J)

        row = np.empty(len(COLUMNS))
        row[0] = t
        row[1:7] = f
        row[7:10] = actual.position
        row[10:13] = matrix_to_rotvec(actual.rotation)
        row[13:19] = J @ self.theta_dot
        row[19:22] = xd_pose.position
        row[22:25] = matrix_to_rotvec(xd_pose.rotation)
        row[25:28] = x_cmd.position
        row[28:31] = matrix_to_rotvec(x_cmd.rotation)
        row[31:37] = self.adm_state.delta_x
        row[37:43] = self.adm_state.delta_x_dot
        row[43:49] = self.theta

        theta_dot_next, u, self.pid_state = closed_loop_step(
            self.pid_state, s.gains, s.plant, theta_dot_ref, self.theta_dot,
            dt, self.rng)
        row[49:55] = theta_dot_ref
        row[55:61] = self.theta_dot
        row[61:67] = u

        self.adm_state = admittance_step(self.adm_state, self.admittance,
                                         Wrench.from_array(f), dt)
        self.theta = s.model.clamp_joints(self.theta + theta_dot_next * dt)
        self.theta_dot = theta_dot_next
        self.tick += 1

        if not np.all(np.isfinite(row)):
            raise NumericalDivergence(f"non-finite state at t = {t:.4f} s")
        return row

    def joint_frame_positions(self):
        return joint_positions(self.scenario.model, self.theta)


def run_scenario(scenario: Scenario, trajectory: Trajectory | None = None) -> RunLog:
    """Execute the scripted scenario; returns the full-rate RunLog."""
    stepper = SimulationStepper(scenario, trajectory)
    n = int(round(scenario.duration * scenario.tick_rate))
    data = np.empty((n, len(COLUMNS)))
    for i in range(n):
        data[i] = stepper.step()
    desc = scenario.describe()
    meta = {
        "scenario": desc,
        "scenario_hash": scenario_hash(desc),
        "seed": scenario.seed,
        "version": __version__,
        "dt": scenario.dt,
        "tick_rate": scenario.tick_rate,
        "trajectory_duration": stepper.trajectory.duration,
    }
    return RunLog(data, meta)
