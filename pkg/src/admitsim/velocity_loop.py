"""Joint-space PID velocity regulation and the simulated velocity plant.

The loop compares the commanded joint velocity against the measured one,
runs a discrete PID with clamping anti-windup, and drives a first-order-lag
plant standing in for the real arm's velocity controller:

    e(t) = dtheta_ref - dtheta_actual
    u(t) = K_P e + K_I int(e) + K_D de/dt

The plant lag is discretized exactly (exponential decay toward u), so the
canonical first-order step response is reproduced at any tick size.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mathcore import as_vec

DEFAULT_KP = 8.0
DEFAULT_KI = 20.0
DEFAULT_KD = 0.02
DEFAULT_TIME_CONSTANT = 0.05   # s
DEFAULT_VELOCITY_LIMIT = np.pi  # rad/s
DEFAULT_INTEGRAL_LIMIT = 10.0


@dataclass(frozen=True)
class PidGains:
    kp: np.ndarray = field(default_factory=lambda: np.full(6, DEFAULT_KP))
    ki: np.ndarray = field(default_factory=lambda: np.full(6, DEFAULT_KI))
    kd: np.ndarray = field(default_factory=lambda: np.full(6, DEFAULT_KD))
    integral_limit: np.ndarray = field(default_factory=lambda: np.full(6, DEFAULT_INTEGRAL_LIMIT))

    def __post_init__(self):
        for name in ("kp", "ki", "kd", "integral_limit"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.ndim == 0:
                v = np.full(6, float(v))
            object.__setattr__(self, name, v.reshape(6))
        if np.any(self.kp < 0) or np.any(self.ki < 0) or np.any(self.kd < 0):
            raise ValueError("PID gains must be >= 0")
        if np.any(self.integral_limit <= 0):
            raise ValueError("integral_limit must be > 0")


@dataclass(frozen=True)
class PidState:
    integral: np.ndarray = field(default_factory=lambda: np.zeros(6))
    previous_error: np.ndarray = field(default_factory=lambda: np.zeros(6))
    initialized: bool = False

    def __post_init__(self):
        object.__setattr__(self, "integral", np.asarray(self.integral, dtype=float).reshape(6).copy())
        object.__setattr__(self, "previous_error", np.asarray(self.previous_error, dtype=float).reshape(6).copy())


@dataclass(frozen=True)
class JointPlantModel:
    """First-order lag per joint with optional Gaussian velocity noise."""

    time_constant: np.ndarray = field(default_factory=lambda: np.full(6, DEFAULT_TIME_CONSTANT))
    velocity_limit: np.ndarray = field(default_factory=lambda: np.full(6, DEFAULT_VELOCITY_LIMIT))
    noise_sigma: float = 0.0

    def __post_init__(self):
        for name in ("time_constant", "velocity_limit"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.ndim == 0:
                v = np.full(6, float(v))
            object.__setattr__(self, name, v.reshape(6))
        if np.any(self.time_constant <= 0):
            raise ValueError("plant time_constant must be > 0")
        if np.any(self.velocity_limit <= 0):
            raise ValueError("velocity_limit must be > 0")


def velocity_error(theta_dot_ref, theta_dot_actual):
    """e = reference minus measured joint velocity, componentwise."""
    return as_vec(theta_dot_ref, 6) - as_vec(theta_dot_actual, 6)


def pid_step(state: PidState, gains: PidGains, e, dt: float):
    """One PID update; returns (u, new_state).

    The integral includes the current sample and is clamped to
    integral_limit (anti-windup). The derivative is a backward difference,
    suppressed on the first call to avoid a startup kick.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    e = as_vec(e, 6)
    integral = np.clip(state.integral + e * dt,
                       -gains.integral_limit, gains.integral_limit)
    if state.initialized:
        derivative = (e - state.previous_error) / dt
    else:
        derivative = np.zeros(6)
    u = gains.kp * e + gains.ki * integral + gains.kd * derivative
    return u, PidState(integral, e, True)


def plant_step(plant: JointPlantModel, theta_dot_actual, u, dt: float, rng=None):
    """First-order lag toward u, exact over the tick, then noise and clamping.

    theta_dot' = u + (theta_dot - u) * exp(-dt / tau)
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    theta_dot = as_vec(theta_dot_actual, 6)
    u = as_vec(u, 6)
    decay = np.exp(-dt / plant.time_constant)
    out = u + (theta_dot - u) * decay
    if plant.noise_sigma > 0.0:
        if rng is None:
            raise ValueError("noise_sigma > 0 requires a seeded rng")
        out = out + rng.normal(0.0, plant.noise_sigma, size=6)
    return np.clip(out, -plant.velocity_limit, plant.velocity_limit)


def closed_loop_step(pid_state: PidState, gains: PidGains, plant: JointPlantModel,
                     theta_dot_ref, theta_dot_actual, dt: float, rng=None):
    """error -> PID -> plant, in order; returns (theta_dot, u, new_pid_state)."""
    e = velocity_error(theta_dot_ref, theta_dot_actual)
    u, pid_state = pid_step(pid_state, gains, e, dt)
    theta_dot = plant_step(plant, theta_dot_actual, u, dt, rng)
    return theta_dot, u, pid_state
