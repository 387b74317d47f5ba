"""RRT* joint-space planning and Cartesian time parameterization.

Planning happens in joint space; collisions are checked by sampling
configurations along each edge densely enough that no link point moves more
than the Cartesian resolution between samples, then testing link-sampled
points against box/sphere obstacles with a safety margin. The planner keeps
the textbook RRT* schedule: steer by a bounded step, choose the cheapest
collision-free parent inside a radius shrinking as gamma (log n / n)^(1/6),
rewire neighbors through new nodes, and try wiring the goal from every new
node inside that radius, so best-path cost is non-increasing over iterations
for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GoalUnreachable, NoPathFound
from .kinematics import (ManipulatorModel, batch_frame_origins, dls_pose_ik,
                         forward_kinematics)
from .mathcore import Pose, as_vec, matrix_to_rotvec, rotvec_to_matrix


@dataclass(frozen=True)
class WorkspaceObstacle:
    """Axis-aligned box (extents = full side lengths) or sphere."""

    kind: str  # "box" | "sphere"
    center: np.ndarray
    extents: np.ndarray | None = None  # box only
    radius: float = 0.0                # sphere only

    def __post_init__(self):
        object.__setattr__(self, "center", as_vec(self.center, 3))
        if self.kind == "box":
            ext = as_vec(self.extents, 3)
            if np.any(ext <= 0):
                raise ValueError("box extents must be > 0")
            object.__setattr__(self, "extents", ext)
        elif self.kind == "sphere":
            if self.radius <= 0:
                raise ValueError("sphere radius must be > 0")
        else:
            raise ValueError(f"unknown obstacle kind {self.kind!r}")

    def clearance(self, points):
        """Distance from each point (n, 3) to the obstacle surface (signed)."""
        points = np.atleast_2d(points)
        if self.kind == "sphere":
            return np.linalg.norm(points - self.center, axis=1) - self.radius
        half = self.extents / 2.0
        rel = np.abs(points - self.center) - half
        outside = np.maximum(rel, 0.0)
        d_out = np.linalg.norm(outside, axis=1)
        d_in = np.minimum(np.max(rel, axis=1), 0.0)
        return d_out + d_in


@dataclass(frozen=True)
class PlannerParams:
    max_iters: int = 3000
    step_size: float = 0.3          # rad, joint-space steering bound
    rewire_gamma: float = 12.0      # radius = gamma (log n / n)^(1/6)
    goal_bias: float = 0.1
    seed: int = 0
    collision_margin: float = 0.01  # m
    cartesian_resolution: float = 0.02  # m of link travel between samples
    goal_tol_pos: float = 1e-3      # m, IK convergence for the goal joints
    goal_tol_rot: float = 1e-2      # rad
    sample_lower: np.ndarray | None = None
    sample_upper: np.ndarray | None = None


@dataclass(frozen=True)
class PlannedPath:
    """Joint waypoints from start to goal with summed joint-space length."""

    waypoints: np.ndarray  # (n, 6)
    cost: float
    iterations: int = 0
    checkpoint_costs: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "waypoints",
                           np.atleast_2d(np.asarray(self.waypoints, dtype=float)))


@dataclass(frozen=True)
class Trajectory:
    """Time-sampled Cartesian reference x_d(t) with velocities.

    Velocities are stored as the central finite difference of the samples,
    so the kinematic-consistency invariant holds by construction.
    """

    times: np.ndarray            # (n,), strictly increasing
    positions: np.ndarray        # (n, 3)
    rotations: np.ndarray        # (n, 3, 3)
    velocities: np.ndarray       # (n, 6) [linear, angular]
    tick_rate: float
    joint_waypoints: np.ndarray  # planner output kept for seeding/plots

    @property
    def duration(self):
        return float(self.times[-1])

    def final_pose(self) -> Pose:
        return Pose(self.positions[-1], self.rotations[-1])


class _LinkSampler:
    """Points along the arm's links used for collision clearance checks.

    For a revolute DH chain the distance between consecutive frame origins
    is configuration-independent, so the per-link interpolation fractions
    can be precomputed once from the nominal link lengths.
    """

    def __init__(self, model: ManipulatorModel, spacing=0.05):
        self.model = model
        self.spacing = spacing
        lengths = np.hypot(model.a, model.d)
        self._fracs = []
        for L in lengths:
            n = max(1, int(np.ceil(L / spacing)))
            self._fracs.append(np.arange(1, n + 1) / n)

    def points_batch(self, thetas):
        """Sampled arm points for N configurations: (N, 6) -> (N, P, 3)."""
        origins = batch_frame_origins(self.model, thetas)
        parts = [origins[:, :1, :]]
        for k in range(6):
            seg = origins[:, k + 1, :] - origins[:, k, :]
            fr = self._fracs[k]
            parts.append(origins[:, k, None, :] + seg[:, None, :] * fr[None, :, None])
        return np.concatenate(parts, axis=1)

    def points(self, theta):
        return self.points_batch(np.asarray(theta, dtype=float)[None, :])[0]


def _points_clear(points, obstacles, margin):
    flat = points.reshape(-1, 3)
    for obs in obstacles:
        if np.any(obs.clearance(flat) < margin):
            return False
    return True


def config_clear(model, theta, obstacles, margin, sampler=None):
    if not obstacles:
        return True
    sampler = sampler or _LinkSampler(model)
    return _points_clear(sampler.points(theta), obstacles, margin)


def segment_clear(model, theta_a, theta_b, obstacles, params: PlannerParams,
                  sampler=None, reach=1.2, resolution_scale=1.0):
    """Collision check a straight joint-space segment.

    Sampled so the worst-case Cartesian motion between consecutive samples
    (L1 joint motion times arm reach) stays under cartesian_resolution.
    """
    if not obstacles:
        return True
    sampler = sampler or _LinkSampler(model)
    delta = theta_b - theta_a
    travel = float(np.sum(np.abs(delta))) * reach
    res = params.cartesian_resolution * resolution_scale
    n = max(1, int(np.ceil(travel / res)))
    fracs = np.arange(n + 1) / n
    thetas = theta_a[None, :] + delta[None, :] * fracs[:, None]
    return _points_clear(sampler.points_batch(thetas), obstacles,
                         params.collision_margin)


def path_clear(model, path: PlannedPath, obstacles, params: PlannerParams,
               resolution_scale=1.0):
    """Independent dense re-check of a full path (used at 10x by tests)."""
    sampler = _LinkSampler(model)
    wp = path.waypoints
    if wp.shape[0] == 1:
        return config_clear(model, wp[0], obstacles, params.collision_margin, sampler)
    for i in range(wp.shape[0] - 1):
        if not segment_clear(model, wp[i], wp[i + 1], obstacles, params,
                             sampler, resolution_scale=resolution_scale):
            return False
    return True


def _rewire_radius(params: PlannerParams, n):
    return params.rewire_gamma * (np.log(n + 1) / (n + 1)) ** (1.0 / 6.0)


def rrt_star_plan(model: ManipulatorModel, start, goal_pose: Pose, obstacles,
                  params: PlannerParams, goal_joints=None) -> PlannedPath:
    """Plan a collision-free joint path from start to an IK solution of the goal.

    Deterministic under params.seed. Raises GoalUnreachable when IK fails for
    the goal pose and NoPathFound when the iteration budget ends without a
    connection. checkpoint_costs records the best cost at 10 evenly spaced
    iteration checkpoints (inf until first connection).
    """
    start = as_vec(start, 6)
    obstacles = list(obstacles or [])
    sampler = _LinkSampler(model)
    if not config_clear(model, start, obstacles, params.collision_margin, sampler):
        raise NoPathFound("start configuration is in collision")
    if goal_joints is None:
        try:
            goal_joints = dls_pose_ik(model, start, goal_pose,
                                      tol=min(params.goal_tol_pos, params.goal_tol_rot),
                                      max_iters=300)
        except Exception as exc:
            raise GoalUnreachable(f"no IK solution for goal pose: {exc}") from exc
    goal_joints = as_vec(goal_joints, 6)
    if not config_clear(model, goal_joints, obstacles, params.collision_margin, sampler):
        raise GoalUnreachable("goal configuration is in collision")

    if np.linalg.norm(goal_joints - start) < 1e-12:
        return PlannedPath(start[None, :], 0.0, 0, (0.0,) * 10)

    lower = params.sample_lower if params.sample_lower is not None else model.joint_lower
    upper = params.sample_upper if params.sample_upper is not None else model.joint_upper
    lower = as_vec(lower, 6)
    upper = as_vec(upper, 6)
    rng = np.random.default_rng(params.seed)

    cap = params.max_iters + 2
    nodes = np.zeros((cap, 6))
    parents = np.full(cap, -1, dtype=np.int64)
    costs = np.zeros(cap)
    children: list[list[int]] = [[] for _ in range(cap)]
    nodes[0] = start
    n = 1

    goal_parent = -1
    goal_cost = np.inf
    checkpoints = []
    checkpoint_iters = np.linspace(params.max_iters / 10, params.max_iters, 10).astype(int)

    def propagate(idx, delta):
        stack = [idx]
        while stack:
            i = stack.pop()
            costs[i] += delta
            stack.extend(children[i])

    for it in range(1, params.max_iters + 1):
        if rng.random() < params.goal_bias:
            sample = goal_joints
        else:
            sample = rng.uniform(lower, upper)

        dists = np.linalg.norm(nodes[:n] - sample, axis=1)
        nearest = int(np.argmin(dists))
        d = dists[nearest]
        if d < 1e-12:
            continue
        step = min(params.step_size, d)
        new = nodes[nearest] + (sample - nodes[nearest]) * (step / d)

        radius = _rewire_radius(params, n)
        near_d = np.linalg.norm(nodes[:n] - new, axis=1)
        near = np.flatnonzero(near_d <= radius)
        if near.size == 0:
            near = np.array([nearest])

        # Cheapest collision-free parent, probing in cost order (capped so a
        # wall of blocked edges cannot stall an iteration).
        order = near[np.argsort(costs[near] + near_d[near])][:30]
        parent = -1
        for cand in order:
            if segment_clear(model, nodes[cand], new, obstacles, params, sampler):
                parent = int(cand)
                break
        if parent < 0:
            continue
        idx = n
        nodes[idx] = new
        parents[idx] = parent
        costs[idx] = costs[parent] + near_d[parent]
        children[parent].append(idx)
        n += 1

        # Rewire neighbors through the new node when strictly cheaper.
        alt_costs = costs[idx] + near_d[near]
        improvable = near[alt_costs + 1e-12 < costs[near]]
        for cand in improvable:
            cand = int(cand)
            if cand == parent:
                continue
            alt = costs[idx] + near_d[cand]
            if alt + 1e-12 < costs[cand]:
                if segment_clear(model, new, nodes[cand], obstacles, params, sampler):
                    old_parent = parents[cand]
                    children[old_parent].remove(cand)
                    parents[cand] = idx
                    children[idx].append(cand)
                    propagate(cand, alt - costs[cand])
                    if goal_parent >= 0:
                        goal_cost = costs[goal_parent] + np.linalg.norm(
                            nodes[goal_parent] - goal_joints)

        # Try wiring the goal through the new node.
        dg = float(np.linalg.norm(new - goal_joints))
        if dg <= max(radius, params.step_size) and costs[idx] + dg + 1e-12 < goal_cost:
            if segment_clear(model, new, goal_joints, obstacles, params, sampler):
                goal_parent = idx
                goal_cost = costs[idx] + dg

        if len(checkpoints) < 10 and it >= checkpoint_iters[len(checkpoints)]:
            checkpoints.append(goal_cost)

    while len(checkpoints) < 10:
        checkpoints.append(goal_cost)

    if goal_parent < 0:
        raise NoPathFound(f"no path found in {params.max_iters} iterations")

    chain = [goal_joints]
    i = goal_parent
    while i >= 0:
        chain.append(nodes[i])
        i = parents[i]
    chain.reverse()
    return PlannedPath(np.array(chain), float(goal_cost), params.max_iters,
                       tuple(checkpoints))


def _trapezoid_profile(length, v_max, a_max):
    """Arc-length schedule s(t) for a trapezoidal speed profile.

    Returns (duration, s_of_t). Falls back to a triangular profile when the
    segment is too short to reach v_max.
    """
    if length <= 0:
        return 0.0, lambda t: 0.0
    t_acc = v_max / a_max
    d_acc = 0.5 * a_max * t_acc * t_acc
    if 2 * d_acc >= length:
        t_acc = np.sqrt(length / a_max)
        v_peak = a_max * t_acc
        duration = 2 * t_acc

        def s_of_t(t, t_acc=t_acc, v_peak=v_peak, a=a_max, L=length, T=duration):
            t = min(max(t, 0.0), T)
            if t <= t_acc:
                return 0.5 * a * t * t
            td = T - t
            return L - 0.5 * a * td * td
        return duration, s_of_t
    t_cruise = (length - 2 * d_acc) / v_max
    duration = 2 * t_acc + t_cruise

    def s_of_t(t, t_acc=t_acc, v=v_max, a=a_max, d_acc=d_acc, L=length, T=duration):
        t = min(max(t, 0.0), T)
        if t <= t_acc:
            return 0.5 * a * t * t
        if t <= T - t_acc:
            return d_acc + v * (t - t_acc)
        td = T - t
        return L - 0.5 * a * td * td
    return duration, s_of_t


def _interp_rotation(Ra, Rb, frac):
    rel = matrix_to_rotvec(Rb @ Ra.T)
    return rotvec_to_matrix(rel * frac) @ Ra


def time_parameterize(path: PlannedPath, model: ManipulatorModel,
                      v_max=0.1, a_max=0.5, tick_rate=1000.0) -> Trajectory:
    """Sample the FK image of a joint path under a trapezoidal speed profile.

    The Cartesian polyline through the waypoint poses is traversed at
    arc-length speed bounded by v_max and a_max; orientations follow
    shortest-arc interpolation within each segment.
    """
    wp = path.waypoints
    poses = [forward_kinematics(model, q) for q in wp]
    pts = np.array([p.position for p in poses])
    rots = np.array([p.rotation for p in poses])
    if wp.shape[0] == 1:
        times = np.array([0.0])
        vel = np.zeros((1, 6))
        return Trajectory(times, pts[:1], rots[:1], vel, tick_rate, wp)

    seg_len = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    length = float(cum[-1])
    duration, s_of_t = _trapezoid_profile(length, v_max, a_max)
    dt = 1.0 / tick_rate
    n = int(np.ceil(duration / dt)) + 1
    times = np.arange(n) * dt
    positions = np.zeros((n, 3))
    rotations = np.zeros((n, 3, 3))
    for i, t in enumerate(times):
        s = s_of_t(min(t, duration))
        k = int(np.searchsorted(cum, s, side="right") - 1)
        k = min(k, len(seg_len) - 1)
        frac = 0.0 if seg_len[k] == 0 else (s - cum[k]) / seg_len[k]
        positions[i] = pts[k] + (pts[k + 1] - pts[k]) * frac
        rotations[i] = _interp_rotation(rots[k], rots[k + 1], frac)

    velocities = np.zeros((n, 6))
    if n > 1:
        velocities[1:-1, :3] = (positions[2:] - positions[:-2]) / (2 * dt)
        velocities[0, :3] = (positions[1] - positions[0]) / dt
        velocities[-1, :3] = (positions[-1] - positions[-2]) / dt
        for i in range(1, n - 1):
            velocities[i, 3:] = matrix_to_rotvec(rotations[i + 1] @ rotations[i - 1].T) / (2 * dt)
        velocities[0, 3:] = matrix_to_rotvec(rotations[1] @ rotations[0].T) / dt
        velocities[-1, 3:] = matrix_to_rotvec(rotations[-1] @ rotations[-2].T) / dt
    return Trajectory(times, positions, rotations, velocities, tick_rate, wp)


def reference_at(trajectory: Trajectory, t: float):
    """Nominal reference (pose, twist) at time t.

    Linear interpolation between samples, shortest-arc for orientation;
    beyond the end the final pose is held with zero velocity.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    times = trajectory.times
    if t >= times[-1]:
        return trajectory.final_pose(), np.zeros(6)
    k = int(np.searchsorted(times, t, side="right") - 1)
    k = max(0, min(k, len(times) - 2))
    span = times[k + 1] - times[k]
    frac = 0.0 if span == 0 else (t - times[k]) / span
    pos = trajectory.positions[k] + (trajectory.positions[k + 1] - trajectory.positions[k]) * frac
    rot = _interp_rotation(trajectory.rotations[k], trajectory.rotations[k + 1], frac)
    vel = trajectory.velocities[k] + (trajectory.velocities[k + 1] - trajectory.velocities[k]) * frac
    return Pose(pos, rot), vel


def resume_reference(trajectory: Trajectory, t: float, delta_x=None):
    """Reference policy during and after force interaction.

    The nominal clock keeps advancing and the plan is never regenerated:
    the reference is independent of the current compliance offset, and
    convergence back to the plan comes entirely from the offset's decay.
    delta_x is accepted (and ignored) to make that contract explicit.
    """
    return reference_at(trajectory, t)
