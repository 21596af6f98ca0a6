"""Controllers and episode evaluation.

The greedy simulated teleoperator picks, each step, the discretized latent
value whose decoded action moves the joints closest to the current
waypoint. An end-effector mode-switching controller serves as the manual
baseline. Episodes report success and Final State Error (joint-space L2
distance to the final waypoint at timeout).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import cae, perception
from .world import (
    A_MAX,
    DT,
    angdiff,
    clamp_action,
    fk,
    gait_joint_path,
    jacobian,
    plow_waypoints,
    render,
    solve_ik,
    step,
    task_success,
)

DEFAULT_LIMIT = 30   # steps; one step is one second
DEFAULT_SWITCH = 15  # waypoint switch step
EE_SPEED = 0.01      # baseline end-effector speed, m/step


@dataclass
class LatentGrid:
    z_min: float = -1.0
    z_max: float = 1.0
    bins: int = 201

    def __post_init__(self):
        if self.bins < 3 or self.bins % 2 == 0:
            raise ValueError("bins must be odd and >= 3 so z = 0 is representable")

    def values(self):
        return np.linspace(self.z_min, self.z_max, self.bins)


@dataclass
class WaypointPlan:
    pre: np.ndarray
    post: np.ndarray
    switch_step: int = DEFAULT_SWITCH

    def target(self, step_index):
        return self.pre if step_index < self.switch_step else self.post

    @property
    def final(self):
        return self.post


@dataclass
class StationPlan:
    """Sequential joint waypoints at fixed step intervals (circle tasks)."""

    stations: list
    steps_per_station: int

    def target(self, step_index):
        idx = min(step_index // self.steps_per_station, len(self.stations) - 1)
        return self.stations[idx]

    @property
    def final(self):
        return self.stations[-1]


@dataclass
class EpisodeResult:
    history: list
    success: bool
    final_state_error: float
    steps: int
    controller: str
    error: str = None
    singular_steps: list = field(default_factory=list)


def plan_push(world, task, switch_step=DEFAULT_SWITCH):
    obj = world.find_object(task.target_class)
    if obj is None:
        raise ValueError(f"target class {task.target_class} not in scene")
    # Use the same shaped joint path as push demonstrations, so q_pre and
    # q_post are the exact configs the learned action family converges to.
    pts = plow_waypoints(obj.pos, obj.radius, task.direction, task.distance)
    gait = gait_joint_path(pts, world.q, world.geometry)
    return WaypointPlan(gait[0], gait[-1], switch_step)


def plan_circle(world, task, limit_steps=DEFAULT_LIMIT, n_stations=4):
    obj = world.find_object(task.target_class)
    if obj is None:
        raise ValueError(f"target class {task.target_class} not in scene")
    radius = obj.radius + 0.05
    ee = fk(world.q, world.geometry)
    alpha0 = math.atan2(ee[1] - obj.pos[1], ee[0] - obj.pos[0])
    stations = []
    q = world.q
    for i in range(1, n_stations + 1):
        alpha = alpha0 + 2 * math.pi * i / n_stations
        p = obj.pos + radius * np.array([math.cos(alpha), math.sin(alpha)])
        q = solve_ik(p, q, world.geometry)
        stations.append(q)
    return StationPlan(stations, max(1, limit_steps // n_stations))


def plan_for_task(world, task, limit_steps=DEFAULT_LIMIT, switch_step=DEFAULT_SWITCH):
    if task.kind == "push":
        return plan_push(world, task, switch_step)
    return plan_circle(world, task, limit_steps)


def greedy_latent(decoder, s, s_joint, w, grid, dt=DT):
    """Grid value minimizing distance-to-waypoint after one integrator step.

    Ties break toward smaller |z|, then toward negative z.
    """
    zs = grid.values()
    if callable(decoder):
        actions = decoder(zs, s)
    else:
        actions = cae.decode_many(decoder, zs, s)
    projected = np.asarray(s_joint)[None, :] + actions * dt
    objective = np.linalg.norm(np.asarray(w)[None, :] - projected, axis=1)
    order = np.lexsort((zs, np.abs(zs), objective))
    return float(zs[order[0]])


def make_episode_context(strategy, world, task, detector=None, noise=None, rng=None):
    """Perception context for one evaluation episode."""
    return perception.PerceptionContext(
        strategy=strategy,
        n_classes=len(perception.CLASS_NAMES),
        goal_class=task.target_class,
        detector=detector,
        world=world,
        noise=noise or perception.NoiseConfig(),
        rng=rng,
    )


def _fuse_initial(model, world, ctx):
    image0 = render(world)
    fuse_ctx = perception.PerceptionContext(
        strategy=ctx.strategy, n_classes=ctx.n_classes, goal_class=ctx.goal_class,
        detector=ctx.detector, encoder=model.cnn if model is not None else ctx.encoder,
        world=world, noise=ctx.noise, rng=ctx.rng,
    )
    return perception.fuse_state(ctx.strategy, world.q, image0, fuse_ctx)


def run_sim_teleop(world, task, model, perception_ctx, plan, limit_steps=DEFAULT_LIMIT,
                   grid=None):
    """Greedy simulated-teleoperator episode; visual state fixed at frame 0."""
    grid = grid or LatentGrid()
    world = world.copy()
    try:
        s0 = _fuse_initial(model, world, perception_ctx)
    except perception.PerceptionError as e:
        err = float(np.linalg.norm(angdiff(plan.final, world.q)))
        return EpisodeResult([world.copy()], False, err, 0, "sim-teleop", error=str(e))
    history = [world.copy()]
    for step_index in range(limit_steps):
        s = s0.with_joints(world.q)
        w_target = plan.target(step_index)
        z = greedy_latent(model, s, world.q, w_target, grid)
        action = cae.decode(model, z, s)
        world = step(world, action)
        history.append(world.copy())
        if world.failed_exit:
            break
    success = task_success(history, task)
    err = float(np.linalg.norm(angdiff(plan.final, history[-1].q)))
    return EpisodeResult(history, success, err, len(history) - 1, "sim-teleop")


def latent_step(world, model, s0, z):
    """One latent-control step: decode z against the frozen fused state.

    Shared by the batch runners and the live service so both paths step
    the world with bit-identical arithmetic.
    """
    s = s0.with_joints(world.q)
    action = cae.decode(model, float(np.clip(z, -1.0, 1.0)), s)
    return step(world, action)


def ee_step(world, axis, mode):
    """One end-effector baseline step. Returns (world, singular_flag)."""
    axis = float(np.clip(axis, -1.0, 1.0))
    v = np.zeros(2)
    v[mode] = axis * EE_SPEED
    jac = jacobian(world.q, world.geometry)
    jjt = jac @ jac.T + 0.05**2 * np.eye(2)
    if np.linalg.cond(jjt) > 1e12:
        return step(world, np.zeros(world.geometry.m)), True
    action = clamp_action(jac.T @ np.linalg.solve(jjt, v))
    return step(world, action), False


def run_latent_manual(world, task, model, perception_ctx, z_stream,
                      limit_steps=DEFAULT_LIMIT, plan=None):
    """Latent episode driven by an explicit z sequence (human or scripted)."""
    world = world.copy()
    if plan is None:
        plan = plan_for_task(world, task, limit_steps)
    try:
        s0 = _fuse_initial(model, world, perception_ctx)
    except perception.PerceptionError as e:
        err = float(np.linalg.norm(angdiff(plan.final, world.q)))
        return EpisodeResult([world.copy()], False, err, 0, "latent-manual", error=str(e))
    history = [world.copy()]
    for step_index, z in enumerate(z_stream):
        if step_index >= limit_steps:
            break
        world = latent_step(world, model, s0, z)
        history.append(world.copy())
        if world.failed_exit or task_success(history, task):
            break
    success = task_success(history, task)
    err = float(np.linalg.norm(angdiff(plan.final, history[-1].q)))
    return EpisodeResult(history, success, err, len(history) - 1, "latent-manual")


def run_ee_baseline(world, task, input_stream, limit_steps=DEFAULT_LIMIT, plan=None):
    """Mode-switching baseline: one axis at a time drives the end-effector."""
    world = world.copy()
    if plan is None:
        plan = plan_for_task(world, task, limit_steps)
    history = [world.copy()]
    singular = []
    mode = 0
    for step_index, (axis, toggle) in enumerate(input_stream):
        if step_index >= limit_steps:
            break
        if toggle:
            mode = 1 - mode
        world, was_singular = ee_step(world, axis, mode)
        if was_singular:
            singular.append(step_index)
        history.append(world.copy())
        if world.failed_exit or task_success(history, task):
            break
    success = task_success(history, task)
    err = float(np.linalg.norm(angdiff(plan.final, history[-1].q)))
    return EpisodeResult(history, success, err, len(history) - 1, "ee-baseline",
                         singular_steps=singular)


def final_state_error(result, w_post):
    """Joint-space L2 distance between the episode's final state and w_post."""
    return float(np.linalg.norm(angdiff(w_post, result.history[-1].q)))
