"""Deterministic planar-arm world.

Kinematics, quasi-static pushing, rendering, scene sampling, task success
predicates, and a scripted demonstrator that stands in for kinesthetic
teaching. All lengths are meters inside the unit workspace [0,1]x[0,1].
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

A_MAX = 0.1          # per-joint velocity limit, rad/step
R_EE = 0.02          # end-effector disk radius
OBJ_RADIUS = 0.03    # default object disk radius
IMG_H = 48
IMG_W = 48
DT = 1.0

DEFAULT_LINKS = (0.30, 0.25, 0.20, 0.15)
DEFAULT_BASE = (0.5, 0.0)

# Ready pose keeps the end-effector near mid-workspace so both scripted
# demos and 30-step teleop episodes can reach pre-push points in about 10
# steps at the joint-speed limit, leaving time for the push itself.
READY_POSE = (1.897, -0.909, -0.895, -0.508)
READY_NOISE = 0.1

# Object placement region: reachable with margin for a 0.15 m push in any
# of the evaluated directions without leaving the workspace.
PLACE_X = (0.40, 0.60)
PLACE_Y = (0.46, 0.62)

# Demonstrations drive joints at a capped L2 speed so approach and push
# actions have comparable magnitudes. A latent model trained on uniform
# speeds cannot be exploited by a greedy controller hunting for
# faster-than-demonstrated shortcuts.
DEMO_SPEED = 0.09

CLASS_NAMES = ("spam", "cup", "animal", "cube", "cereal")
CLASS_COLORS = (
    (1.0, 0.1, 0.1),
    (0.1, 1.0, 0.1),
    (1.0, 1.0, 0.1),
    (1.0, 0.1, 1.0),
    (0.1, 1.0, 1.0),
)

PUSH_DISTANCE = 0.15
CONE_HALF_ANGLE = math.radians(15.0)
CIRCLE_BAND = 0.12

# Weave-push gait. A disk pushing a disk under center-to-center contact
# resolution is laterally unstable: a straight-line push amplifies any
# initial offset exponentially and loses the object even for sub-millimeter
# errors. Advancing along the push line while swinging laterally on
# alternating steps turns the end-effector into an effectively wide pusher
# that recaptures the object from offsets beyond +-15 mm, which is the
# robustness a controller replaying demonstrations from a single frozen
# visual frame actually needs.
PLOW_A = 0.025      # lateral swing amplitude, m
PLOW_DY = 0.015     # advance per step along the push direction, m
PLOW_TAPER = 2      # final steps ramp the swing down to land on the line
PLOW_GAP = 0.01     # gap between disk surfaces at the pre-push point, m
HOLD_NOISE = 0.015  # action jitter while parked at a waypoint, rad/step
HOLD_GAIN = 0.5     # proportional pull back to the parked pose

TASK_DIRECTIONS = {
    "east": 0.0,
    "south": -math.pi / 2,
    "south-west": -3 * math.pi / 4,
    "west": math.pi,
    "south-east": -math.pi / 4,
}

# Base objects and their unique tasks; cereal is the few-shot class.
BASE_TASK_MAP = {"spam": "south", "cup": "east", "animal": "west", "cube": "south-west"}


class IKError(Exception):
    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual


class SamplingError(Exception):
    pass


class DemoError(Exception):
    pass


class TaskSpecError(Exception):
    pass


@dataclass(frozen=True)
class ArmGeometry:
    links: tuple = DEFAULT_LINKS
    base: tuple = DEFAULT_BASE

    @property
    def m(self):
        return len(self.links)

    @property
    def reach(self):
        return sum(self.links)


@dataclass
class SceneObject:
    class_id: int
    pos: np.ndarray
    radius: float = OBJ_RADIUS

    def copy(self):
        return SceneObject(self.class_id, self.pos.copy(), self.radius)


@dataclass
class WorldState:
    q: np.ndarray
    objects: list
    geometry: ArmGeometry = field(default_factory=ArmGeometry)
    failed_exit: bool = False

    def copy(self):
        return WorldState(
            self.q.copy(), [o.copy() for o in self.objects], self.geometry, self.failed_exit
        )

    def find_object(self, class_id):
        for o in self.objects:
            if o.class_id == class_id:
                return o
        return None


@dataclass(frozen=True)
class Task:
    target_class: int
    kind: str                 # "push" | "circle"
    direction: float = 0.0    # push heading, radians
    distance: float = PUSH_DISTANCE
    min_angle: float = 2 * math.pi
    band: float = CIRCLE_BAND
    name: str = ""


def make_push_task(class_id, direction_name, distance=PUSH_DISTANCE):
    return Task(
        target_class=class_id,
        kind="push",
        direction=TASK_DIRECTIONS[direction_name],
        distance=distance,
        name=direction_name,
    )


def make_circle_task(class_id):
    return Task(target_class=class_id, kind="circle", name="circle")


@dataclass
class Demonstration:
    frames: list            # [(q, image)], time ordered
    task: Task
    scene: WorldState


def wrap_angles(q):
    """Wrap to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(q, dtype=np.float64), 2 * np.pi)


def angdiff(target, q):
    return wrap_angles(np.asarray(target) - np.asarray(q))


def clamp_action(a):
    return np.clip(np.asarray(a, dtype=np.float64), -A_MAX, A_MAX)


def joint_positions(q, geom):
    """Positions of the base and each link tip; last row is the end-effector."""
    angles = np.cumsum(q)
    pts = np.empty((geom.m + 1, 2))
    pts[0] = geom.base
    pts[1:, 0] = geom.base[0] + np.cumsum(np.array(geom.links) * np.cos(angles))
    pts[1:, 1] = geom.base[1] + np.cumsum(np.array(geom.links) * np.sin(angles))
    return pts


def fk(q, geom):
    return joint_positions(q, geom)[-1]


def jacobian(q, geom):
    """2 x m planar Jacobian of fk."""
    pts = joint_positions(q, geom)
    ee = pts[-1]
    jac = np.empty((2, geom.m))
    for i in range(geom.m):
        r = ee - pts[i]
        jac[0, i] = -r[1]
        jac[1, i] = r[0]
    return jac


def step(world, action, dt=DT):
    """Integrate joints, then resolve end-effector/object penetration."""
    a = clamp_action(action)
    new = world.copy()
    new.q = wrap_angles(world.q + a * dt)
    ee = fk(new.q, new.geometry)
    for obj in new.objects:
        delta = obj.pos - ee
        dist = float(np.hypot(*delta))
        contact = R_EE + obj.radius
        if dist < contact:
            if dist < 1e-12:
                direction = np.array([1.0, 0.0])
            else:
                direction = delta / dist
            obj.pos = obj.pos + direction * (contact - dist)
            if not (0.0 <= obj.pos[0] <= 1.0 and 0.0 <= obj.pos[1] <= 1.0):
                new.failed_exit = True
    return new


def _pixel_centers():
    cols = (np.arange(IMG_W) + 0.5) / IMG_W
    rows = 1.0 - (np.arange(IMG_H) + 0.5) / IMG_H
    return cols, rows


def render(world):
    """48x48x3 intensity grid in [0,1]; deterministic function of the world."""
    img = np.zeros((IMG_H, IMG_W, 3))
    cols, rows = _pixel_centers()
    img[:, :, 0] = 0.5 * rows[:, None]  # background gradient encodes y

    # Arm links in channel 2.
    pts = joint_positions(world.q, world.geometry)
    for i in range(len(pts) - 1):
        seg = np.linspace(pts[i], pts[i + 1], 64)
        px = np.clip((seg[:, 0] * IMG_W).astype(int), 0, IMG_W - 1)
        py = np.clip(((1.0 - seg[:, 1]) * IMG_H).astype(int), 0, IMG_H - 1)
        img[py, px, 2] = 1.0

    # Objects drawn last so they are never occluded by the arm.
    xs = cols[None, :]
    ys = rows[:, None]
    for obj in world.objects:
        mask = (xs - obj.pos[0]) ** 2 + (ys - obj.pos[1]) ** 2 <= obj.radius**2
        img[mask] = CLASS_COLORS[obj.class_id % len(CLASS_COLORS)]
    return img


def sample_joints(rng, geom):
    """Random reachable joint state near the ready pose."""
    base = np.array(READY_POSE[: geom.m])
    if geom.m > len(READY_POSE):
        base = np.concatenate([base, np.zeros(geom.m - len(READY_POSE))])
    return wrap_angles(base + rng.uniform(-READY_NOISE, READY_NOISE, size=geom.m))


def sample_scene(rng, classes, geom=None, radius=OBJ_RADIUS):
    """One object per class, non-overlapping with margin, random arm pose."""
    if not classes:
        raise SamplingError("no classes requested")
    geom = geom or ArmGeometry()
    objects = []
    for class_id in sorted(classes):
        for _ in range(1000):
            pos = np.array(
                [rng.uniform(*PLACE_X), rng.uniform(*PLACE_Y)], dtype=np.float64
            )
            if all(np.hypot(*(pos - o.pos)) >= 2 * radius + o.radius + radius
                   for o in objects):
                objects.append(SceneObject(class_id, pos, radius))
                break
        else:
            raise SamplingError(f"could not place object of class {class_id}")
    return WorldState(sample_joints(rng, geom), objects, geom)


def solve_ik(target, init, geom, damping=0.05, max_iters=500, tol=1e-3):
    """Damped-least-squares IK seeded at init for branch consistency."""
    target = np.asarray(target, dtype=np.float64)
    if np.hypot(*(target - np.array(geom.base))) > geom.reach:
        raise IKError(f"target {target} beyond reach {geom.reach:.3f}")
    q = np.array(init, dtype=np.float64)
    lam2 = damping**2
    for _ in range(max_iters):
        err = target - fk(q, geom)
        if np.linalg.norm(err) <= tol:
            return wrap_angles(q)
        jac = jacobian(q, geom)
        jjt = jac @ jac.T + lam2 * np.eye(2)
        q = q + jac.T @ np.linalg.solve(jjt, err)
    residual = float(np.linalg.norm(target - fk(q, geom)))
    raise IKError(f"IK did not converge (residual {residual:.4f})", residual)


def solve_ik_min_step(target, init, geom, iters=3):
    """IK solution for `target` minimizing the largest joint step from `init`.

    The arm is redundant (m > 2), so each end-effector target has a
    self-motion manifold of solutions. Starting from the damped
    least-squares solution, slide along the manifold's null space to
    minimize the Chebyshev norm of the joint step (a linear program per
    iteration), re-solving IK after each slide to stay on target.
    """
    from scipy.linalg import null_space
    from scipy.optimize import linprog

    q_t = solve_ik(target, init, geom)
    best = q_t
    best_cost = float(np.max(np.abs(angdiff(q_t, init))))
    for _ in range(iters):
        dq = angdiff(q_t, np.asarray(init))
        basis = null_space(jacobian(q_t, geom))
        if basis.size == 0:
            break
        k = basis.shape[1]
        # Variables [w, t]: minimize t subject to |dq + basis @ w| <= t.
        a_ub = np.block([[basis, -np.ones((geom.m, 1))],
                         [-basis, -np.ones((geom.m, 1))]])
        b_ub = np.concatenate([-dq, dq])
        res = linprog(np.concatenate([np.zeros(k), [1.0]]), A_ub=a_ub, b_ub=b_ub,
                      bounds=[(None, None)] * k + [(0, None)])
        if not res.success:
            break
        q_t = solve_ik(target, wrap_angles(q_t + basis @ res.x[:k]), geom)
        cost = float(np.max(np.abs(angdiff(q_t, init))))
        if cost >= best_cost - 1e-6:
            break
        best, best_cost = q_t, cost
    return best


def plow_steps(distance):
    """Number of weave steps needed to transport an object `distance`."""
    # Overshoot margin: the gait path is longer than the required transport
    # so a controller that reproduces the gait imperfectly still clears the
    # target distance.
    return int(math.ceil((distance + 0.058) / PLOW_DY))


def plow_waypoints(obj_pos, obj_radius, direction, distance, amp=PLOW_A,
                   side=1.0, lateral_offset=0.0):
    """End-effector waypoints of the weave-push gait, pre point first.

    The first point sits one swing amplitude off the push line, slightly
    behind contact; each subsequent point advances PLOW_DY along the line
    with the lateral swing on alternating sides. The last PLOW_TAPER steps
    ramp the swing down so the gait ends on the line itself.

    `amp`, `side` and `lateral_offset` select a member of the gait family:
    swing amplitude, which side the gait parks on, and a sideways shift of
    the whole weave relative to the object center (the gait recenters the
    object, so moderate shifts still succeed). Demonstrations sample these
    so the learned action model covers states off the canonical weave.
    """
    d = np.array([math.cos(direction), math.sin(direction)])
    n = np.array([-d[1], d[0]])
    gap = obj_radius + R_EE + PLOW_GAP
    start = np.asarray(obj_pos, dtype=np.float64) - gap * d + lateral_offset * n
    n_steps = plow_steps(distance)
    pts = [start + side * amp * n]
    for k in range(1, n_steps + 1):
        a = amp * min(1.0, (n_steps - k) / PLOW_TAPER)
        sign = side if k % 2 == 0 else -side
        pts.append(start + k * PLOW_DY * d + sign * a * n)
    return pts


def push_waypoints(obj_pos, obj_radius, direction, distance):
    """Cartesian pre-push and post-push points for a push task."""
    pts = plow_waypoints(obj_pos, obj_radius, direction, distance)
    return pts[0], pts[-1]


GAIT_MARGIN = 0.02  # joint-distance progress toward the final config per gait step, rad


def _slide_to_distance(point, q, goal, dist_target, geom, max_iters=400):
    """Slide q along the self-motion manifold of `point` until its joint
    distance to `goal` reaches dist_target; the end effector stays put."""
    cur = float(np.linalg.norm(angdiff(q, goal)))
    for _ in range(max_iters):
        if cur >= dist_target - 1e-6:
            return q
        from scipy.linalg import null_space

        basis = null_space(jacobian(q, geom))
        if basis.size == 0:
            raise IKError("no self-motion available to shape the gait")
        w = basis.T @ angdiff(q, goal)
        direction = basis @ w if np.linalg.norm(w) > 1e-9 else basis[:, 0]
        direction = direction / np.linalg.norm(direction)
        step_len = min(0.02, dist_target - cur + 1e-4)
        q = solve_ik(point, wrap_angles(q + step_len * direction), geom)
        new = float(np.linalg.norm(angdiff(q, goal)))
        if new <= cur + 1e-12:
            raise IKError("self-motion slide stopped making progress")
        cur = new
    raise IKError("self-motion slide did not reach the target distance")


def _cheb(a, b):
    return float(np.max(np.abs(angdiff(a, b))))


def _sphere_tangent(q, goal, geom):
    """Unit joint direction that keeps both the end effector and the joint
    distance to `goal` fixed to first order, or None at singularities."""
    from scipy.linalg import null_space

    basis = null_space(jacobian(q, geom))
    if basis.shape[1] < 2:
        return None
    u = basis.T @ angdiff(q, goal)
    if np.linalg.norm(u) < 1e-9:
        return None
    t = basis @ np.array([-u[1], u[0]])
    return t / np.linalg.norm(t)


def _smooth_gait(pts, out, goal, bands, geom, sweeps=3):
    """Slide each config along its remaining self-motion freedom to shrink
    the largest per-joint step, keeping each distance-to-goal in its band."""
    for _ in range(sweeps):
        changed = False
        for k in range(len(out) - 1):
            lo, hi = bands[k]
            prev = out[k - 1] if k > 0 else None
            best = out[k]
            best_obj = _cheb(out[k + 1], best)
            if prev is not None:
                best_obj = max(best_obj, _cheb(best, prev))
            for _ in range(20):
                tang = _sphere_tangent(best, goal, geom)
                if tang is None:
                    break
                improved = False
                for alpha in (0.3, 0.15, 0.08, 0.04, -0.04, -0.08, -0.15, -0.3):
                    cand = solve_ik(pts[k], wrap_angles(best + alpha * tang), geom)
                    dist = float(np.linalg.norm(angdiff(cand, goal)))
                    if dist < lo - 1e-9:
                        try:
                            cand = _slide_to_distance(pts[k], cand, goal, lo, geom)
                        except IKError:
                            continue
                        dist = float(np.linalg.norm(angdiff(cand, goal)))
                    if not lo - 1e-9 <= dist <= hi + 1e-9:
                        continue
                    obj = _cheb(out[k + 1], cand)
                    if prev is not None:
                        obj = max(obj, _cheb(cand, prev))
                    if obj < best_obj - 1e-4:
                        best, best_obj = cand, obj
                        improved = True
                        break
                if not improved:
                    break
                changed = True
            out[k] = best
        if not changed:
            break
    return out


def gait_joint_path(pts, q_seed, geom, margin=GAIT_MARGIN):
    """Joint-space gait waypoints over the end-effector path `pts`.

    Chains IK along the path, then slides each config along the arm's
    self-motion manifold (end effector unchanged, so the contact physics
    of the gait are identical) until the joint distance to the final
    config strictly decreases by at least `margin` per step. Without the
    shaping, the weave's outboard strokes transiently increase that
    distance, and a controller that greedily minimizes one-step distance
    to the final config refuses them and stalls at the first waypoint
    whose successor is farther than itself. A smoothing pass then spends
    the remaining self-motion freedom on shrinking the largest per-joint
    step, which the shaping would otherwise push past the action limit.
    """
    qs = [solve_ik(pts[0], q_seed, geom)]
    for p in pts[1:]:
        qs.append(solve_ik(p, qs[-1], geom))
    goal = qs[-1]
    dist = [float(np.linalg.norm(angdiff(q, goal))) for q in qs]
    targets = list(dist)
    for k in range(len(targets) - 2, -1, -1):
        targets[k] = max(dist[k], targets[k + 1] + margin)
    out = [
        _slide_to_distance(p, q, goal, t, geom)
        for p, q, t in zip(pts[:-1], qs[:-1], targets[:-1])
    ]
    out.append(goal)
    bands = [(t, t + 0.4 * margin) for t in targets]
    return _smooth_gait(pts, out, goal, bands, geom)


def _drive_to_joints(world, q_target, rng, sigma, record, max_steps=200, tol=0.02,
                     speed=DEMO_SPEED, decel=True):
    steps = 0
    while np.max(np.abs(angdiff(q_target, world.q))) > tol:
        if steps >= max_steps:
            raise DemoError("joint-space drive did not converge")
        a = angdiff(q_target, world.q) / DT
        norm = float(np.linalg.norm(a))
        # Decelerate smoothly into the target so demonstrations contain a
        # dense ramp of slowing actions near each waypoint; an abrupt stop
        # leaves the learned family with no data on how to arrive. Pass-by
        # waypoints (decel=False) keep full speed: slowing into them would
        # teach the action model a slow band in the middle of the approach,
        # which costs the fixed-length schedule steps it does not have.
        eff = min(speed, 0.6 * norm + 0.01) if decel else speed
        if norm > eff:
            a = a * (eff / norm)
        a = clamp_action(a)
        if sigma > 0:
            a = clamp_action(a + rng.normal(0.0, sigma, size=a.shape))
        world = step(world, a)
        record(world)
        steps += 1
    return world


def scripted_demo(world, task, rng, sigma=0.005, switch_step=15, total_steps=30,
                  sigma_gait=0.008, park_lat=(-0.022, 0.022),
                  park_adv=(-0.010, 0.010)):
    """Oracle demonstration: approach a pre-contact point, then complete the task.

    Push demonstrations follow the same timing template as evaluation
    episodes: reach the pre-push point, hold there until `switch_step`,
    push through, then hold at the post state until `total_steps`. The
    hold segments teach the model near-zero actions at the waypoints, so
    a latent controller can park at a waypoint instead of drifting.
    """
    world = world.copy()
    target = world.find_object(task.target_class)
    if target is None:
        raise DemoError(f"task target class {task.target_class} not in scene")

    frames = [(world.q.copy(), render(world))]
    history = [world.copy()]
    scene = world.copy()

    def record(w):
        frames.append((w.q.copy(), render(w)))
        history.append(w.copy())

    geom = world.geometry
    if task.kind == "push":
        d = np.array([math.cos(task.direction), math.sin(task.direction)])
        n_lat = np.array([-d[1], d[0]])
        start_pos = world.find_object(task.target_class).pos.copy()
        # Each demonstration parks at a jittered point near the canonical
        # pre-push point, then every gait action lands on an absolute
        # joint waypoint. Recorded actions therefore demonstrate recovery
        # from perturbed states back onto one weave, so the learned action
        # family contracts toward the canonical gait instead of drifting.
        # The gait phase is recoverable from the joints alone: waypoint
        # parity is locked to position along the push line.
        # The approach is a single joint-space drive to the pre config, so
        # its distance to the pre waypoint shrinks every step: a controller
        # that greedily minimizes one-step distance to the waypoint can
        # reproduce the approach without stalling. Re-plan if the drive
        # accidentally disturbed the object.
        park_jitter = rng.uniform(*park_lat) * n_lat + \
            rng.uniform(*park_adv) * d
        for _ in range(5):
            obj = world.find_object(task.target_class)
            pts = plow_waypoints(obj.pos, obj.radius, task.direction, task.distance)
            pts[0] = pts[0] + park_jitter
            before = obj.pos.copy()
            gait = gait_joint_path(pts, world.q, geom)
            world = _drive_to_joints(world, gait[0], rng, sigma, record, tol=0.01)
            moved = np.linalg.norm(world.find_object(task.target_class).pos - before)
            if moved < 2e-3:
                break
        else:
            raise DemoError("approach kept disturbing the object")
        if len(history) - 1 > switch_step:
            raise DemoError("approach did not reach the pre-push point in time")

        def hold_until(world, n_steps, anchor, noise=HOLD_NOISE, gain=HOLD_GAIN):
            # Jitter around the anchor pose while steering back toward it.
            # The recorded corrections teach the model how to park at a
            # waypoint, not merely how to pass through it.
            while len(history) - 1 < n_steps:
                a = gain * angdiff(anchor, world.q) / DT
                a = clamp_action(a + rng.normal(0.0, noise, size=geom.m))
                world = step(world, a)
                record(world)
            return world

        world = hold_until(world, switch_step, world.q.copy())
        # Execute the weave-push gait: aim each action exactly at the next
        # joint waypoint. `sigma_gait` action noise knocks every landing
        # off its waypoint, and the following action corrects back, so the
        # recorded gait is a dense set of recoveries onto the canonical
        # weave rather than a single noise-free trace. Strokes larger than
        # the action limit are clamped: the landing falls short of its
        # waypoint and the next action carries the remainder.
        for q_t in gait[1:]:
            a = angdiff(q_t, world.q) / DT
            if sigma_gait > 0:
                a = a + rng.normal(0.0, sigma_gait, size=a.shape)
            world = step(world, clamp_action(a))
            record(world)
        disp = world.find_object(task.target_class).pos - start_pos
        if float(disp @ d) < task.distance or \
                abs(float(disp @ n_lat)) > task.distance * math.tan(CONE_HALF_ANGLE):
            raise DemoError("weave push missed the target displacement")
        world = hold_until(world, total_steps, world.q.copy())
    elif task.kind == "circle":
        obj = world.find_object(task.target_class)
        radius = obj.radius + 0.05
        ee = fk(world.q, geom)
        alpha0 = math.atan2(ee[1] - obj.pos[1], ee[0] - obj.pos[0])
        n_stations = 24
        # One station beyond a full turn: the success predicate only counts
        # in-band angle segments, so give it margin over exactly 2*pi.
        for i in range(n_stations + 2):
            alpha = alpha0 + 2 * math.pi * i / n_stations
            p = obj.pos + radius * np.array([math.cos(alpha), math.sin(alpha)])
            q_wp = solve_ik(p, world.q, geom)
            world = _drive_to_joints(world, q_wp, rng, sigma, record, tol=0.03)
    else:
        raise TaskSpecError(f"unknown task kind {task.kind!r}")

    if not task_success(history, task):
        raise DemoError("scripted demonstration failed its own task")
    return Demonstration(frames, task, scene)


def demo_feasible(scene, task, seed=0):
    """Whether the canonical scripted policy completes the task on this scene.

    Scenes near the workspace edge can make the weave gait exceed the
    joint-speed limit or slip off the object; demonstrations implicitly
    reject such scenes, so evaluation scenes must be drawn from the same
    feasible set or the task is undefined on them.
    """
    try:
        scripted_demo(scene, task, np.random.default_rng(seed),
                      park_lat=(0.0, 0.0), park_adv=(0.0, 0.0))
    except (DemoError, IKError):
        return False
    return True


def sample_task_scene(rng, task, geom=None, max_tries=50):
    """A fresh scene containing the task's object, feasible for the task."""
    for _ in range(max_tries):
        scene = sample_scene(rng, [task.target_class], geom=geom)
        if demo_feasible(scene, task):
            return scene
    raise SamplingError(f"no feasible scene for task {task.name!r} "
                        f"in {max_tries} tries")


def replay_demo(demo, dt=DT):
    """Re-simulate a demonstration from its recorded joint frames."""
    world = demo.scene.copy()
    history = [world.copy()]
    prev_q = demo.frames[0][0]
    for q, _ in demo.frames[1:]:
        a = angdiff(q, prev_q) / dt
        world = step(world, a, dt)
        history.append(world.copy())
        prev_q = q
    return history


def task_success(history, task):
    """Success predicate over a world-state history."""
    if not history:
        raise TaskSpecError("empty history")
    first = history[0].find_object(task.target_class)
    last = history[-1].find_object(task.target_class)
    if first is None or last is None:
        raise TaskSpecError(f"target class {task.target_class} absent from history")
    if any(w.failed_exit for w in history):
        return False
    if task.kind == "push":
        d = np.array([math.cos(task.direction), math.sin(task.direction)])
        n = np.array([-d[1], d[0]])
        disp = last.pos - first.pos
        proj = float(disp @ d)
        lateral = abs(float(disp @ n))
        return proj >= task.distance and lateral <= task.distance * math.tan(CONE_HALF_ANGLE)
    if task.kind == "circle":
        center = last.pos
        lo, hi = last.radius, last.radius + task.band
        total = 0.0
        prev_angle = None
        for w in history:
            ee = fk(w.q, w.geometry)
            r = float(np.hypot(*(ee - center)))
            if lo <= r <= hi:
                angle = math.atan2(ee[1] - center[1], ee[0] - center[0])
                if prev_angle is not None:
                    total += abs(wrap_angles(angle - prev_angle))
                prev_angle = angle
            else:
                prev_angle = None
        return total >= task.min_angle
    raise TaskSpecError(f"unknown task kind {task.kind!r}")
