"""Run a greedy simulated teleoperator through a push episode.

Reuses the model trained by the short schedule here (a few minutes), then
drives a fresh scene with the greedy 1-D controller: at every step it
scans a grid of latent values and commits the one whose decoded action
moves the arm closest to the current waypoint. Saves the latent command
trace and the overhead trajectory to ``gallery/out/``.

Run from the repository root::

    python3 gallery/03_greedy_teleop_episode.py
"""

import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from latentarm import cae, perception, teleop, world

OUT = pathlib.Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

# Train on a handful of oracle-fused demonstrations (short schedule; the
# experiment pipelines use a much longer one).
rng = np.random.default_rng(3)
task = world.make_push_task(0, "south")
demos = []
while len(demos) < 6:
    scene = world.sample_scene(rng, [0])
    try:
        demos.append(world.scripted_demo(scene, task, rng))
    except (world.DemoError, world.IKError):
        continue
context = perception.PerceptionContext(strategy=perception.ORACLE, n_classes=5)
pairs = cae.build_pairs(demos, context, window=1)
model = cae.train_cae(pairs, cae.TrainConfig(epochs=2000, seed=0))
print(f"trained: final loss {model.final_loss:.5f}")

# Fresh evaluation scene, never seen in training. Run the greedy loop by
# hand here so the chosen latent values can be plotted; run_sim_teleop does
# exactly this internally.
eval_rng = np.random.default_rng(1004)
scene = world.sample_scene(eval_rng, [0])
plan = teleop.plan_push(scene, task)
ectx = teleop.make_episode_context(perception.ORACLE, scene, task)
grid = teleop.LatentGrid()
w = scene.copy()
s0 = teleop._fuse_initial(model, w, ectx)
history = [w.copy()]
zs = []
for step_index in range(30):
    s = s0.with_joints(w.q)
    z = teleop.greedy_latent(model, s, w.q, plan.target(step_index), grid)
    zs.append(z)
    w = teleop.latent_step(w, model, s0, z)
    history.append(w.copy())
    if w.failed_exit:
        break
success = world.task_success(history, task)
err = float(np.linalg.norm(world.angdiff(plan.final, history[-1].q)))
print(f"episode: success={success} final_state_error={err:.4f} "
      f"steps={len(history) - 1}")

# Latent command trace.
fig, ax = plt.subplots(figsize=(6, 2.5))
ax.step(range(len(zs)), zs, where="post")
ax.set_xlabel("step")
ax.set_ylabel("z")
ax.set_title("greedy latent commands")
fig.tight_layout()
fig.savefig(OUT / "teleop_latent_trace.png", dpi=120)
print(f"wrote {OUT / 'teleop_latent_trace.png'}")

# Overhead trajectory.
ee_path = np.array([world.fk(h.q, h.geometry) for h in history])
obj_path = np.array([h.find_object(task.target_class).pos for h in history])
fig, ax = plt.subplots(figsize=(5, 5))
ax.plot(ee_path[:, 0], ee_path[:, 1], "-o", ms=2, label="end effector")
ax.plot(obj_path[:, 0], obj_path[:, 1], "-s", ms=2, label="object center")
ax.set_xlim(0, 1)
ax.set_ylim(0, 1)
ax.set_aspect("equal")
ax.legend()
ax.set_title(f"greedy teleop episode (success={success})")
fig.savefig(OUT / "teleop_overhead.png", dpi=120)
print(f"wrote {OUT / 'teleop_overhead.png'}")
