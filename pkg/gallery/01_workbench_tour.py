"""Tour of the pushing workbench: scene, scripted demonstration, renders.

Samples a scene, runs the scripted weave-push demonstration for a "push
the spam south" task, and saves a strip of rendered camera frames plus an
overhead trajectory plot to ``gallery/out/``.

Run from the repository root::

    python3 gallery/01_workbench_tour.py
"""

import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from latentarm import world

OUT = pathlib.Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

rng = np.random.default_rng(0)
task = world.make_push_task(0, "south")
scene = world.sample_scene(rng, [0, 4])
demo = world.scripted_demo(scene, task, rng)
history = world.replay_demo(demo)

print(f"demonstration: {len(demo.frames)} frames, "
      f"success={world.task_success(history, task)}")

# Strip of rendered camera frames, every 5th step.
picks = list(range(0, len(demo.frames), 5))
fig, axes = plt.subplots(1, len(picks), figsize=(2.2 * len(picks), 2.4))
for ax, k in zip(np.atleast_1d(axes), picks):
    ax.imshow(demo.frames[k][1])
    ax.set_title(f"t={k}", fontsize=9)
    ax.axis("off")
fig.tight_layout()
fig.savefig(OUT / "tour_frames.png", dpi=120)
print(f"wrote {OUT / 'tour_frames.png'}")

# Overhead view: end-effector path and object path from the replay.
ee_path = np.array([world.fk(w.q, w.geometry) for w in history])
obj_path = np.array([w.find_object(task.target_class).pos for w in history])

fig, ax = plt.subplots(figsize=(5, 5))
ax.plot(ee_path[:, 0], ee_path[:, 1], "-o", ms=2, label="end effector")
ax.plot(obj_path[:, 0], obj_path[:, 1], "-s", ms=2, label="object center")
ax.add_patch(plt.Circle(obj_path[0], scene.objects[0].radius,
                        fill=False, ls="--", color="gray"))
ax.set_xlim(0, 1)
ax.set_ylim(0, 1)
ax.set_aspect("equal")
ax.legend()
ax.set_title("weave-push gait, overhead view")
fig.savefig(OUT / "tour_overhead.png", dpi=120)
print(f"wrote {OUT / 'tour_overhead.png'}")
