"""Train a small 1-D latent action model and look at what it learned.

Trains the conditional autoencoder on a handful of oracle-fused push
demonstrations (short schedule, a few minutes on one core), then plots

* the training loss curve,
* the decoded action family a(z, s) swept over z at a few states along
  a demonstration, showing how a single scalar axis indexes a smooth
  family of joint-velocity commands.

Outputs land in ``gallery/out/``. Run from the repository root::

    python3 gallery/02_latent_action_family.py
"""

import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from latentarm import cae, perception, world

OUT = pathlib.Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

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
print(f"{len(demos)} demonstrations -> {len(pairs)} training pairs")

cfg = cae.TrainConfig(epochs=2000, seed=0)
model = cae.train_cae(pairs, cfg)
print(f"final loss {model.final_loss:.5f}")

fig, ax = plt.subplots(figsize=(5, 3))
ax.plot(model.loss_history)
ax.set_yscale("log")
ax.set_xlabel("epoch")
ax.set_ylabel("loss")
ax.set_title("training loss")
fig.tight_layout()
fig.savefig(OUT / "family_loss.png", dpi=120)
print(f"wrote {OUT / 'family_loss.png'}")

# Sweep z at a few states drawn from one demonstration.
zs = np.linspace(-1.0, 1.0, 41)
picks = [0, 10, 16, 20, 24]
fig, axes = plt.subplots(1, len(picks), figsize=(3 * len(picks), 3), sharey=True)
demo_pairs = [p for p in pairs if p.demo_id == 0]
for ax, i in zip(axes, picks):
    s = demo_pairs[i].s
    A = cae.decode_many(model, zs, s)
    for j in range(A.shape[1]):
        ax.plot(zs, A[:, j], label=f"joint {j}")
    ax.set_title(f"state at t={demo_pairs[i].i}")
    ax.set_xlabel("z")
axes[0].set_ylabel("joint velocity (rad/s)")
axes[0].legend(fontsize=8)
fig.suptitle("decoded action family a(z, s)")
fig.tight_layout()
fig.savefig(OUT / "family_sweep.png", dpi=120)
print(f"wrote {OUT / 'family_sweep.png'}")
