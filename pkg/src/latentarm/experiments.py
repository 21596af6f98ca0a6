"""Experiment sweeps: sample-efficiency curves and few-shot transfer.

Reproduces the two result families as orderings over mean Final State
Error: (1) strategy comparison across a demos-per-object schedule, and
(2) Seen/Near/Far few-shot transfer versus training from scratch.
Results export to CSV plus an SVG line chart with standard-error bands.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import cae, perception, teleop, world


class ExperimentError(Exception):
    pass


BASE_CLASSES = tuple(world.BASE_TASK_MAP)
FEWSHOT_CLASS = "cereal"
FEWSHOT_SETTINGS = ("seen", "near", "far")


@dataclass
class SweepConfig:
    strategies: tuple = (
        perception.END_TO_END,
        perception.LOCALIZATION_ONLY,
        perception.STRUCTURED,
    )
    schedule: tuple = (1, 2, 3, 4, 5, 6, 7, 8, 9, 10)
    runs: int = 10
    val_scenes: int = 10
    seed: int = 0
    epochs: int = 16000
    # CNN strategies use a reduced epoch budget: a conv pass dominates the
    # cell cost and the sweep compares final-state-error orderings, which
    # stabilize long before full convergence.
    cnn_epochs: int = 150
    pool_size: int = 10
    # Optional explicit (strategy, demos) cells; None means the full
    # strategies-by-schedule grid.
    cells: tuple = None

    def __post_init__(self):
        if self.runs < 1:
            raise ExperimentError("runs must be >= 1")
        if any(b <= a for a, b in zip(self.schedule, self.schedule[1:])):
            raise ExperimentError("schedule must be strictly increasing")
        if self.cells is None and max(self.schedule) > self.pool_size:
            raise ExperimentError("schedule exceeds demo pool size")
        unknown = set(self.strategies) - set(perception.STRATEGIES)
        if unknown:
            raise ExperimentError(f"unknown strategies {sorted(unknown)}")
        if self.cells is not None:
            self.cells = tuple((str(s), int(n)) for s, n in self.cells)
            for s, n in self.cells:
                if s not in perception.STRATEGIES:
                    raise ExperimentError(f"unknown strategy {s!r} in cells")
                if n > self.pool_size:
                    raise ExperimentError("cell demo count exceeds pool size")

    def grid(self):
        if self.cells is not None:
            return list(self.cells)
        return [(s, n) for s in self.strategies for n in self.schedule]


@dataclass
class FewShotConfig:
    setting: str = "seen"
    schedule: tuple = (1, 2, 3, 4, 5)
    runs: int = 10
    val_scenes: int = 10
    seed: int = 0
    # Scratch models train only on the k few-shot demonstrations.
    epochs: int = 4000
    # Transfer models start from a base model pretrained on all base-task
    # demonstrations and continue training on base plus few-shot pairs.
    pretrain_epochs: int = 16000
    finetune_epochs: int = 400
    pool_size: int = 5
    strategy: str = perception.STRUCTURED

    def __post_init__(self):
        if self.setting not in FEWSHOT_SETTINGS:
            raise ExperimentError(f"unknown few-shot setting {self.setting!r}")
        if any(n < 1 or n > self.pool_size for n in self.schedule):
            raise ExperimentError("few-shot schedule outside 1..pool_size")


@dataclass
class CurvePoint:
    label: str
    demos: int
    mean_error: float
    std_error: float
    success_rate: float
    n: int = 0

    def __post_init__(self):
        if self.std_error < 0:
            raise ExperimentError("std_error must be >= 0")
        if not 0.0 <= self.success_rate <= 1.0:
            raise ExperimentError("success_rate must be in [0, 1]")


def base_tasks():
    """(class_id, task) for every base object."""
    out = []
    for name, direction in world.BASE_TASK_MAP.items():
        cid = world.CLASS_NAMES.index(name)
        out.append((cid, world.make_push_task(cid, direction)))
    return out


def fewshot_task(setting):
    cid = world.CLASS_NAMES.index(FEWSHOT_CLASS)
    if setting == "seen":
        return cid, world.make_push_task(cid, "south")
    if setting == "near":
        return cid, world.make_push_task(cid, "south-east")
    if setting == "far":
        return cid, world.make_circle_task(cid)
    raise ExperimentError(f"unknown few-shot setting {setting!r}")


def generate_demos(task, count, rng, max_tries=None):
    """Scripted demonstrations for one task; resamples failed scenes."""
    max_tries = max_tries or 30 * count
    demos = []
    for _ in range(max_tries):
        if len(demos) == count:
            return demos
        scene = world.sample_scene(rng, [task.target_class])
        try:
            demos.append(world.scripted_demo(scene, task, rng))
        except (world.DemoError, world.IKError):
            continue
    raise ExperimentError(f"could not script {count} demos for {task.name}")


def generate_base_pool(seed, per_class=10):
    """Demo pool keyed by class id for all base objects."""
    rng = np.random.default_rng(seed)
    return {cid: generate_demos(task, per_class, rng) for cid, task in base_tasks()}


def _context(strategy, detector):
    if strategy == perception.STRUCTURED and detector is None:
        raise ExperimentError("structured strategy needs a trained detector")
    return perception.PerceptionContext(
        strategy=strategy, n_classes=len(world.CLASS_NAMES), detector=detector
    )


def _train(demos, strategy, detector, epochs, seed, init_model=None):
    ctx = _context(strategy, detector)
    pairs = cae.build_pairs(demos, ctx, window=cae.TrainConfig.window)
    cfg = cae.TrainConfig(epochs=epochs, seed=seed, n_demos=len(demos))
    return cae.train_cae(pairs, cfg, model=init_model)


def evaluate_model(model, task, detector, eval_seed, n_scenes):
    """Final state error and success over freshly sampled scenes."""
    errors, successes = [], []
    for k in range(n_scenes):
        rng = np.random.default_rng((eval_seed, task.target_class, k))
        scene = world.sample_task_scene(rng, task)
        plan = teleop.plan_for_task(scene, task)
        ctx = teleop.make_episode_context(model.strategy, scene, task,
                                          detector=detector)
        result = teleop.run_sim_teleop(scene, task, model, ctx, plan)
        errors.append(result.final_state_error)
        successes.append(bool(result.success))
    return errors, successes


def _aggregate(label, demos, errors, successes):
    errors = np.asarray(errors, dtype=np.float64)
    stderr = float(errors.std(ddof=1) / math.sqrt(len(errors))) if len(errors) > 1 else 0.0
    return CurvePoint(
        label=label,
        demos=demos,
        mean_error=float(errors.mean()),
        std_error=stderr,
        success_rate=float(np.mean(successes)),
        n=len(errors),
    )


def _subset(pool, n, rng):
    idx = rng.choice(len(pool), size=n, replace=False)
    return [pool[i] for i in idx]


def run_sample_efficiency(cfg, pool=None, detector=None, log=None):
    """Strategy-by-schedule sweep over the base tasks.

    Each cell trains a fresh CAE on a random n-demo subset per object and
    evaluates on fresh validation scenes for every base task. Training
    subsets come from a dedicated RNG stream so evaluation seeding can
    never change which demonstrations were used.
    """
    pool = pool or generate_base_pool(cfg.seed, cfg.pool_size)
    points = []
    for strategy, n in cfg.grid():
        s_idx = perception.STRATEGIES.index(strategy)
        epochs = cfg.epochs
        if strategy in (perception.END_TO_END, perception.LOCALIZATION_ONLY):
            epochs = cfg.cnn_epochs
        run_errors, run_successes = [], []
        for run in range(cfg.runs):
            train_rng = np.random.default_rng((cfg.seed, 1, s_idx, n, run))
            demos = []
            for cid, _ in base_tasks():
                demos.extend(_subset(pool[cid], n, train_rng))
            model = _train(demos, strategy, detector, epochs,
                           seed=int(train_rng.integers(2**31)))
            errors, successes = [], []
            for cid, task in base_tasks():
                e, s = evaluate_model(model, task, detector,
                                      (cfg.seed, 2, run), cfg.val_scenes)
                errors.extend(e)
                successes.extend(s)
            run_errors.append(float(np.mean(errors)))
            run_successes.append(float(np.mean(successes)))
            if log:
                log(f"{strategy} n={n} run={run}: "
                    f"err={run_errors[-1]:.3f} succ={run_successes[-1]:.2f}")
        points.append(_aggregate(strategy, n, run_errors, run_successes))
    return points


def run_fewshot(cfg, base_pool=None, fewshot_pool=None, detector=None,
                base_model=None, log=None):
    """Transfer (pretrained base model fine-tuned with k few-shot demos)
    versus scratch (fresh model on the k few-shot demos only).

    The base model is pretrained once on every base-task demonstration and
    shared across runs; per-run randomness comes from the few-shot subset
    and the fine-tuning stream.
    """
    base_pool = base_pool or generate_base_pool(cfg.seed, 10)
    cid, task = fewshot_task(cfg.setting)
    if fewshot_pool is None:
        rng = np.random.default_rng((cfg.seed, 3))
        fewshot_pool = generate_demos(task, cfg.pool_size, rng)
    base_demos = [d for demos in base_pool.values() for d in demos]
    if base_model is None:
        if log:
            log(f"pretraining base model on {len(base_demos)} demos")
        base_model = _train(base_demos, cfg.strategy, detector,
                            cfg.pretrain_epochs, seed=cfg.seed)
    points = []
    for variant in ("transfer", "scratch"):
        for n in cfg.schedule:
            run_errors, run_successes = [], []
            for run in range(cfg.runs):
                train_rng = np.random.default_rng((cfg.seed, 4, variant == "transfer",
                                                   n, run))
                demos = _subset(fewshot_pool, n, train_rng)
                seed = int(train_rng.integers(2**31))
                if variant == "transfer":
                    model = _train(base_demos + demos, cfg.strategy, detector,
                                   cfg.finetune_epochs, seed=seed,
                                   init_model=cae.clone_model(base_model))
                else:
                    model = _train(demos, cfg.strategy, detector, cfg.epochs,
                                   seed=seed)
                e, s = evaluate_model(model, task, detector,
                                      (cfg.seed, 5, run), cfg.val_scenes)
                run_errors.append(float(np.mean(e)))
                run_successes.append(float(np.mean(s)))
                if log:
                    log(f"{cfg.setting} {variant} n={n} run={run}: "
                        f"err={run_errors[-1]:.3f} succ={run_successes[-1]:.2f}")
            points.append(_aggregate(variant, n, run_errors, run_successes))
    return points


def export_report(points, path_base):
    """Write <base>.csv and <base>.svg for a list of curve points."""
    if not points:
        raise ExperimentError("no curve points to export")
    csv_path = f"{path_base}.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "demos", "mean_error", "std_error",
                         "success_rate", "n"])
        for p in points:
            writer.writerow([p.label, p.demos, f"{p.mean_error:.6f}",
                             f"{p.std_error:.6f}", f"{p.success_rate:.4f}", p.n])
    svg_path = f"{path_base}.svg"
    _plot(points, svg_path)
    return csv_path, svg_path


def _plot(points, svg_path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels = sorted({p.label for p in points})
    fig, ax = plt.subplots(figsize=(6, 4))
    for label in labels:
        series = sorted((p for p in points if p.label == label),
                        key=lambda p: p.demos)
        xs = [p.demos for p in series]
        ys = [p.mean_error for p in series]
        es = [p.std_error for p in series]
        line, = ax.plot(xs, ys, marker="o", label=label)
        lo = [y - e for y, e in zip(ys, es)]
        hi = [y + e for y, e in zip(ys, es)]
        ax.fill_between(xs, lo, hi, alpha=0.2, color=line.get_color())
    ax.set_xlabel("demonstrations per object")
    ax.set_ylabel("mean final state error")
    ax.legend()
    fig.tight_layout()
    fig.savefig(svg_path)
    plt.close(fig)


def recompute_aggregates(rows):
    """Independent mean/stderr pass used by the export self-check."""
    errors = np.asarray(rows, dtype=np.float64)
    mean = float(errors.mean())
    stderr = float(errors.std(ddof=1) / math.sqrt(len(errors))) if len(errors) > 1 else 0.0
    return mean, stderr
