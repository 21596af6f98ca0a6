"""Command line interface.

Subcommands: gen-demos, train-detector, train-cae, eval, experiment, serve.
"""

import argparse
import csv
import json
import sys

import numpy as np

from . import cae, demo_io, experiments, nn, perception, service, teleop, world


def _task_from_name(name):
    tasks = service.task_catalog()
    if name not in tasks:
        raise SystemExit(f"unknown task {name!r}; choose from {sorted(tasks)}")
    return tasks[name]


def _load_detector(path):
    return perception.GridDetector.load(path) if path else None


def cmd_gen_demos(args):
    rng = np.random.default_rng(args.seed)
    demos = []
    if args.task:
        task = _task_from_name(args.task)
        demos = experiments.generate_demos(task, args.count, rng)
    else:
        for _, task in experiments.base_tasks():
            demos.extend(experiments.generate_demos(task, args.count, rng))
    demo_io.save_demos(demos, args.out)
    print(f"wrote {len(demos)} demonstrations to {args.out}")


def cmd_train_detector(args):
    rng = np.random.default_rng(args.seed)
    dataset = perception.make_detector_dataset(args.renders, rng)
    val = perception.make_detector_dataset(args.val_renders, rng)
    config = perception.DetectorConfig(epochs=args.epochs, seed=args.seed)
    detector = perception.train_detector(dataset, config, val_dataset=val)
    detector.save(args.out)
    m = detector.metrics
    print(f"wrote detector to {args.out}: "
          f"class_accuracy={m['class_accuracy']:.3f} "
          f"mean_position_error={m['mean_position_error']:.4f}")


def cmd_train_cae(args):
    demos = demo_io.load_demos(args.demos)
    detector = _load_detector(args.detector)
    if args.strategy == perception.STRUCTURED and detector is None:
        raise SystemExit("--detector is required for the structured strategy")
    ctx = perception.PerceptionContext(
        strategy=args.strategy, n_classes=len(world.CLASS_NAMES), detector=detector
    )
    cfg = cae.TrainConfig(epochs=args.epochs, seed=args.seed, window=args.window,
                          n_demos=len(demos))
    pairs = cae.build_pairs(demos, ctx, window=cfg.window)
    model = cae.train_cae(pairs, cfg)
    cae.save_model(model, args.out)
    print(f"wrote {args.strategy} model to {args.out}: "
          f"{len(demos)} demos, {len(pairs)} pairs, final_loss={model.final_loss:.5f}")


def cmd_eval(args):
    model = cae.load_model(args.model, expect_strategy=args.strategy)
    detector = _load_detector(args.detector)
    task = _task_from_name(args.task)
    errors, successes, rows = [], [], []
    for k in range(args.scenes):
        rng = np.random.default_rng((args.seed, task.target_class, k))
        scene = world.sample_task_scene(rng, task)
        plan = teleop.plan_for_task(scene, task)
        ctx = teleop.make_episode_context(args.strategy, scene, task, detector=detector)
        result = teleop.run_sim_teleop(scene, task, model, ctx, plan)
        errors.append(result.final_state_error)
        successes.append(result.success)
        rows.append([k, args.task, args.strategy, model.config.n_demos,
                     int(result.success), f"{result.final_state_error:.6f}",
                     result.steps])
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scene_id", "task", "strategy", "demos_used",
                         "success", "final_state_error", "steps"])
        writer.writerows(rows)
    print(f"{args.task} [{args.strategy}]: "
          f"success {sum(map(int, successes))}/{args.scenes}, "
          f"mean final_state_error {np.mean(errors):.4f}; wrote {args.out}")


def _read_config(path, cls, **overrides):
    data = {}
    if path:
        with open(path) as fh:
            data = json.load(fh)
    for key in ("strategies", "schedule", "cells"):
        if key in data:
            data[key] = tuple(data[key])
    data.update(overrides)
    return cls(**data)


def cmd_experiment(args):
    detector = _load_detector(args.detector)
    log = print if args.verbose else None
    if args.kind == "sample-efficiency":
        cfg = _read_config(args.config, experiments.SweepConfig)
        points = experiments.run_sample_efficiency(cfg, detector=detector, log=log)
    else:
        cfg = _read_config(args.config, experiments.FewShotConfig,
                           **({"setting": args.setting} if args.setting else {}))
        points = experiments.run_fewshot(cfg, detector=detector, log=log)
    csv_path, svg_path = experiments.export_report(points, args.out)
    print(f"wrote {csv_path} and {svg_path}")
    for p in points:
        print(f"  {p.label:>18} n={p.demos:2d}: "
              f"err={p.mean_error:.4f}±{p.std_error:.4f} succ={p.success_rate:.2f}")


def cmd_serve(args):
    service.serve(args.models, port=args.port, tick_ms=args.tick_ms,
                  log_path=args.log, host=args.host)


def build_parser():
    parser = argparse.ArgumentParser(prog="latentarm")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-demos", help="record scripted demonstrations")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=10, help="demos per task")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--task", default=None,
                   help="single task key (default: all base tasks)")
    p.set_defaults(func=cmd_gen_demos)

    p = sub.add_parser("train-detector", help="train the grid detector")
    p.add_argument("--out", required=True)
    p.add_argument("--renders", type=int, default=1000)
    p.add_argument("--val-renders", type=int, default=200)
    p.add_argument("--epochs", type=int, default=perception.DetectorConfig.epochs)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train_detector)

    p = sub.add_parser("train-cae", help="train a latent-action model")
    p.add_argument("--demos", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--strategy", default=perception.STRUCTURED,
                   choices=perception.STRATEGIES)
    p.add_argument("--detector", default=None)
    p.add_argument("--epochs", type=int, default=16000)
    p.add_argument("--window", type=int, default=cae.TrainConfig.window)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train_cae)

    p = sub.add_parser("eval", help="evaluate a model on fresh scenes")
    p.add_argument("--model", required=True)
    p.add_argument("--strategy", required=True, choices=perception.STRATEGIES)
    p.add_argument("--task", required=True)
    p.add_argument("--scenes", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="results.csv")
    p.add_argument("--detector", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("experiment", help="run a result-reproduction sweep")
    p.add_argument("kind", choices=["sample-efficiency", "fewshot"])
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--setting", default=None, choices=experiments.FEWSHOT_SETTINGS)
    p.add_argument("--detector", default=None)
    p.add_argument("--out", default="experiment", help="output path base")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("serve", help="run the live teleoperation service")
    p.add_argument("--models", required=True)
    p.add_argument("--port", type=int, default=8710)
    p.add_argument("--tick-ms", type=int, default=service.TICK_MS)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--log", default=None, help="trial outcome log path")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (world.IKError, world.DemoError, world.SamplingError,
            experiments.ExperimentError, service.ServiceError,
            perception.PerceptionError, cae.TrainingError,
            nn.CheckpointError, demo_io.FormatError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
