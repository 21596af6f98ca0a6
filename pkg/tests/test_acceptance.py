"""Acceptance suite: orderings, oracle equivalence, and invariants.

These tests exercise the full pipeline at its published budgets and are
slower than the unit suite. Each criterion is one test; shared expensive
artifacts (demo pools, the detector, the base competence model) are built
once per session.
"""

import json
import time

import numpy as np
import pytest

from latentarm import cae, experiments, nn, perception, service, teleop, world

NC = len(world.CLASS_NAMES)


# -- shared expensive artifacts ---------------------------------------------

@pytest.fixture(scope="session")
def detector():
    """Grid detector trained per the 1000-random-configurations protocol."""
    rng = np.random.default_rng(100)
    train = perception.make_detector_dataset(1000, rng)
    val = perception.make_detector_dataset(200, rng)
    t0 = time.monotonic()
    det = perception.train_detector(train, perception.DetectorConfig(seed=0),
                                    val_dataset=val)
    det.metrics["train_seconds"] = time.monotonic() - t0
    return det


@pytest.fixture(scope="session")
def base_pool():
    """10 scripted demonstrations per base object."""
    return experiments.generate_base_pool(seed=200, per_class=10)


@pytest.fixture(scope="session")
def competence_model(base_pool, detector):
    """Structured model trained on 10 demos/object over all base objects."""
    demos = [d for pool in base_pool.values() for d in pool]
    ctx = perception.PerceptionContext(
        strategy=perception.STRUCTURED, n_classes=NC, detector=detector)
    pairs = cae.build_pairs(demos, ctx, window=1)
    cfg = cae.TrainConfig(epochs=16000, seed=1, n_demos=len(demos))
    return cae.train_cae(pairs, cfg)


# -- criterion 1: gradient integrity ----------------------------------------

def test_gradient_integrity_100_trials():
    """Every layer and the full CAE objective pass FD checks < 1e-3."""
    rng = np.random.default_rng(0)
    eps = 1e-6
    menus = [
        (["Dense 4 6", "Tanh", "Dense 6 3"], (3, 4)),
        (["Dense 5 8", "ReLU", "Dense 8 2"], (2, 5)),
        (["Conv2D 2 3", "ReLU", "Flatten", "Dense 48 2"], (2, 4, 4, 2)),
        (["Conv2D 1 2", "MaxPool2x2", "Tanh", "Flatten", "Dense 8 2"], (2, 4, 4, 1)),
    ]
    t0 = time.monotonic()
    worst = 0.0
    n_layer_trials = 80
    for trial in range(n_layer_trials):
        desc, shape = menus[trial % len(menus)]
        net = nn.build_network(desc, rng)
        x = rng.normal(size=shape)
        w = rng.normal(size=net.forward(x).shape)
        net.zero_grad()
        net.forward(x)
        net.backward(w)
        analytic = net.flat_grads()
        flat = net.flat_params()
        for i in rng.choice(flat.size, size=6, replace=False):
            old = flat[i]
            flat[i] = old + eps
            net.set_flat_params(flat)
            hi = float(np.sum(net.forward(x) * w))
            flat[i] = old - eps
            net.set_flat_params(flat)
            lo = float(np.sum(net.forward(x) * w))
            flat[i] = old
            net.set_flat_params(flat)
            num = (hi - lo) / (2 * eps)
            rel = abs(analytic[i] - num) / max(abs(num), 1e-3)
            worst = max(worst, rel)
            assert rel < 1e-3

    # Full CAE objective (reconstruction + support + curvature penalties).
    task = world.make_push_task(0, "south")
    demo_rng = np.random.default_rng(1)
    demos = []
    while len(demos) < 1:
        scene = world.sample_scene(demo_rng, [0])
        try:
            demos.append(world.scripted_demo(scene, task, demo_rng))
        except (world.DemoError, world.IKError):
            continue
    ctx = perception.PerceptionContext(strategy=perception.ORACLE, n_classes=NC)
    pairs = cae.build_pairs(demos, ctx, window=1)[:6]
    for trial in range(20):
        model = cae.train_cae(pairs, cae.TrainConfig(epochs=1, seed=trial, hidden=12))
        reg_z = rng.uniform(-1, 1, size=(len(pairs), 1))
        _, grads = cae.loss_and_flat_grads(model, pairs, reg_z=reg_z,
                                           reg_weight=0.05, curv_weight=1.0)
        flat = cae.flat_params(model)
        for i in rng.choice(flat.size, size=4, replace=False):
            old = flat[i]
            flat[i] = old + eps
            cae.set_flat_params(model, flat)
            hi, _ = cae.loss_and_flat_grads(model, pairs, reg_z=reg_z,
                                            reg_weight=0.05, curv_weight=1.0)
            flat[i] = old - eps
            cae.set_flat_params(model, flat)
            lo, _ = cae.loss_and_flat_grads(model, pairs, reg_z=reg_z,
                                            reg_weight=0.05, curv_weight=1.0)
            flat[i] = old
            cae.set_flat_params(model, flat)
            num = (hi - lo) / (2 * eps)
            rel = abs(grads[i] - num) / max(abs(num), 1e-3)
            worst = max(worst, rel)
            assert rel < 1e-3
    elapsed = time.monotonic() - t0
    assert elapsed < 30.0, f"gradient suite took {elapsed:.1f}s"


# -- criterion 2: detector quality ------------------------------------------

def test_detector_quality(detector):
    """>= 95% class accuracy, <= 1-cell position error, trained < 5 min."""
    m = detector.metrics
    cell = 1.0 / perception.GRID
    assert m["class_accuracy"] >= 0.95, m
    assert m["mean_position_error"] <= cell, m
    assert m["train_seconds"] < 300.0, m


# -- criterion 3: sample-efficiency ordering --------------------------------

def test_sample_efficiency_ordering(base_pool, detector):
    """Structured at n=2 beats both CNN strategies at n=10 on mean error."""
    t0 = time.monotonic()
    cfg = experiments.SweepConfig(
        cells=((perception.STRUCTURED, 2),
               (perception.END_TO_END, 10),
               (perception.LOCALIZATION_ONLY, 10)),
        runs=10, val_scenes=10, seed=300)
    points = experiments.run_sample_efficiency(cfg, pool=base_pool,
                                               detector=detector)
    by_cell = {(p.label, p.demos): p for p in points}
    structured = by_cell[(perception.STRUCTURED, 2)]
    e2e = by_cell[(perception.END_TO_END, 10)]
    loc = by_cell[(perception.LOCALIZATION_ONLY, 10)]
    assert structured.mean_error < e2e.mean_error, (structured, e2e)
    assert structured.mean_error < loc.mean_error, (structured, loc)
    elapsed = time.monotonic() - t0
    assert elapsed < 3600.0, f"sweep took {elapsed:.0f}s"


# -- criterion 4: few-shot transfer orderings --------------------------------

@pytest.fixture(scope="session")
def fewshot_points(base_pool, detector):
    t0 = time.monotonic()
    out = {}
    base_model = None
    for setting in experiments.FEWSHOT_SETTINGS:
        cfg = experiments.FewShotConfig(setting=setting, seed=400)
        if base_model is None:
            base_demos = [d for pool in base_pool.values() for d in pool]
            base_model = experiments._train(
                base_demos, cfg.strategy, detector, cfg.pretrain_epochs,
                seed=cfg.seed)
        points = experiments.run_fewshot(cfg, base_pool=base_pool,
                                         detector=detector,
                                         base_model=base_model)
        out[setting] = {(p.label, p.demos): p for p in points}
    out["elapsed"] = time.monotonic() - t0
    return out


def test_fewshot_seen_ordering(fewshot_points):
    pts = fewshot_points["seen"]
    assert pts[("transfer", 1)].mean_error <= pts[("scratch", 1)].mean_error


def test_fewshot_near_ordering(fewshot_points):
    pts = fewshot_points["near"]
    for n in (1, 2, 3, 4, 5):
        assert pts[("transfer", n)].mean_error <= pts[("scratch", n)].mean_error, n


def test_fewshot_far_ordering(fewshot_points):
    pts = fewshot_points["far"]
    assert pts[("scratch", 1)].mean_error < pts[("transfer", 1)].mean_error
    for n in (2, 3, 4, 5):
        assert pts[("transfer", n)].mean_error <= pts[("scratch", n)].mean_error, n


def test_fewshot_runtime(fewshot_points):
    assert fewshot_points["elapsed"] < 2700.0, fewshot_points["elapsed"]


# -- criterion 5: teleop correctness -----------------------------------------

def test_greedy_matches_fine_grid_oracle(competence_model, detector):
    """Coarse-grid argmin within one bin of a 10x-finer grid on 100 probes."""
    rng = np.random.default_rng(500)
    grid = teleop.LatentGrid()
    fine = teleop.LatentGrid(bins=2001)
    coarse_step = 2.0 / (grid.bins - 1)
    task_list = experiments.base_tasks()
    checked = 0
    while checked < 100:
        cid, task = task_list[checked % len(task_list)]
        scene = world.sample_scene(rng, [cid])
        ctx = teleop.make_episode_context(perception.STRUCTURED, scene, task,
                                          detector=detector)
        try:
            s0 = teleop._fuse_initial(competence_model, scene, ctx)
        except perception.PerceptionError:
            continue
        q = scene.q + rng.normal(0.0, 0.05, size=4)
        s = s0.with_joints(q)
        w = q + rng.normal(0.0, 0.2, size=4)
        z_coarse = teleop.greedy_latent(competence_model, s, q, w, grid)
        z_fine = teleop.greedy_latent(competence_model, s, q, w, fine)
        assert abs(z_coarse - z_fine) <= coarse_step + 1e-12
        checked += 1


def test_waypoint_switch_exactly_at_15(competence_model, detector):
    rng = np.random.default_rng(501)
    task = world.make_push_task(0, "south")
    scene = world.sample_scene(rng, [0])
    plan = teleop.plan_for_task(scene, task)
    assert plan.switch_step == 15
    targets = [plan.target(k) for k in range(30)]
    for k in range(15):
        np.testing.assert_array_equal(targets[k], plan.pre)
    for k in range(15, 30):
        np.testing.assert_array_equal(targets[k], plan.post)

    # Instrument the plan to record which target the controller requested.
    seen = []

    class Probe(teleop.WaypointPlan):
        def target(self, step_index):
            w = super().target(step_index)
            seen.append((step_index, w is self.post))
            return w

    probe = Probe(plan.pre, plan.post, plan.switch_step)
    ctx = teleop.make_episode_context(perception.STRUCTURED, scene, task,
                                      detector=detector)
    teleop.run_sim_teleop(scene, task, competence_model, ctx, probe)
    for step_index, used_post in seen:
        assert used_post == (step_index >= 15)
    assert [s for s, _ in seen] == list(range(30))


def test_replay_byte_identical(competence_model, detector):
    rng = np.random.default_rng(502)
    task = world.make_push_task(0, "south")
    scene = world.sample_scene(rng, [0])
    plan = teleop.plan_for_task(scene, task)

    def run_bytes():
        ctx = teleop.make_episode_context(perception.STRUCTURED, scene, task,
                                          detector=detector)
        res = teleop.run_sim_teleop(scene, task, competence_model, ctx, plan)
        blob = b"".join(w.q.tobytes() + w.objects[0].pos.tobytes()
                        for w in res.history)
        return blob + np.float64(res.final_state_error).tobytes()

    assert run_bytes() == run_bytes()


# -- criterion 6: base competence --------------------------------------------

def test_base_competence_structured(competence_model, detector):
    """>= 80% success on fresh validation scenes for every base task."""
    rates = {}
    for cid, task in experiments.base_tasks():
        errors, successes = experiments.evaluate_model(
            competence_model, task, detector, (600, cid), 10)
        rates[task.name] = float(np.mean(successes))
    assert all(r >= 0.8 for r in rates.values()), rates


# -- criterion 7: service loopback -------------------------------------------

def test_service_loopback_exact(competence_model, detector):
    """Wire-driven episodes equal direct-call episodes exactly."""
    from fastapi.testclient import TestClient

    store = service.ModelStore(models={perception.STRUCTURED: competence_model},
                               detector=detector)
    app = service.build_app(store, tick_ms=0)
    client = TestClient(app)
    rng = np.random.default_rng(700)
    for trial in range(3):
        z_stream = rng.uniform(-1, 1, size=service.LIMIT_STEPS).tolist()
        wire_end = None
        with client.websocket_connect("/ws") as ws:
            ws.send_text(json.dumps({"type": "hello"}))
            ws.receive_text()
            for z in z_stream:
                ws.send_text(json.dumps({"type": "axis_input", "value": z}))
                msg = json.loads(ws.receive_text())
                if msg["type"] == "episode_end":
                    wire_end = msg
                    break
            if wire_end is None:
                wire_end = json.loads(ws.receive_text())
            ws.send_text(json.dumps({"type": "quit"}))
        task = service.task_catalog()[service.DEFAULT_TASK]
        scene = service._fixed_scene(task, service.PRACTICE_POS)
        ctx = teleop.make_episode_context(perception.STRUCTURED, scene, task,
                                          detector=detector)
        direct = teleop.run_latent_manual(scene, task, competence_model, ctx,
                                          z_stream)
        assert wire_end["type"] == "episode_end"
        assert wire_end["success"] == direct.success
        assert wire_end["final_state_error"] == direct.final_state_error
        assert wire_end["steps"] == direct.steps
