"""Shared fixtures: small demo sets and quickly trained models."""

import numpy as np
import pytest

from latentarm import cae, perception, world


@pytest.fixture(scope="session")
def push_task():
    return world.make_push_task(0, "south")


@pytest.fixture(scope="session")
def demo_set(push_task):
    """Three scripted push demonstrations (kept small for speed)."""
    rng = np.random.default_rng(7)
    demos = []
    while len(demos) < 3:
        scene = world.sample_scene(rng, [0])
        try:
            demos.append(world.scripted_demo(scene, push_task, rng))
        except (world.DemoError, world.IKError):
            continue
    return demos


@pytest.fixture(scope="session")
def oracle_pairs(demo_set):
    ctx = perception.PerceptionContext(
        strategy=perception.ORACLE, n_classes=len(world.CLASS_NAMES)
    )
    return cae.build_pairs(demo_set, ctx, window=1)


@pytest.fixture(scope="session")
def small_model(oracle_pairs):
    """A briefly trained CAE; useful where any consistent model will do."""
    cfg = cae.TrainConfig(epochs=40, seed=3, hidden=32, n_demos=3)
    return cae.train_cae(oracle_pairs, cfg)
