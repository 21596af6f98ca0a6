"""Experiment configs, seed isolation, aggregation, and report export."""

import csv
import math

import numpy as np
import pytest

from latentarm import experiments, perception, world


def test_sweep_config_validation():
    with pytest.raises(experiments.ExperimentError):
        experiments.SweepConfig(schedule=(3, 2))
    with pytest.raises(experiments.ExperimentError):
        experiments.SweepConfig(schedule=(1, 20), pool_size=10)
    with pytest.raises(experiments.ExperimentError):
        experiments.SweepConfig(strategies=("bogus",))
    with pytest.raises(experiments.ExperimentError):
        experiments.SweepConfig(runs=0)
    with pytest.raises(experiments.ExperimentError):
        experiments.SweepConfig(cells=(("bogus", 2),))
    cfg = experiments.SweepConfig(cells=((perception.STRUCTURED, 2),))
    assert cfg.grid() == [(perception.STRUCTURED, 2)]
    full = experiments.SweepConfig(strategies=(perception.ORACLE,),
                                   schedule=(1, 2))
    assert full.grid() == [(perception.ORACLE, 1), (perception.ORACLE, 2)]


def test_fewshot_config_validation():
    with pytest.raises(experiments.ExperimentError):
        experiments.FewShotConfig(setting="sideways")
    with pytest.raises(experiments.ExperimentError):
        experiments.FewShotConfig(schedule=(0,))
    for setting in experiments.FEWSHOT_SETTINGS:
        cid, task = experiments.fewshot_task(setting)
        assert world.CLASS_NAMES[cid] == "cereal"
    assert experiments.fewshot_task("far")[1].kind == "circle"


def test_curve_point_validation():
    with pytest.raises(experiments.ExperimentError):
        experiments.CurvePoint("x", 1, 0.5, -0.1, 0.5)
    with pytest.raises(experiments.ExperimentError):
        experiments.CurvePoint("x", 1, 0.5, 0.1, 1.5)


def test_base_tasks_cover_all_base_objects():
    tasks = experiments.base_tasks()
    assert len(tasks) == 4
    names = {world.CLASS_NAMES[cid] for cid, _ in tasks}
    assert names == set(world.BASE_TASK_MAP)
    for cid, task in tasks:
        assert task.kind == "push"
        assert task.target_class == cid


def test_subset_sampling_without_replacement():
    rng = np.random.default_rng(0)
    pool = list(range(10))
    for _ in range(20):
        sub = experiments._subset(pool, 4, rng)
        assert len(set(sub)) == 4
        assert set(sub) <= set(pool)


def test_subsets_are_seed_isolated():
    pool = list(range(10))
    a = experiments._subset(pool, 5, np.random.default_rng((1, 2, 3)))
    b = experiments._subset(pool, 5, np.random.default_rng((1, 2, 3)))
    assert a == b


def test_aggregate_recomputable_to_tolerance():
    rng = np.random.default_rng(1)
    errors = rng.uniform(0.0, 2.0, size=10).tolist()
    successes = rng.integers(0, 2, size=10).tolist()
    point = experiments._aggregate("label", 3, errors, successes)
    mean, stderr = experiments.recompute_aggregates(errors)
    assert abs(point.mean_error - mean) < 1e-12
    assert abs(point.std_error - stderr) < 1e-12
    assert abs(point.success_rate - np.mean(successes)) < 1e-12
    # Cross-check stderr against the direct formula.
    n = len(errors)
    direct = math.sqrt(sum((e - mean) ** 2 for e in errors) / (n - 1)) / math.sqrt(n)
    assert abs(point.std_error - direct) < 1e-12


def test_export_report(tmp_path):
    points = [
        experiments.CurvePoint("structured", 2, 0.5, 0.05, 0.9, 10),
        experiments.CurvePoint("structured", 4, 0.3, 0.04, 0.95, 10),
        experiments.CurvePoint("end_to_end", 2, 1.5, 0.2, 0.1, 10),
    ]
    base = str(tmp_path / "report")
    csv_path, svg_path = experiments.export_report(points, base)
    with open(csv_path) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3
    assert rows[0]["label"] == "structured"
    assert float(rows[0]["mean_error"]) == 0.5
    assert int(rows[0]["n"]) == 10
    svg = open(svg_path).read()
    assert svg.lstrip().startswith("<?xml")
    assert "structured" in svg and "end_to_end" in svg
    with pytest.raises(experiments.ExperimentError):
        experiments.export_report([], base)


def test_structured_requires_detector():
    with pytest.raises(experiments.ExperimentError):
        experiments._context(perception.STRUCTURED, None)


def test_evaluate_model_seed_isolation(small_model, push_task):
    e1, s1 = experiments.evaluate_model(small_model, push_task, None, (0, 2, 0), 3)
    e2, s2 = experiments.evaluate_model(small_model, push_task, None, (0, 2, 0), 3)
    assert e1 == e2 and s1 == s2
    e3, _ = experiments.evaluate_model(small_model, push_task, None, (0, 2, 1), 3)
    assert e1 != e3
