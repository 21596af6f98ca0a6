"""Conditional-autoencoder objective, gradients, and checkpoints."""

import numpy as np
import pytest

from latentarm import cae, nn, perception, world

FD_EPS = 1e-6


def fd_check(model, pairs, reg_z=None, reg_weight=0.0, curv_weight=0.0,
             n_coords=60, tol=1e-4, rng=None):
    """Compare analytic full-objective gradients with central differences."""
    rng = rng or np.random.default_rng(0)
    loss, grads = cae.loss_and_flat_grads(
        model, pairs, reg_z=reg_z, reg_weight=reg_weight, curv_weight=curv_weight)
    flat = cae.flat_params(model)
    idx = rng.choice(flat.size, size=min(n_coords, flat.size), replace=False)
    for i in idx:
        old = flat[i]
        flat[i] = old + FD_EPS
        cae.set_flat_params(model, flat)
        hi, _ = cae.loss_and_flat_grads(
            model, pairs, reg_z=reg_z, reg_weight=reg_weight,
            curv_weight=curv_weight)
        flat[i] = old - FD_EPS
        cae.set_flat_params(model, flat)
        lo, _ = cae.loss_and_flat_grads(
            model, pairs, reg_z=reg_z, reg_weight=reg_weight,
            curv_weight=curv_weight)
        flat[i] = old
        cae.set_flat_params(model, flat)
        num = (hi - lo) / (2 * FD_EPS)
        scale = max(abs(num), 1e-3)
        assert abs(grads[i] - num) / scale < tol, f"coord {i}: {grads[i]} vs {num}"


def test_build_pairs_counts(demo_set):
    ctx = perception.PerceptionContext(strategy=perception.ORACLE,
                                       n_classes=len(world.CLASS_NAMES))
    pairs = cae.build_pairs(demo_set, ctx, window=1)
    expected = sum(len(d.frames) - 1 for d in demo_set)
    assert len(pairs) == expected
    # Window-1 actions are exactly the recorded joint differences.
    p = pairs[0]
    demo = demo_set[p.demo_id]
    np.testing.assert_allclose(
        p.a, world.angdiff(demo.frames[p.j][0], demo.frames[p.i][0]), atol=1e-12)


def test_build_pairs_window_averages(demo_set):
    ctx = perception.PerceptionContext(strategy=perception.ORACLE,
                                       n_classes=len(world.CLASS_NAMES))
    pairs = cae.build_pairs(demo_set, ctx, window=3)
    assert len(pairs) > len(cae.build_pairs(demo_set, ctx, window=1))
    with pytest.raises(cae.TrainingError):
        cae.build_pairs(demo_set, ctx, window=0)
    with pytest.raises(cae.TrainingError):
        cae.build_pairs([], ctx, window=1)


def test_objective_gradients_reconstruction(oracle_pairs):
    rng = np.random.default_rng(1)
    cfg = cae.TrainConfig(epochs=1, seed=1, hidden=16)
    model = cae.train_cae(oracle_pairs[:8], cfg)
    fd_check(model, oracle_pairs[:8], rng=rng)


def test_objective_gradients_with_penalties(oracle_pairs):
    rng = np.random.default_rng(2)
    cfg = cae.TrainConfig(epochs=1, seed=2, hidden=16)
    model = cae.train_cae(oracle_pairs[:6], cfg)
    reg_z = rng.uniform(-1, 1, size=(6, 1))
    fd_check(model, oracle_pairs[:6], reg_z=reg_z, reg_weight=0.05,
             curv_weight=1.0, rng=rng)


def test_encode_decode_roundtrip_shape(small_model, oracle_pairs):
    p = oracle_pairs[0]
    z = cae.encode(small_model, p.s, p.a)
    assert -1.0 <= z <= 1.0
    a = cae.decode(small_model, z, p.s)
    assert a.shape == (small_model.m,)
    assert np.max(np.abs(a)) <= world.A_MAX + 1e-12
    many = cae.decode_many(small_model, np.linspace(-1, 1, 11), p.s)
    assert many.shape == (11, small_model.m)
    np.testing.assert_allclose(many[5], cae.decode(small_model, 0.0, p.s))


def test_training_reduces_loss(oracle_pairs):
    cfg = cae.TrainConfig(epochs=60, seed=5, hidden=32)
    model = cae.train_cae(oracle_pairs, cfg)
    assert model.final_loss < model.loss_history[0]


def test_finetune_continues_from_model(oracle_pairs):
    cfg = cae.TrainConfig(epochs=30, seed=6, hidden=16)
    base = cae.train_cae(oracle_pairs, cfg)
    before = cae.flat_params(base).copy()
    tuned = cae.train_cae(oracle_pairs, cae.TrainConfig(epochs=5, seed=7, hidden=16),
                          model=cae.clone_model(base))
    np.testing.assert_array_equal(cae.flat_params(base), before)  # base untouched
    assert not np.array_equal(cae.flat_params(tuned), before)


def test_checkpoint_roundtrip_exact(small_model, oracle_pairs, tmp_path):
    path = tmp_path / "model.txt"
    cae.save_model(small_model, path)
    loaded = cae.load_model(path)
    np.testing.assert_array_equal(cae.flat_params(loaded),
                                  cae.flat_params(small_model))
    assert loaded.strategy == small_model.strategy
    assert loaded.config == small_model.config
    p = oracle_pairs[0]
    np.testing.assert_array_equal(cae.decode(loaded, 0.3, p.s),
                                  cae.decode(small_model, 0.3, p.s))


def test_checkpoint_strategy_mismatch(small_model, tmp_path):
    path = tmp_path / "model.txt"
    cae.save_model(small_model, path)
    with pytest.raises(nn.CheckpointError):
        cae.load_model(path, expect_strategy=perception.END_TO_END)
    cae.load_model(path, expect_strategy=perception.ORACLE)


def test_checkpoint_corruption(tmp_path, small_model):
    path = tmp_path / "model.txt"
    cae.save_model(small_model, path)
    text = path.read_text()
    path.write_text(text[: len(text) // 3])
    with pytest.raises(nn.CheckpointError):
        cae.load_model(path)


def test_cnn_strategy_training_smoke(demo_set):
    ctx = perception.PerceptionContext(strategy=perception.END_TO_END,
                                       n_classes=len(world.CLASS_NAMES))
    pairs = cae.build_pairs(demo_set[:1], ctx, window=1)
    cfg = cae.TrainConfig(epochs=2, seed=8, hidden=16)
    model = cae.train_cae(pairs, cfg)
    assert model.cnn is not None
    z = cae.encode(model, pairs[0].s, pairs[0].a)
    a = cae.decode(model, z, pairs[0].s)
    assert a.shape == (model.m,)
