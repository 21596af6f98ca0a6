"""Fusion layout, detector targets, and detector checkpoints."""

import numpy as np
import pytest

from latentarm import nn, perception, world

NC = len(world.CLASS_NAMES)
M = 4


def test_onehot_and_lengths():
    v = perception.onehot(2, 5)
    assert v.tolist() == [0, 0, 1, 0, 0]
    # Out-of-range classes land in the reserved last slot.
    assert perception.onehot(9, 6).tolist() == [0, 0, 0, 0, 0, 1]
    assert perception.fused_length(perception.END_TO_END, M, NC) == M + 32
    assert perception.fused_length(perception.LOCALIZATION_ONLY, M, NC) == M + 16 + NC + 1
    assert perception.fused_length(perception.STRUCTURED, M, NC) == M + NC + 2
    with pytest.raises(perception.PerceptionError):
        perception.fused_length("bogus", M, NC)


def test_scale_coords_center_and_gain():
    np.testing.assert_allclose(perception.scale_coords(np.array([0.5, 0.5])), [0, 0])
    scaled = perception.scale_coords(np.array([0.6, 0.4]))
    np.testing.assert_allclose(
        scaled, [0.1 * perception.COORD_SCALE, -0.1 * perception.COORD_SCALE])


def test_oracle_detect_noise_free_is_exact():
    rng = np.random.default_rng(0)
    scene = world.sample_scene(rng, [1])
    dets = perception.oracle_detect(scene, perception.NoiseConfig(), rng)
    assert len(dets) == 1
    assert dets[0].class_id == 1
    np.testing.assert_array_equal(dets[0].pos, scene.objects[0].pos)


def test_oracle_detect_misclassification():
    rng = np.random.default_rng(1)
    scene = world.sample_scene(rng, [1])
    noise = perception.NoiseConfig(p_misclass=1.0)
    dets = perception.oracle_detect(scene, noise, rng)
    assert dets[0].class_id != 1


def test_fuse_state_structured_layout():
    rng = np.random.default_rng(2)
    scene = world.sample_scene(rng, [3])
    image = world.render(scene)
    ctx = perception.PerceptionContext(
        strategy=perception.ORACLE, n_classes=NC, goal_class=3, world=scene,
        noise=perception.NoiseConfig(), rng=rng)
    s = perception.fuse_state(perception.ORACLE, scene.q, image, ctx)
    # Layout: joints, class one-hot, scaled coordinates.
    np.testing.assert_array_equal(s.vector[:M], scene.q)
    np.testing.assert_array_equal(s.vector[M:M + NC], perception.onehot(3, NC))
    np.testing.assert_allclose(
        s.vector[M + NC:], perception.scale_coords(scene.objects[0].pos))
    assert s.onehot_mask[M:M + NC].all()
    assert not s.onehot_mask[:M].any()


def test_with_joints_only_touches_joint_slots():
    rng = np.random.default_rng(3)
    scene = world.sample_scene(rng, [0])
    ctx = perception.PerceptionContext(
        strategy=perception.ORACLE, n_classes=NC, goal_class=0, world=scene,
        noise=perception.NoiseConfig(), rng=rng)
    s = perception.fuse_state(perception.ORACLE, scene.q, None, ctx)
    q2 = scene.q + 0.1
    s2 = s.with_joints(q2)
    np.testing.assert_array_equal(s2.vector[:M], q2)
    np.testing.assert_array_equal(s2.vector[M:], s.vector[M:])
    np.testing.assert_array_equal(s.vector[:M], scene.q)  # original untouched


def test_cell_targets_mark_correct_cell():
    labels = [(2, 0.51, 0.53)]
    t_obj, t_cls, t_off = perception._cell_targets(labels, NC, perception.GRID)
    assert t_obj.sum() == 1.0
    gy, gx = np.argwhere(t_obj == 1.0)[0]
    # Cell indices derive from workspace coordinates on a 6x6 grid.
    assert gx == int(0.51 * perception.GRID)
    assert gy == int(0.53 * perception.GRID)
    assert t_cls[gy, gx] == 2
    np.testing.assert_allclose(
        t_off[gy, gx],
        [0.51 * perception.GRID - gx, 0.53 * perception.GRID - gy])
    with pytest.raises(perception.PerceptionError):
        perception._cell_targets([(99, 0.5, 0.5)], NC, perception.GRID)


def test_detector_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(4)
    net = nn.build_network(perception._detector_layers(NC), rng)
    det = perception.GridDetector(net, NC)
    path = tmp_path / "detector.txt"
    det.save(path)
    loaded = perception.GridDetector.load(path)
    assert loaded.n_classes == NC
    np.testing.assert_array_equal(loaded.net.flat_params(), net.flat_params())
    img = world.render(world.sample_scene(rng, [0]))
    np.testing.assert_array_equal(loaded.net.forward(img[None]),
                                  net.forward(img[None]))


def test_detector_checkpoint_corruption(tmp_path):
    path = tmp_path / "detector.txt"
    path.write_text("not a detector\n")
    with pytest.raises((nn.CheckpointError, ValueError)):
        perception.GridDetector.load(path)


def test_make_detector_dataset_labels():
    rng = np.random.default_rng(5)
    samples = perception.make_detector_dataset(8, rng)
    assert len(samples) == 8
    for image, labels in samples:
        assert image.shape == (world.IMG_H, world.IMG_W, 3)
        assert len(labels) == 1
        cid, x, y = labels[0]
        assert 0 <= cid < NC
        assert world.PLACE_X[0] <= x <= world.PLACE_X[1]


def test_selection_prefers_goal_class():
    a = perception.Detection(0, np.array([0.4, 0.5]), 0.9)
    b = perception.Detection(3, np.array([0.6, 0.5]), 0.4)
    assert perception._select_detection([a, b], 3) is b
    # Goal missing: fall back to the highest-confidence detection.
    assert perception._select_detection([a, b], 4) is a
    with pytest.raises(perception.PerceptionError):
        perception._select_detection([], 0)


def test_structured_fusion_requires_detector():
    rng = np.random.default_rng(6)
    scene = world.sample_scene(rng, [0])
    blank = np.zeros((world.IMG_H, world.IMG_W, 3))
    ctx = perception.PerceptionContext(
        strategy=perception.STRUCTURED, n_classes=NC, goal_class=0)
    with pytest.raises(perception.PerceptionError):
        perception.fuse_state(perception.STRUCTURED, scene.q, blank, ctx)
