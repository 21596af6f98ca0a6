"""Demonstration and detector-dataset file format round-trips."""

import numpy as np
import pytest

from latentarm import demo_io, perception, world


def test_demo_roundtrip(tmp_path, demo_set):
    path = tmp_path / "demos.jsonl"
    demo_io.save_demos(demo_set, path)
    loaded = demo_io.load_demos(path)
    assert len(loaded) == len(demo_set)
    for a, b in zip(demo_set, loaded):
        assert a.task == b.task
        assert len(a.frames) == len(b.frames)
        for (qa, ia), (qb, ib) in zip(a.frames, b.frames):
            np.testing.assert_array_equal(qa, qb)
            # Frames are stored as 8-bit intensities.
            np.testing.assert_allclose(ia, ib, atol=0.5 / 255.0)
        np.testing.assert_array_equal(a.scene.q, b.scene.q)
        for oa, ob in zip(a.scene.objects, b.scene.objects):
            assert oa.class_id == ob.class_id
            np.testing.assert_array_equal(oa.pos, ob.pos)
            assert oa.radius == ob.radius


def test_loaded_demos_replay_identically(tmp_path, demo_set, push_task):
    path = tmp_path / "demos.jsonl"
    demo_io.save_demos(demo_set, path)
    loaded = demo_io.load_demos(path)
    for a, b in zip(demo_set, loaded):
        ha = world.replay_demo(a)
        hb = world.replay_demo(b)
        np.testing.assert_array_equal(ha[-1].q, hb[-1].q)
        np.testing.assert_array_equal(ha[-1].objects[0].pos, hb[-1].objects[0].pos)


def test_detector_dataset_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    samples = perception.make_detector_dataset(5, rng)
    path = tmp_path / "dataset.jsonl"
    demo_io.save_detector_dataset(samples, path)
    loaded = demo_io.load_detector_dataset(path)
    assert len(loaded) == 5
    for (ia, la), (ib, lb) in zip(samples, loaded):
        np.testing.assert_allclose(ia, ib, atol=0.5 / 255.0)
        assert [tuple(x) for x in la] == [tuple(x) for x in lb]


def test_corrupt_blob_detected(tmp_path, demo_set):
    path = tmp_path / "demos.jsonl"
    demo_io.save_demos(demo_set, path)
    blob = demo_io.blob_path(path)
    data = blob.read_bytes() if hasattr(blob, "read_bytes") else open(blob, "rb").read()
    with open(blob, "wb") as fh:
        fh.write(b"XXXX" + data[4:])
    with pytest.raises(demo_io.FormatError):
        demo_io.load_demos(path)


def test_truncated_jsonl_detected(tmp_path, demo_set):
    path = tmp_path / "demos.jsonl"
    demo_io.save_demos(demo_set, path)
    text = path.read_text().splitlines()[0]
    path.write_text(text[: len(text) // 2] + "\n")
    with pytest.raises((demo_io.FormatError, ValueError)):
        demo_io.load_demos(path)
