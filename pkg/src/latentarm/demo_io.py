"""On-disk formats for demonstrations and detector datasets.

A dataset is a pair of files: a JSONL index (one self-describing record per
line) and a binary sidecar blob holding 48x48x3 8-bit frames. The blob
starts with a header that maps frame index to byte offset.
"""

import json
import struct

import numpy as np

from .world import (
    IMG_H,
    IMG_W,
    ArmGeometry,
    Demonstration,
    SceneObject,
    Task,
    WorldState,
)

BLOB_MAGIC = b"LARMBLOB"
FRAME_BYTES = IMG_H * IMG_W * 3


class FormatError(Exception):
    pass


def blob_path(path):
    return str(path) + ".blob"


def write_blob(path, images):
    """Write all frames after a header of per-frame offsets."""
    payload = bytearray()
    offsets = []
    count = len(images)
    header_size = len(BLOB_MAGIC) + 4 + 8 * count
    pos = header_size
    for image in images:
        data = np.clip(np.round(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
        if data.shape != (IMG_H, IMG_W, 3):
            raise FormatError(f"frame shape {data.shape} != ({IMG_H},{IMG_W},3)")
        offsets.append(pos)
        payload += data.tobytes()
        pos += FRAME_BYTES
    with open(path, "wb") as fh:
        fh.write(BLOB_MAGIC)
        fh.write(struct.pack("<I", count))
        for off in offsets:
            fh.write(struct.pack("<Q", off))
        fh.write(payload)


class BlobReader:
    def __init__(self, path):
        with open(path, "rb") as fh:
            self._data = fh.read()
        if self._data[: len(BLOB_MAGIC)] != BLOB_MAGIC:
            raise FormatError(f"{path}: bad blob magic")
        (self.count,) = struct.unpack_from("<I", self._data, len(BLOB_MAGIC))
        base = len(BLOB_MAGIC) + 4
        self._offsets = struct.unpack_from(f"<{self.count}Q", self._data, base)

    def frame(self, idx):
        if not 0 <= idx < self.count:
            raise FormatError(f"frame index {idx} out of range ({self.count} frames)")
        off = self._offsets[idx]
        raw = np.frombuffer(self._data, dtype=np.uint8, count=FRAME_BYTES, offset=off)
        return raw.reshape(IMG_H, IMG_W, 3).astype(np.float64) / 255.0


def task_to_dict(task):
    return {
        "target_class": task.target_class,
        "kind": task.kind,
        "direction": task.direction,
        "distance": task.distance,
        "min_angle": task.min_angle,
        "band": task.band,
        "name": task.name,
    }


def task_from_dict(d):
    return Task(**d)


def scene_to_dict(world):
    return {
        "q": list(world.q),
        "objects": [
            {"class_id": o.class_id, "pos": list(o.pos), "radius": o.radius}
            for o in world.objects
        ],
        "links": list(world.geometry.links),
        "base": list(world.geometry.base),
    }


def scene_from_dict(d):
    geom = ArmGeometry(tuple(d["links"]), tuple(d["base"]))
    objects = [
        SceneObject(o["class_id"], np.array(o["pos"], dtype=np.float64), o["radius"])
        for o in d["objects"]
    ]
    return WorldState(np.array(d["q"], dtype=np.float64), objects, geom)


def save_demos(demos, path):
    """Write demonstrations to `path` (JSONL) + `path`.blob (frames)."""
    images = []
    with open(path, "w") as fh:
        for demo in demos:
            frames = []
            for q, image in demo.frames:
                frames.append({"q": list(q), "image_ref": len(images)})
                images.append(image)
            record = {
                "task": task_to_dict(demo.task),
                "scene": scene_to_dict(demo.scene),
                "frames": frames,
            }
            fh.write(json.dumps(record) + "\n")
    write_blob(blob_path(path), images)


def load_demos(path):
    reader = BlobReader(blob_path(path))
    demos = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            frames = [
                (np.array(f["q"], dtype=np.float64), reader.frame(f["image_ref"]))
                for f in rec["frames"]
            ]
            if len(frames) < 2:
                raise FormatError("demonstration with fewer than 2 frames")
            demos.append(
                Demonstration(frames, task_from_dict(rec["task"]), scene_from_dict(rec["scene"]))
            )
    return demos


def save_detector_dataset(samples, path):
    """samples: list of (image, [(class_id, x, y), ...])."""
    images = []
    with open(path, "w") as fh:
        for image, labels in samples:
            rec = {
                "image_ref": len(images),
                "objects": [
                    {"class_id": c, "x": x, "y": y} for (c, x, y) in labels
                ],
            }
            images.append(image)
            fh.write(json.dumps(rec) + "\n")
    write_blob(blob_path(path), images)


def load_detector_dataset(path):
    reader = BlobReader(blob_path(path))
    samples = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            labels = [(o["class_id"], o["x"], o["y"]) for o in rec["objects"]]
            samples.append((reader.frame(rec["image_ref"]), labels))
    return samples
