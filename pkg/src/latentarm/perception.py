"""Visual encoding strategies and the miniature pretrained grid detector.

Three strategies fuse the joint state with a visual representation:
  end_to_end         s_joint + 32-d CNN feature f        (CNN trained with CAE)
  localization_only  s_joint + 16-d CNN feature g + c    (c: ground-truth class)
  structured         s_joint + c + [x, y]                (from frozen detector)
plus an oracle variant of structured fed by ground truth with optional noise.
"""

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .world import CLASS_NAMES, IMG_H, IMG_W

GRID = 6
END_TO_END = "end_to_end"
LOCALIZATION_ONLY = "localization_only"
STRUCTURED = "structured"
ORACLE = "oracle"
STRATEGIES = (END_TO_END, LOCALIZATION_ONLY, STRUCTURED, ORACLE)

E2E_FEATURES = 32
LOC_FEATURES = 16
SCORE_THRESHOLD = 0.3

# Detected coordinates enter the fused state centered and amplified. The
# workspace spans roughly 0.2 m of object placements; rescaling makes a
# centimeter of position difference comparable to the joint-angle features
# (and shrinks the relative impact of training-time state noise).
COORD_SCALE = 4.0
COORD_CENTER = 0.5


def scale_coords(pos):
    """Map workspace coordinates to the fused-state feature range."""
    return (np.asarray(pos, dtype=np.float64) - COORD_CENTER) * COORD_SCALE

DETECTOR_MAGIC = "latentarm-detector"
DETECTOR_VERSION = 1


class PerceptionError(Exception):
    pass


@dataclass
class Detection:
    class_id: int
    pos: np.ndarray
    confidence: float


@dataclass
class NoiseConfig:
    sigma_pos: float = 0.0
    p_misclass: float = 0.0


@dataclass
class FusedState:
    """Strategy-tagged conditioning vector for the action decoder.

    `vector` is the full fused state: the first `m` entries are the joint
    state and are refreshed every control step; the rest is the episode's
    visual representation. `onehot_mask` marks one-hot class slots (exempt
    from noise augmentation). For CNN strategies the raw image is kept so
    training can recompute the visual slice as the encoder learns.
    """

    strategy: str
    m: int
    vector: np.ndarray
    onehot_mask: np.ndarray
    image: np.ndarray = None
    visual_slice: slice = None

    def with_joints(self, q):
        out = FusedState(
            self.strategy, self.m, self.vector.copy(), self.onehot_mask,
            self.image, self.visual_slice,
        )
        out.vector[: self.m] = q
        return out


def onehot(class_id, size):
    v = np.zeros(size)
    v[min(int(class_id), size - 1)] = 1.0
    return v


def fused_length(strategy, m, n_classes):
    if strategy == END_TO_END:
        return m + E2E_FEATURES
    if strategy == LOCALIZATION_ONLY:
        # One extra class slot reserved for objects outside the configured set.
        return m + LOC_FEATURES + (n_classes + 1)
    if strategy in (STRUCTURED, ORACLE):
        return m + n_classes + 2
    raise PerceptionError(f"unknown strategy {strategy!r}")


def visual_feature_dim(strategy):
    if strategy == END_TO_END:
        return E2E_FEATURES
    if strategy == LOCALIZATION_ONLY:
        return LOC_FEATURES
    return 0


def make_cnn_encoder(out_dim, rng):
    """Shared CNN head for the end-to-end and localization-only strategies."""
    return nn.build_network(
        [
            "Conv2D 3 8",
            "ReLU",
            "MaxPool2x2",
            "Conv2D 8 16",
            "ReLU",
            "MaxPool2x2",
            "Flatten",
            f"Dense {12 * 12 * 16} {out_dim}",
        ],
        rng,
    )


def _detector_layers(n_classes):
    out_ch = 1 + n_classes + 2
    return [
        "Conv2D 3 8",
        "ReLU",
        "MaxPool2x2",
        "Conv2D 8 16",
        "ReLU",
        "MaxPool2x2",
        "Conv2D 16 32",
        "ReLU",
        "MaxPool2x2",
        f"Conv2D 32 {out_ch}",
    ]


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def softmax(x, axis=-1):
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


@dataclass
class GridDetector:
    net: nn.Network
    n_classes: int
    grid: int = GRID
    metrics: dict = field(default_factory=dict)

    def raw_output(self, images):
        return self.net.forward(np.asarray(images))

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(f"{DETECTOR_MAGIC} {DETECTOR_VERSION} {self.n_classes} {self.grid}\n")
            nn.dump_network(self.net, fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            header = fh.readline().split()
            if len(header) != 4 or header[0] != DETECTOR_MAGIC:
                raise nn.CheckpointError("bad detector checkpoint header")
            if int(header[1]) != DETECTOR_VERSION:
                raise nn.CheckpointError("unsupported detector checkpoint version")
            net = nn.parse_network(fh)
            return cls(net, n_classes=int(header[2]), grid=int(header[3]))


def _cell_targets(labels, n_classes, grid):
    """Per-image grid targets: objectness, class index, cell fractions."""
    t_obj = np.zeros((grid, grid))
    t_cls = -np.ones((grid, grid), dtype=int)
    t_off = np.zeros((grid, grid, 2))
    for class_id, x, y in labels:
        if not 0 <= class_id < n_classes:
            raise PerceptionError(f"class {class_id} outside configured range")
        ix = min(int(x * grid), grid - 1)
        iy = min(int(y * grid), grid - 1)
        t_obj[iy, ix] = 1.0
        t_cls[iy, ix] = class_id
        t_off[iy, ix] = (x * grid - ix, y * grid - iy)
    return t_obj, t_cls, t_off


@dataclass
class DetectorConfig:
    n_classes: int = 5
    epochs: int = 60
    batch_size: int = 16
    lr: float = 1e-3
    seed: int = 0
    offset_weight: float = 5.0


def detector_loss_and_grad(out, batch_targets, offset_weight):
    """Loss over a raw output batch plus the gradient w.r.t. that output."""
    n, g, _, _ = out.shape
    t_obj = np.stack([t[0] for t in batch_targets])
    t_cls = np.stack([t[1] for t in batch_targets])
    t_off = np.stack([t[2] for t in batch_targets])
    pos = t_obj > 0.5
    n_pos = max(int(pos.sum()), 1)

    p_obj = sigmoid(out[..., 0])
    eps = 1e-12
    # Class-balanced BCE: positive and negative cells each average to weight
    # one. A plain per-cell mean dilutes the lone positive cell 35:1 and the
    # resulting scores are too soft to clear the detection threshold.
    n_neg = max(int((~pos).sum()), 1)
    w_obj = np.where(pos, 1.0 / n_pos, 1.0 / n_neg)
    loss_obj = -float(
        (w_obj * (t_obj * np.log(p_obj + eps) + (1 - t_obj) * np.log(1 - p_obj + eps))).sum()
    )

    grad = np.zeros_like(out)
    grad[..., 0] = (p_obj - t_obj) * w_obj

    cls_logits = out[..., 1:-2]
    probs = softmax(cls_logits)
    cls_idx = np.where(pos, np.maximum(t_cls, 0), 0)
    tgt = np.eye(probs.shape[-1])[cls_idx]
    picked = np.take_along_axis(probs, cls_idx[..., None], axis=-1)[..., 0]
    loss_cls = float(-(np.log(picked + eps) * pos).sum() / n_pos)
    grad[..., 1:-2] = (probs - tgt) * pos[..., None] / n_pos

    s_off = sigmoid(out[..., -2:])
    diff = s_off - t_off
    loss_off = float(((diff**2) * pos[..., None]).sum() / n_pos)
    grad[..., -2:] = 2.0 * diff * s_off * (1 - s_off) * pos[..., None] * offset_weight / n_pos

    return loss_obj + loss_cls + offset_weight * loss_off, grad


def make_detector_dataset(n, rng, classes=None):
    """Labeled single-object renders for detector training and evaluation."""
    from . import world

    classes = list(classes) if classes is not None else list(range(len(CLASS_NAMES)))
    samples = []
    for _ in range(n):
        cid = int(classes[rng.integers(len(classes))])
        scene = world.sample_scene(rng, [cid])
        image = world.render(scene)
        labels = [(o.class_id, float(o.pos[0]), float(o.pos[1]))
                  for o in scene.objects]
        samples.append((image, labels))
    return samples


def train_detector(dataset, config, val_dataset=None):
    """Train the grid net on labeled renders; detector is frozen afterwards."""
    if not dataset:
        raise PerceptionError("empty detector dataset")
    rng = np.random.default_rng(config.seed)
    net = nn.build_network(_detector_layers(config.n_classes), rng)
    opt = nn.Adam(net, lr=config.lr)
    targets = [_cell_targets(labels, config.n_classes, GRID) for _, labels in dataset]
    images = np.stack([img for img, _ in dataset])
    idx = np.arange(len(dataset))
    for _ in range(config.epochs):
        rng.shuffle(idx)
        for start in range(0, len(idx), config.batch_size):
            batch = idx[start : start + config.batch_size]
            out = net.forward(images[batch])
            _, grad = detector_loss_and_grad(
                out, [targets[i] for i in batch], config.offset_weight
            )
            net.zero_grad()
            net.backward(grad)
            opt.step()
    detector = GridDetector(net, config.n_classes)
    if val_dataset is not None:
        detector.metrics = evaluate_detector(detector, val_dataset)
    return detector


def detect(detector, image):
    """Best detection per class from one image; weak classes suppressed."""
    image = np.asarray(image)
    if image.shape != (IMG_H, IMG_W, 3):
        raise PerceptionError(f"image shape {image.shape} != ({IMG_H},{IMG_W},3)")
    out = detector.raw_output(image[None])[0]
    g = detector.grid
    p_obj = sigmoid(out[..., 0])
    probs = softmax(out[..., 1:-2])
    offs = sigmoid(out[..., -2:])
    detections = []
    for c in range(detector.n_classes):
        score = p_obj * probs[..., c]
        flat = int(np.argmax(score))
        iy, ix = divmod(flat, g)
        best = float(score[iy, ix])
        if best < SCORE_THRESHOLD:
            continue
        pos = np.array([(ix + offs[iy, ix, 0]) / g, (iy + offs[iy, ix, 1]) / g])
        detections.append(Detection(c, pos, best))
    return detections


def evaluate_detector(detector, dataset):
    """Held-out class accuracy and mean position error on single-object renders."""
    correct = 0
    pos_errors = []
    total = 0
    for image, labels in dataset:
        dets = detect(detector, image)
        for class_id, x, y in labels:
            total += 1
            if not dets:
                continue
            best = max(dets, key=lambda d: d.confidence)
            if best.class_id == class_id:
                correct += 1
            match = next((d for d in dets if d.class_id == class_id), best)
            pos_errors.append(float(np.hypot(match.pos[0] - x, match.pos[1] - y)))
    return {
        "class_accuracy": correct / max(total, 1),
        "mean_position_error": float(np.mean(pos_errors)) if pos_errors else float("inf"),
        "n_eval": total,
    }


def oracle_detect(world, noise, rng, n_classes=len(CLASS_NAMES)):
    """Ground-truth detections with configurable position/class corruption."""
    detections = []
    for obj in world.objects:
        pos = obj.pos.copy()
        if noise.sigma_pos > 0:
            pos = pos + rng.normal(0.0, noise.sigma_pos, size=2)
        class_id = obj.class_id
        if noise.p_misclass > 0 and rng.random() < noise.p_misclass:
            others = [c for c in range(n_classes) if c != obj.class_id]
            class_id = int(others[rng.integers(len(others))])
        detections.append(Detection(class_id, pos, 1.0))
    return detections


@dataclass
class PerceptionContext:
    """Everything fuse_state needs beyond the per-step joints and image."""

    strategy: str
    n_classes: int
    goal_class: int = None
    detector: GridDetector = None
    encoder: nn.Network = None
    world: object = None
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    rng: np.random.Generator = None


def _select_detection(detections, goal_class):
    if not detections:
        raise PerceptionError("no detections in scene image")
    for d in detections:
        if d.class_id == goal_class:
            return d
    return max(detections, key=lambda d: d.confidence)


def fuse_state(strategy, joints, image, context):
    """Concatenate joints with the strategy's visual representation."""
    q = np.asarray(joints, dtype=np.float64)
    m = len(q)
    nc = context.n_classes
    if strategy == END_TO_END:
        if context.encoder is not None:
            f = context.encoder.forward(np.asarray(image)[None])[0]
        else:
            f = np.zeros(E2E_FEATURES)
        vector = np.concatenate([q, f])
        mask = np.zeros(len(vector), dtype=bool)
        return FusedState(strategy, m, vector, mask, image=np.asarray(image),
                          visual_slice=slice(m, m + E2E_FEATURES))
    if strategy == LOCALIZATION_ONLY:
        if context.goal_class is None:
            raise PerceptionError("localization_only needs the ground-truth goal class")
        if context.encoder is not None:
            g = context.encoder.forward(np.asarray(image)[None])[0]
        else:
            g = np.zeros(LOC_FEATURES)
        c = onehot(context.goal_class, nc + 1)
        vector = np.concatenate([q, g, c])
        mask = np.zeros(len(vector), dtype=bool)
        mask[m + LOC_FEATURES :] = True
        return FusedState(strategy, m, vector, mask, image=np.asarray(image),
                          visual_slice=slice(m, m + LOC_FEATURES))
    if strategy == STRUCTURED:
        if context.detector is None:
            raise PerceptionError("structured strategy needs a detector")
        det = _select_detection(detect(context.detector, image), context.goal_class)
        vector = np.concatenate([q, onehot(det.class_id, nc), scale_coords(det.pos)])
        mask = np.zeros(len(vector), dtype=bool)
        mask[m : m + nc] = True
        return FusedState(strategy, m, vector, mask)
    if strategy == ORACLE:
        if context.world is None:
            raise PerceptionError("oracle strategy needs the ground-truth world")
        rng = context.rng or np.random.default_rng(0)
        det = _select_detection(
            oracle_detect(context.world, context.noise, rng), context.goal_class
        )
        vector = np.concatenate([q, onehot(det.class_id, nc), scale_coords(det.pos)])
        mask = np.zeros(len(vector), dtype=bool)
        mask[m : m + nc] = True
        return FusedState(ORACLE, m, vector, mask)
    raise PerceptionError(f"unknown strategy {strategy!r}")
