"""Conditional autoencoder over demonstrated actions with a 1-D bottleneck.

The decoder maps (z, fused state) back to a joint-velocity command and is
the latent-action control interface. For the CNN strategies the visual head
is part of the parameter set and trained jointly; for structured/oracle the
visual representation is a fixed input.
"""

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import nn, perception
from .world import A_MAX, DT, angdiff

HIDDEN = 64
Z_MAX = 1.0
# Scale of the encoder output; the controller grid spans [-1, 1]. Keeping
# this at the grid edge means the largest decoded actions coincide with the
# largest demonstrated ones instead of extrapolating beyond them.
Z_DATA = 1.0
# Gain applied to the joint entries of the fused state at the network
# input. Training noise acts on the network-input representation, so a
# larger gain makes the fixed augmentation sigma smaller relative to the
# joint-space spacing of consecutive demo phases.
JOINT_GAIN = 2.0

MODEL_MAGIC = "latentarm-cae"
MODEL_VERSION = 1


class TrainingError(Exception):
    pass


@dataclass
class TrainingPair:
    s: perception.FusedState
    a: np.ndarray
    demo_id: int
    i: int
    j: int


@dataclass
class TrainConfig:
    epochs: int = 150
    batch_size: int = 32
    big_batch_size: int = 256
    big_batch_threshold: int = 2000
    lr: float = 1e-3
    sigma: float = 0.01
    # Window 1: each training action is a single-step joint difference.
    # Larger windows add averaged multi-step actions that let the greedy
    # controller cut the corners of the weave-push gait, which collapses it
    # into an unstable straight push.
    window: int = 1
    seed: int = 0
    hidden: int = 128
    # Demonstrations behind the training pairs; carried in checkpoints so
    # evaluation reports can state the training budget.
    n_demos: int = 0
    # Weight of the latent-support penalty: decoder outputs at uniformly
    # sampled z are pulled toward zero action. Latent values the encoder
    # never assigns to a state then decode to "hold still" instead of an
    # arbitrary extrapolation, which a greedy controller would exploit.
    reg_weight: float = 0.05
    # Weight of the latent-curvature penalty: second differences of the
    # decoder over z are pulled toward zero, so each state's action family
    # is close to affine in z. A free-form family develops spurious
    # large-action members between encoded values, and a greedy controller
    # reliably finds and exploits them.
    curv_weight: float = 1.0


@dataclass
class CAEModel:
    encoder: nn.Network
    decoder: nn.Network
    cnn: nn.Network
    strategy: str
    m: int
    state_dim: int
    config: TrainConfig
    loss_history: list = field(default_factory=list)
    final_loss: float = None

    def state_scale(self):
        scale = np.ones(self.state_dim)
        scale[: self.m] = JOINT_GAIN
        return scale


def build_pairs(demos, context, window):
    """All (state, windowed joint-velocity) pairs from a demonstration set.

    The fused state uses frame i's joints and the episode's first image.
    """
    if not demos:
        raise TrainingError("no demonstrations")
    if window < 1:
        raise TrainingError("window must be >= 1")
    pairs = []
    for demo_id, demo in enumerate(demos):
        if len(demo.frames) < 2:
            raise TrainingError(f"demonstration {demo_id} has fewer than 2 frames")
        q0, image0 = demo.frames[0]
        # Each demo supplies its own goal class (and, for oracle, its scene).
        ctx = perception.PerceptionContext(
            strategy=context.strategy, n_classes=context.n_classes,
            goal_class=demo.task.target_class, detector=context.detector,
            encoder=context.encoder,
            world=demo.scene if context.strategy == perception.ORACLE else context.world,
            noise=context.noise, rng=context.rng,
        )
        base = perception.fuse_state(ctx.strategy, q0, image0, ctx)
        qs = [q for q, _ in demo.frames]
        T = len(qs)
        for i in range(T - 1):
            for j in range(i + 1, min(i + window, T - 1) + 1):
                a = np.clip(angdiff(qs[j], qs[i]) / ((j - i) * DT), -A_MAX, A_MAX)
                pairs.append(TrainingPair(base.with_joints(qs[i]), a, demo_id, i, j))
    return pairs


def augment(s, rng, sigma):
    """Noise-augmented copy of a fused state; one-hot slots stay exact."""
    if sigma < 0:
        raise TrainingError("sigma must be >= 0")
    out = s.with_joints(s.vector[: s.m])
    if sigma > 0:
        noise = rng.normal(0.0, sigma, size=len(out.vector))
        noise[s.onehot_mask] = 0.0
        out.vector = out.vector + noise
    return out


def _encoder_net(state_dim, m, rng, hidden=HIDDEN):
    return nn.build_network(
        [f"Dense {state_dim + m} {hidden}", "Tanh", f"Dense {hidden} {hidden}", "Tanh",
         f"Dense {hidden} 1", "Tanh"],
        rng,
    )


def _decoder_net(state_dim, m, rng, hidden=HIDDEN):
    return nn.build_network(
        [f"Dense {1 + state_dim} {hidden}", "Tanh", f"Dense {hidden} {hidden}", "Tanh",
         f"Dense {hidden} {m}"],
        rng,
    )


def _batch_states(model, pairs, rng=None, sigma=0.0):
    """Stacked fused-state matrix for a batch; CNN features filled in live.

    Returns (S, image_group) where image_group maps each distinct image in
    the batch to the row indices using it (needed to push gradients back
    into the CNN head).
    """
    S = np.stack([p.s.vector for p in pairs])
    image_rows = None
    if model.cnn is not None:
        groups = {}
        for row, p in enumerate(pairs):
            groups.setdefault(p.demo_id, (p.s.image, []))[1].append(row)
        images = np.stack([img for img, _ in groups.values()])
        feats = model.cnn.forward(images)
        sl = pairs[0].s.visual_slice
        for k, (_, rows) in enumerate(groups.values()):
            S[rows, sl] = feats[k]
        image_rows = (images, [rows for _, rows in groups.values()], sl)
    if sigma > 0:
        # Noise is defined on the network-input representation; divide by
        # the input scale here since S is scaled later in the loss.
        noise = rng.normal(0.0, sigma, size=S.shape) / model.state_scale()
        noise[:, pairs[0].s.onehot_mask] = 0.0
        S = S + noise
    return S, image_rows


def _loss_and_backward(model, pairs, S, image_rows, train=True, reg_z=None,
                       reg_weight=0.0, curv_weight=0.0):
    """Reconstruction loss; when train=True, populate all parameter grads.

    When `reg_z` (one uniform latent sample per pair) is given, adds
    reg_weight * mean(decoder(reg_z, s)^2): latent regions with no encoded
    data decode toward the zero action rather than free extrapolations.
    With `curv_weight`, also adds a penalty on the decoder's second
    difference over z at `reg_z`, flattening the family toward affine-in-z.
    """
    scale = model.state_scale()
    Ss = S * scale
    A = np.stack([p.a for p in pairs]) / A_MAX
    z = Z_DATA * model.encoder.forward(np.concatenate([Ss, A], axis=1))
    out = model.decoder.forward(np.concatenate([z, Ss], axis=1))
    diff = out - A
    loss = float(np.mean(diff**2))
    if not train:
        return loss
    d_out = 2.0 * diff / diff.size
    d_dec_in = model.decoder.backward(d_out)
    d_z = d_dec_in[:, :1]
    d_Ss = d_dec_in[:, 1:].copy()
    d_enc_in = model.encoder.backward(Z_DATA * d_z)
    d_Ss += d_enc_in[:, : model.state_dim]
    if reg_z is not None and reg_weight > 0:
        # Only penalize latent samples away from the pair's own code:
        # penalizing near the encoded z would shrink the reconstructed
        # actions themselves toward zero.
        mask = (np.abs(reg_z - z) > 0.15).astype(np.float64)
        out_u = model.decoder.forward(np.concatenate([reg_z, Ss], axis=1))
        loss += reg_weight * float(np.mean(mask * out_u**2))
        d_dec_u = model.decoder.backward(reg_weight * 2.0 * mask * out_u / out_u.size)
        d_Ss += d_dec_u[:, 1:]
    if reg_z is not None and curv_weight > 0:
        # The network caches one forward pass at a time, so evaluate the
        # three stencil points, form the second difference, then replay
        # each forward before its backward.
        delta = 0.25
        stencil = (reg_z - delta, reg_z, reg_z + delta)
        outs = [model.decoder.forward(np.concatenate([zc, Ss], axis=1))
                for zc in stencil]
        curv = outs[0] - 2.0 * outs[1] + outs[2]
        loss += curv_weight * float(np.mean(curv**2))
        d_curv = curv_weight * 2.0 * curv / curv.size
        for zc, coef in zip(stencil, (1.0, -2.0, 1.0)):
            model.decoder.forward(np.concatenate([zc, Ss], axis=1))
            d_dec_c = model.decoder.backward(coef * d_curv)
            d_Ss += d_dec_c[:, 1:]
    if image_rows is not None:
        images, row_groups, sl = image_rows
        d_S = d_Ss * scale
        d_feats = np.stack([d_S[rows][:, sl].sum(axis=0) for rows in row_groups])
        model.cnn.backward(d_feats)
    return loss


def _sample_batches(pairs, batch_size, rng, group_by_image):
    """Batch index lists for one epoch.

    For CNN strategies, batches draw from a few demos at a time so each
    batch carries a bounded number of distinct images.
    """
    n = len(pairs)
    order = rng.permutation(n)
    if not group_by_image:
        return [order[i : i + batch_size] for i in range(0, n, batch_size)]
    by_demo = {}
    for idx in order:
        by_demo.setdefault(pairs[idx].demo_id, []).append(idx)
    demo_ids = list(by_demo)
    rng.shuffle(demo_ids)
    demos_per_batch = max(1, min(8, len(demo_ids)))
    per_demo = max(1, batch_size // demos_per_batch)
    batches = []
    while any(by_demo[d] for d in demo_ids):
        live = [d for d in demo_ids if by_demo[d]]
        rng.shuffle(live)
        batch = []
        for d in live[:demos_per_batch]:
            take = by_demo[d][:per_demo]
            by_demo[d] = by_demo[d][per_demo:]
            batch.extend(take)
        batches.append(np.array(batch))
    return batches


def train_cae(pairs, cfg, rng=None, model=None):
    """Fit encoder/decoder (and CNN head where applicable) on training pairs.

    Passing an existing `model` continues training from its parameters
    (fine-tuning); otherwise a fresh model is initialized from cfg.seed.
    """
    if not pairs:
        raise TrainingError("no training pairs")
    rng = rng or np.random.default_rng(cfg.seed)
    strategy = pairs[0].s.strategy
    m = pairs[0].s.m
    state_dim = len(pairs[0].s.vector)
    if model is None:
        cnn = None
        if strategy in (perception.END_TO_END, perception.LOCALIZATION_ONLY):
            cnn = perception.make_cnn_encoder(
                perception.visual_feature_dim(strategy), rng)
        model = CAEModel(
            encoder=_encoder_net(state_dim, m, rng, cfg.hidden),
            decoder=_decoder_net(state_dim, m, rng, cfg.hidden),
            cnn=cnn,
            strategy=strategy,
            m=m,
            state_dim=state_dim,
            config=cfg,
        )
    else:
        if model.strategy != strategy or model.state_dim != state_dim:
            raise TrainingError("fine-tuning pairs do not match the model")
        model.config = cfg
    cnn = model.cnn
    batch_size = cfg.batch_size if len(pairs) <= cfg.big_batch_threshold else cfg.big_batch_size
    opts = [nn.Adam(model.encoder, lr=cfg.lr), nn.Adam(model.decoder, lr=cfg.lr)]
    if cnn is not None:
        opts.append(nn.Adam(cnn, lr=cfg.lr))
    for epoch in range(cfg.epochs):
        epoch_losses = []
        for batch_idx in _sample_batches(pairs, batch_size, rng, cnn is not None):
            batch = [pairs[i] for i in batch_idx]
            S, image_rows = _batch_states(model, batch, rng, cfg.sigma)
            for net in (model.encoder, model.decoder, cnn):
                if net is not None:
                    net.zero_grad()
            reg_z = None
            if cfg.reg_weight > 0 or cfg.curv_weight > 0:
                reg_z = rng.uniform(-1.0, 1.0, size=(len(batch), 1))
            loss = _loss_and_backward(model, batch, S, image_rows,
                                      reg_z=reg_z, reg_weight=cfg.reg_weight,
                                      curv_weight=cfg.curv_weight)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            for opt in opts:
                opt.step()
            epoch_losses.append(loss)
        model.loss_history.append(float(np.mean(epoch_losses)))
    model.final_loss = model.loss_history[-1] if model.loss_history else None
    return model


def clone_model(model):
    """Deep copy via the text serialization, so clones are value-exact."""
    clone = CAEModel(
        encoder=nn.network_from_string(nn.network_to_string(model.encoder)),
        decoder=nn.network_from_string(nn.network_to_string(model.decoder)),
        cnn=(nn.network_from_string(nn.network_to_string(model.cnn))
             if model.cnn is not None else None),
        strategy=model.strategy,
        m=model.m,
        state_dim=model.state_dim,
        config=TrainConfig(**asdict(model.config)),
        final_loss=model.final_loss,
    )
    return clone


def dataset_loss(model, pairs):
    """Mean reconstruction loss without augmentation or parameter updates."""
    S, image_rows = _batch_states(model, pairs)
    return _loss_and_backward(model, pairs, S, image_rows, train=False)


def loss_and_flat_grads(model, pairs, sigma=0.0, rng=None, reg_z=None,
                        reg_weight=0.0, curv_weight=0.0):
    """Full-objective loss and flattened gradient over every parameter."""
    for net in (model.encoder, model.decoder, model.cnn):
        if net is not None:
            net.zero_grad()
    S, image_rows = _batch_states(model, pairs, rng, sigma)
    loss = _loss_and_backward(model, pairs, S, image_rows,
                              reg_z=reg_z, reg_weight=reg_weight,
                              curv_weight=curv_weight)
    grads = [model.encoder.flat_grads(), model.decoder.flat_grads()]
    if model.cnn is not None:
        grads.append(model.cnn.flat_grads())
    return loss, np.concatenate(grads)


def flat_params(model):
    parts = [model.encoder.flat_params(), model.decoder.flat_params()]
    if model.cnn is not None:
        parts.append(model.cnn.flat_params())
    return np.concatenate(parts)


def set_flat_params(model, flat):
    sizes = [len(model.encoder.flat_params()), len(model.decoder.flat_params())]
    nets = [model.encoder, model.decoder]
    if model.cnn is not None:
        sizes.append(len(model.cnn.flat_params()))
        nets.append(model.cnn)
    pos = 0
    for net, size in zip(nets, sizes):
        net.set_flat_params(flat[pos : pos + size])
        pos += size


def _prepare_state(model, s):
    if len(s.vector) != model.state_dim:
        raise nn.NetConfigError(
            f"fused state length {len(s.vector)} != model state dim {model.state_dim}"
        )
    vec = s.vector
    if model.cnn is not None and s.image is not None:
        vec = vec.copy()
        vec[s.visual_slice] = model.cnn.forward(np.asarray(s.image)[None])[0]
    return vec * model.state_scale()


def encode(model, s, a):
    """Latent coordinate of a (state, action) pair."""
    ss = _prepare_state(model, s)
    x = np.concatenate([ss, np.asarray(a) / A_MAX])[None]
    return Z_DATA * float(model.encoder.forward(x)[0, 0])


def decode(model, z, s):
    """Joint-velocity command for latent input z, clamped to the action limit."""
    return decode_many(model, np.array([z]), s)[0]


def decode_many(model, zs, s):
    """Vectorized decode over a grid of latent values for one state."""
    zs = np.clip(np.asarray(zs, dtype=np.float64), -Z_MAX, Z_MAX)
    ss = _prepare_state(model, s)
    X = np.concatenate(
        [zs[:, None], np.repeat(ss[None], len(zs), axis=0)], axis=1
    )
    out = model.decoder.forward(X) * A_MAX
    return np.clip(out, -A_MAX, A_MAX)


def _config_to_dict(cfg):
    return asdict(cfg)


def save_model(model, path):
    header = {
        "magic": MODEL_MAGIC,
        "version": MODEL_VERSION,
        "strategy": model.strategy,
        "m": model.m,
        "state_dim": model.state_dim,
        "config": _config_to_dict(model.config),
        "has_cnn": model.cnn is not None,
        "final_loss": model.final_loss,
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        fh.write("encoder\n")
        nn.dump_network(model.encoder, fh)
        fh.write("decoder\n")
        nn.dump_network(model.decoder, fh)
        if model.cnn is not None:
            fh.write("cnn\n")
            nn.dump_network(model.cnn, fh)


def load_model(path, expect_strategy=None):
    try:
        with open(path) as fh:
            header = json.loads(fh.readline())
            if header.get("magic") != MODEL_MAGIC:
                raise nn.CheckpointError("not a CAE checkpoint")
            if header.get("version") != MODEL_VERSION:
                raise nn.CheckpointError("unsupported CAE checkpoint version")
            if fh.readline().strip() != "encoder":
                raise nn.CheckpointError("missing encoder section")
            encoder = nn.parse_network(fh)
            if fh.readline().strip() != "decoder":
                raise nn.CheckpointError("missing decoder section")
            decoder = nn.parse_network(fh)
            cnn = None
            if header["has_cnn"]:
                if fh.readline().strip() != "cnn":
                    raise nn.CheckpointError("missing cnn section")
                cnn = nn.parse_network(fh)
    except (json.JSONDecodeError, ValueError) as e:
        raise nn.CheckpointError(f"corrupted CAE checkpoint: {e}") from None
    if expect_strategy is not None and header["strategy"] != expect_strategy:
        raise nn.CheckpointError(
            f"checkpoint strategy {header['strategy']!r} != expected {expect_strategy!r}"
        )
    cfg = TrainConfig(**header["config"])
    model = CAEModel(
        encoder=encoder, decoder=decoder, cnn=cnn,
        strategy=header["strategy"], m=header["m"], state_dim=header["state_dim"],
        config=cfg, final_loss=header.get("final_loss"),
    )
    return model
