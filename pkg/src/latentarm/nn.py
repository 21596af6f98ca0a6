"""Minimal dense/conv neural network engine with reverse-mode gradients.

Everything runs in float64 numpy. Layers cache what they need during
forward and consume it in backward; a Network owns the layer stack and
exposes flat parameter/gradient access for the optimizer and checkpoints.
"""

import io

import numpy as np

CHECKPOINT_MAGIC = "latentarm-net"
CHECKPOINT_VERSION = 1


class NetConfigError(Exception):
    """Layer wiring / input shape mismatch."""


class NetStateError(Exception):
    """Operation called out of order (e.g. backward before forward)."""


class CheckpointError(Exception):
    """Unreadable, truncated, or version-mismatched checkpoint."""


class Param:
    """A trainable array plus its gradient accumulator."""

    def __init__(self, value):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)


def glorot_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    def params(self):
        return []

    def forward(self, x):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def describe(self):
        raise NotImplementedError


class Dense(Layer):
    def __init__(self, n_in, n_out, rng=None):
        self.n_in = int(n_in)
        self.n_out = int(n_out)
        if rng is None:
            w = np.zeros((self.n_in, self.n_out))
        else:
            w = glorot_uniform(rng, (self.n_in, self.n_out), self.n_in, self.n_out)
        self.w = Param(w)
        self.b = Param(np.zeros(self.n_out))
        self._x = None

    def params(self):
        return [("w", self.w), ("b", self.b)]

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise NetConfigError(
                f"Dense({self.n_in}->{self.n_out}) got input shape {x.shape}"
            )
        self._x = x
        return x @ self.w.value + self.b.value

    def backward(self, grad):
        self.w.grad += self._x.T @ grad
        self.b.grad += grad.sum(axis=0)
        return grad @ self.w.value.T

    def describe(self):
        return f"Dense {self.n_in} {self.n_out}"


def _corr3x3(x, w):
    """Same-padded 3x3 correlation. x: (N,H,W,Cin), w: (Cin,3,3,Cout)."""
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(1, 2))
    # win: (N, H, W, Cin, 3, 3)
    return np.tensordot(win, w, axes=([3, 4, 5], [0, 1, 2])), win


class Conv2D(Layer):
    """3x3 convolution, stride 1, pad 1, NHWC layout."""

    def __init__(self, in_ch, out_ch, rng=None):
        self.in_ch = int(in_ch)
        self.out_ch = int(out_ch)
        fan_in = 9 * self.in_ch
        fan_out = 9 * self.out_ch
        shape = (self.in_ch, 3, 3, self.out_ch)
        if rng is None:
            w = np.zeros(shape)
        else:
            w = glorot_uniform(rng, shape, fan_in, fan_out)
        self.w = Param(w)
        self.b = Param(np.zeros(self.out_ch))
        self._win = None

    def params(self):
        return [("w", self.w), ("b", self.b)]

    def forward(self, x):
        if x.ndim != 4 or x.shape[3] != self.in_ch:
            raise NetConfigError(
                f"Conv2D({self.in_ch}->{self.out_ch}) got input shape {x.shape}"
            )
        y, win = _corr3x3(x, self.w.value)
        self._win = win
        return y + self.b.value

    def backward(self, grad):
        # dW: correlate cached windows with upstream grad.
        self.w.grad += np.tensordot(self._win, grad, axes=([0, 1, 2], [0, 1, 2]))
        self.b.grad += grad.sum(axis=(0, 1, 2))
        # dX: full correlation of grad with spatially flipped, transposed kernel.
        w_flip = self.w.value[:, ::-1, ::-1, :].transpose(3, 1, 2, 0)
        dx, _ = _corr3x3(grad, w_flip)
        return dx

    def describe(self):
        return f"Conv2D {self.in_ch} {self.out_ch}"


class MaxPool2x2(Layer):
    def __init__(self):
        self._idx = None
        self._shape = None

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] % 2 or x.shape[2] % 2:
            raise NetConfigError(f"MaxPool2x2 got input shape {x.shape}")
        n, h, w, c = x.shape
        r = x.reshape(n, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4)
        r = r.reshape(n, h // 2, w // 2, c, 4)
        self._idx = r.argmax(axis=4)
        self._shape = x.shape
        return np.take_along_axis(r, self._idx[..., None], axis=4)[..., 0]

    def backward(self, grad):
        n, h, w, c = self._shape
        out = np.zeros((n, h // 2, w // 2, c, 4))
        np.put_along_axis(out, self._idx[..., None], grad[..., None], axis=4)
        out = out.reshape(n, h // 2, w // 2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
        return out.reshape(n, h, w, c)

    def describe(self):
        return "MaxPool2x2"


class ReLU(Layer):
    def __init__(self):
        self._mask = None

    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, grad):
        return np.where(self._mask, grad, 0.0)

    def describe(self):
        return "ReLU"


class Tanh(Layer):
    def __init__(self):
        self._y = None

    def forward(self, x):
        self._y = np.tanh(x)
        return self._y

    def backward(self, grad):
        return grad * (1.0 - self._y**2)

    def describe(self):
        return "Tanh"


class Flatten(Layer):
    def __init__(self):
        self._shape = None

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)

    def describe(self):
        return "Flatten"


_LAYER_FACTORIES = {
    "Dense": lambda args: Dense(int(args[0]), int(args[1])),
    "Conv2D": lambda args: Conv2D(int(args[0]), int(args[1])),
    "MaxPool2x2": lambda args: MaxPool2x2(),
    "ReLU": lambda args: ReLU(),
    "Tanh": lambda args: Tanh(),
    "Flatten": lambda args: Flatten(),
}


class Network:
    def __init__(self, layers):
        self.layers = list(layers)
        self._forward_done = False

    def params(self):
        out = []
        for i, layer in enumerate(self.layers):
            for name, p in layer.params():
                out.append((f"{i}.{name}", p))
        return out

    def zero_grad(self):
        for _, p in self.params():
            p.grad[...] = 0.0

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        for i, layer in enumerate(self.layers):
            try:
                x = layer.forward(x)
            except NetConfigError as e:
                raise NetConfigError(f"layer {i}: {e}") from None
        self._forward_done = True
        return x

    def backward(self, grad):
        if not self._forward_done:
            raise NetStateError("backward called before forward")
        grad = np.asarray(grad, dtype=np.float64)
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def flat_params(self):
        return np.concatenate([p.value.ravel() for _, p in self.params()] or [np.zeros(0)])

    def set_flat_params(self, flat):
        total = sum(p.value.size for _, p in self.params())
        if len(flat) != total:
            raise NetConfigError(
                f"flat parameter vector length {len(flat)} != {total}")
        i = 0
        for _, p in self.params():
            n = p.value.size
            p.value[...] = np.asarray(flat[i : i + n]).reshape(p.value.shape)
            i += n

    def flat_grads(self):
        return np.concatenate([p.grad.ravel() for _, p in self.params()] or [np.zeros(0)])

    def describe(self):
        return [layer.describe() for layer in self.layers]


class Adam:
    """Adaptive-moment gradient descent with bias correction."""

    def __init__(self, net, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.net = net
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(p.value) for name, p in net.params()}
        self.v = {name: np.zeros_like(p.value) for name, p in net.params()}

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, p in self.net.params():
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1 - b1) * p.grad
            v *= b2
            v += (1 - b2) * p.grad**2
            m_hat = m / (1 - b1**self.t)
            v_hat = v / (1 - b2**self.t)
            p.value -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            p.grad[...] = 0.0


def build_network(descriptors, rng):
    """Build a Network from descriptor strings like 'Dense 4 64'."""
    layers = []
    for line in descriptors:
        parts = line.split()
        kind, args = parts[0], parts[1:]
        if kind not in _LAYER_FACTORIES:
            raise NetConfigError(f"unknown layer kind {kind!r}")
        layer = _LAYER_FACTORIES[kind](args)
        if isinstance(layer, Dense):
            layer.w.value[...] = glorot_uniform(
                rng, layer.w.value.shape, layer.n_in, layer.n_out
            )
        elif isinstance(layer, Conv2D):
            layer.w.value[...] = glorot_uniform(
                rng, layer.w.value.shape, 9 * layer.in_ch, 9 * layer.out_ch
            )
        layers.append(layer)
    return Network(layers)


def dump_network(net, fh):
    """Write topology + parameters as text; values exact to 17 sig digits."""
    fh.write(f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n")
    desc = net.describe()
    fh.write(f"layers {len(desc)}\n")
    for line in desc:
        fh.write(line + "\n")
    plist = net.params()
    fh.write(f"params {len(plist)}\n")
    for name, p in plist:
        fh.write(f"param {name} {p.value.size}\n")
        fh.write(" ".join("%.17g" % v for v in p.value.ravel()) + "\n")


def parse_network(fh):
    header = fh.readline().split()
    if len(header) != 2 or header[0] != CHECKPOINT_MAGIC:
        raise CheckpointError("bad checkpoint header")
    if int(header[1]) != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {header[1]}")
    nline = fh.readline().split()
    if len(nline) != 2 or nline[0] != "layers":
        raise CheckpointError("missing layer count")
    n_layers = int(nline[1])
    descriptors = [fh.readline().strip() for _ in range(n_layers)]
    if any(not d for d in descriptors):
        raise CheckpointError("truncated layer list")
    net = Network([_LAYER_FACTORIES[d.split()[0]](d.split()[1:]) for d in descriptors])
    pline = fh.readline().split()
    if len(pline) != 2 or pline[0] != "params":
        raise CheckpointError("missing param count")
    n_params = int(pline[1])
    plist = dict(net.params())
    if n_params != len(plist):
        raise CheckpointError("parameter count mismatch")
    for _ in range(n_params):
        head = fh.readline().split()
        if len(head) != 3 or head[0] != "param":
            raise CheckpointError("truncated parameter block")
        name, size = head[1], int(head[2])
        if name not in plist:
            raise CheckpointError(f"unknown parameter {name!r}")
        values = fh.readline().split()
        if len(values) != size or size != plist[name].value.size:
            raise CheckpointError(f"parameter {name!r} has wrong length")
        plist[name].value[...] = np.array(values, dtype=np.float64).reshape(
            plist[name].value.shape
        )
    return net


def save_network(net, path):
    with open(path, "w") as fh:
        dump_network(net, fh)


def load_network(path):
    with open(path) as fh:
        return parse_network(fh)


def network_to_string(net):
    buf = io.StringIO()
    dump_network(net, buf)
    return buf.getvalue()


def network_from_string(text):
    return parse_network(io.StringIO(text))
