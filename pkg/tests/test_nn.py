"""Finite-difference oracles and checkpoint round-trips for the NN engine."""

import io

import numpy as np
import pytest

from latentarm import nn

EPS = 1e-6
TOL = 1e-5


def numeric_grad(f, x, eps=EPS):
    g = np.zeros_like(x)
    flat = x.ravel()
    gf = g.ravel()
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        hi = f()
        flat[i] = old - eps
        lo = f()
        flat[i] = old
        gf[i] = (hi - lo) / (2 * eps)
    return g


def check_network_grads(net, x, rng):
    """Compare backprop grads on a random scalar loss against central FD."""
    w = rng.normal(size=net.forward(x).shape)

    def loss():
        return float(np.sum(net.forward(x) * w))

    net.zero_grad()
    net.forward(x)
    net.backward(w)
    analytic = net.flat_grads()

    flat = net.flat_params()
    numeric = np.zeros_like(analytic)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + EPS
        net.set_flat_params(flat)
        hi = loss()
        flat[i] = old - EPS
        net.set_flat_params(flat)
        lo = loss()
        flat[i] = old
        net.set_flat_params(flat)
        numeric[i] = (hi - lo) / (2 * EPS)
    scale = np.maximum(np.abs(numeric), 1.0)
    assert np.max(np.abs(analytic - numeric) / scale) < TOL


def check_input_grads(net, x, rng):
    w = rng.normal(size=net.forward(x).shape)
    net.forward(x)
    dx = net.backward(w)
    num = numeric_grad(lambda: float(np.sum(net.forward(x) * w)), x)
    scale = np.maximum(np.abs(num), 1.0)
    assert np.max(np.abs(dx - num) / scale) < TOL


@pytest.mark.parametrize("descriptors,shape", [
    (["Dense 5 4", "Tanh", "Dense 4 3"], (6, 5)),
    (["Dense 3 8", "ReLU", "Dense 8 2"], (4, 3)),
    (["Conv2D 2 3", "ReLU", "Flatten", "Dense 48 2"], (2, 4, 4, 2)),
    (["Conv2D 1 2", "MaxPool2x2", "Tanh", "Flatten", "Dense 8 3"], (3, 4, 4, 1)),
])
def test_network_gradients(descriptors, shape):
    rng = np.random.default_rng(hash(tuple(descriptors)) % 2**32)
    net = nn.build_network(descriptors, rng)
    x = rng.normal(size=shape)
    check_network_grads(net, x, rng)
    check_input_grads(net, x, rng)


def test_maxpool_ties_route_to_single_cell():
    net = nn.Network([nn.MaxPool2x2()])
    x = np.ones((1, 2, 2, 1))
    y = net.forward(x)
    assert y.shape == (1, 1, 1, 1)
    dx = net.backward(np.ones((1, 1, 1, 1)))
    assert dx.sum() == 1.0  # gradient goes to exactly one of the tied inputs


def test_adam_minimizes_quadratic():
    net = nn.build_network(["Dense 1 1"], np.random.default_rng(0))
    opt = nn.Adam(net, lr=0.05)
    x = np.ones((1, 1))
    for _ in range(400):
        net.zero_grad()
        y = net.forward(x)
        net.backward(2 * (y - 3.0))
        opt.step()
    assert abs(float(net.forward(x)[0, 0]) - 3.0) < 1e-3


def test_checkpoint_roundtrip_exact():
    rng = np.random.default_rng(11)
    net = nn.build_network(
        ["Conv2D 3 4", "ReLU", "MaxPool2x2", "Flatten", "Dense 16 5", "Tanh"], rng
    )
    text = nn.network_to_string(net)
    clone = nn.network_from_string(text)
    assert clone.describe() == net.describe()
    np.testing.assert_array_equal(clone.flat_params(), net.flat_params())
    # Serialization is deterministic, so round-trips are byte-identical.
    assert nn.network_to_string(clone) == text


@pytest.mark.parametrize("mutate", [
    lambda t: "garbage\n" + t,
    lambda t: t.replace("latentarm-net 1", "latentarm-net 9"),
    lambda t: t[: len(t) // 2],
    lambda t: t.replace("layers", "notlayers", 1),
])
def test_checkpoint_corruption_detected(mutate):
    net = nn.build_network(["Dense 2 2"], np.random.default_rng(0))
    text = nn.network_to_string(net)
    with pytest.raises((nn.CheckpointError, ValueError, KeyError)):
        nn.network_from_string(mutate(text))


def test_backward_before_forward_raises():
    net = nn.build_network(["Dense 2 2"], np.random.default_rng(0))
    with pytest.raises(nn.NetStateError):
        net.backward(np.zeros((1, 2)))


def test_shape_mismatch_raises():
    net = nn.build_network(["Dense 3 2"], np.random.default_rng(0))
    with pytest.raises(nn.NetConfigError):
        net.forward(np.zeros((1, 4)))


def test_set_flat_params_length_check():
    net = nn.build_network(["Dense 2 2"], np.random.default_rng(0))
    with pytest.raises(nn.NetConfigError):
        net.set_flat_params(np.zeros(3))
