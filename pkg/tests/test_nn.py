import json
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nnobserver import _kernels_py, nn, plant
from nnobserver.nn import Activation, IntervalVector, NetworkError, NeuralNetwork

from conftest import reference_forward, random_network


def test_activation_constants():
    assert Activation.RELU.lipschitz_alpha == 1.0
    assert Activation.TANH.lipschitz_alpha == 1.0
    assert Activation.PURELIN.lipschitz_alpha == 1.0
    assert Activation.SIGMOID.lipschitz_alpha == 0.25
    z = np.linspace(-6, 6, 401)
    for act in Activation:
        assert np.all(np.diff(act(z)) >= 0)


def test_forward_identity_and_relu():
    ident = NeuralNetwork.from_arrays([np.eye(2)], [[0, 0]], ["purelin"])
    np.testing.assert_array_equal(nn.forward(ident, [3, -1]), [3, -1])
    clamp = NeuralNetwork.from_arrays([[[1.0]]], [[-2.0]], ["relu"])
    np.testing.assert_array_equal(nn.forward(clamp, [1.0]), [0.0])


def test_forward_example1_matches_reference():
    net = plant.example1_network()
    args = ([plant.EXAMPLE1_W1, plant.EXAMPLE1_W2], [plant.EXAMPLE1_B1, plant.EXAMPLE1_B2], ["tanh", "purelin"])
    for x in ([0, 0, 0], [0.3, -1.2, 4.0], [-2, 2, -2]):
        np.testing.assert_allclose(nn.forward(net, x), reference_forward(*args, x), rtol=0, atol=1e-14)


def test_forward_rejects_wrong_length():
    with pytest.raises(NetworkError, match="expects 3 inputs"):
        nn.forward(plant.example1_network(), [1.0, 2.0])


def test_layer_chain_checked():
    with pytest.raises(NetworkError, match="layer 2 expects"):
        NeuralNetwork.from_arrays([np.ones((3, 2)), np.ones((1, 2))], [np.zeros(3), np.zeros(1)], ["tanh", "purelin"])
    with pytest.raises(NetworkError):
        NeuralNetwork(())
    with pytest.raises(NetworkError, match="bias"):
        nn.Layer(np.ones((2, 2)), np.zeros(3), "tanh")
    with pytest.raises(NetworkError, match="unknown activation"):
        nn.Layer(np.ones((1, 1)), np.zeros(1), "softplus")


def test_split_weights_examples():
    lo, hi = nn.split_weights([[-2, 1], [3, -5]])
    np.testing.assert_array_equal(lo, [[-2, 0], [0, -5]])
    np.testing.assert_array_equal(hi, [[0, 1], [3, 0]])
    lo, hi = nn.split_weights([[0.0, 2.0], [1.0, 0.0]])
    np.testing.assert_array_equal(lo, 0)
    np.testing.assert_array_equal(hi, [[0.0, 2.0], [1.0, 0.0]])
    # zeros go to the upper part, including negative zero
    lo, hi = nn.split_weights([[0.0, -0.0]])
    assert not np.signbit(lo).any()


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=30))
def test_split_reconstruction_exact(vals):
    w = np.array(vals).reshape(1, -1)
    lo, hi = nn.split_weights(w)
    assert np.all(lo <= 0) and np.all(hi >= 0)
    assert np.array_equal(lo + hi, w)


def test_make_auxiliary_pair_single_layer():
    net = NeuralNetwork.from_arrays([[[1.0, -1.0]]], [[0.0]], ["purelin"])
    pair = nn.make_auxiliary_pair(net)
    np.testing.assert_array_equal(pair.split_layers[0].w_lower, [[0, -1]])
    np.testing.assert_array_equal(pair.split_layers[0].w_upper, [[1, 0]])
    out = nn.interval_forward(pair, IntervalVector([0, 0], [1, 1]))
    np.testing.assert_array_equal(out.lower, [-1])
    np.testing.assert_array_equal(out.upper, [1])


def test_nonnegative_network_has_zero_lower_parts():
    rng = np.random.default_rng(3)
    net = NeuralNetwork.from_arrays([np.abs(rng.normal(size=(3, 2))), np.abs(rng.normal(size=(1, 3)))],
                                    [np.zeros(3), np.zeros(1)], ["tanh", "purelin"])
    pair = nn.make_auxiliary_pair(net)
    for sp, layer in zip(pair.split_layers, net.layers):
        assert np.all(sp.w_lower == 0)
        np.testing.assert_array_equal(sp.w_upper, layer.weight)
    # with W_neg = 0 the lower bound only sees the lower corner
    lo = np.array([0.1, -0.2])
    out = nn.interval_forward(pair, IntervalVector(lo, lo + 1.0))
    np.testing.assert_allclose(out.lower, net(lo), atol=1e-15)
    np.testing.assert_allclose(out.upper, net(lo + 1.0), atol=1e-15)


def test_degenerate_box_collapses_exactly():
    rng = np.random.default_rng(0)
    for _ in range(50):
        net = random_network(rng)
        x = rng.normal(size=net.input_dim) * 3
        out = nn.interval_forward(nn.make_auxiliary_pair(net), IntervalVector(x, x))
        y = net(x)
        assert np.array_equal(out.lower, y) and np.array_equal(out.upper, y)


def test_example1_box_contains_samples():
    net = plant.example1_network()
    pair = nn.make_auxiliary_pair(net)
    box = nn.interval_forward(pair, IntervalVector(-np.ones(3), np.ones(3)))
    xs = np.random.default_rng(1).uniform(-1, 1, size=(10_000, 3))
    ys = nn.forward_batch(net, xs)
    assert np.all(ys >= box.lower - 1e-9) and np.all(ys <= box.upper + 1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_monotone_widening(seed):
    rng = np.random.default_rng(seed)
    net = random_network(rng)
    pair = nn.make_auxiliary_pair(net)
    lo = rng.normal(size=net.input_dim)
    hi = lo + rng.uniform(0, 2, size=net.input_dim)
    inner = nn.interval_forward(pair, IntervalVector(lo, hi))
    grow_lo = rng.uniform(0, 1, size=net.input_dim)
    grow_hi = rng.uniform(0, 1, size=net.input_dim)
    outer = nn.interval_forward(pair, IntervalVector(lo - grow_lo, hi + grow_hi))
    assert np.all(outer.lower <= inner.lower + 1e-12)
    assert np.all(outer.upper >= inner.upper - 1e-12)


def test_lipschitz_bound():
    tanh = NeuralNetwork.from_arrays([np.ones((2, 2))] * 2, [np.zeros(2)] * 2, ["tanh", "tanh"])
    mixed = NeuralNetwork.from_arrays([np.ones((2, 2))] * 2, [np.zeros(2)] * 2, ["sigmoid", "purelin"])
    sig = NeuralNetwork.from_arrays([np.ones((2, 2))] * 2, [np.zeros(2)] * 2, ["sigmoid", "sigmoid"])
    assert nn.lipschitz_bound(tanh) == 1.0
    assert nn.lipschitz_bound(mixed) == 1.0
    assert nn.lipschitz_bound(sig) == 0.25


def test_forward_batch_matches_forward():
    rng = np.random.default_rng(5)
    net = random_network(rng, n_in=4)
    xs = rng.normal(size=(20, 4))
    batch = nn.forward_batch(net, xs)
    for x, y in zip(xs, batch):
        np.testing.assert_allclose(nn.forward(net, x), y, atol=1e-13)


def test_network_document_round_trip(tmp_path):
    net = plant.example1_network()
    path = tmp_path / "net.json"
    nn.save_network(net, path)
    back = nn.load_network(path)
    for a, b in zip(net.layers, back.layers):
        assert np.array_equal(a.weight, b.weight) and np.array_equal(a.bias, b.bias)
        assert a.activation is b.activation
    assert set(json.loads(path.read_text())) == {"layers"}


@pytest.mark.parametrize(
    "doc, message",
    [
        ({"layers": [{"activation": "tanh", "weights": [[1, 2], [3]], "bias": [0, 0]}]}, "ragged"),
        ({"layers": [{"activation": "tanh", "weights": [[1]], "bias": [0]}], "extra": 1}, "exactly the key"),
        ({"layers": [{"activation": "tanh", "weights": [[1]], "biases": [0]}]}, "expected keys"),
        ({"layers": [{"activation": "tanh", "weights": [["a"]], "bias": [0]}]}, "non-numeric"),
        ({"layers": [{"activation": "swish", "weights": [[1]], "bias": [0]}]}, "unknown activation"),
    ],
)
def test_network_document_rejects(doc, message):
    with pytest.raises(NetworkError, match=message):
        nn.network_from_dict(doc)


def test_backends_agree():
    compiled = pytest.importorskip("nnobserver._kernels")
    rng = np.random.default_rng(11)
    for _ in range(200):
        net = random_network(rng)
        x = rng.normal(size=net.input_dim)
        lo, hi = x - rng.uniform(0, 1, x.shape), x + rng.uniform(0, 1, x.shape)
        np.testing.assert_allclose(compiled.forward(net._packed, x), _kernels_py.forward(net._packed, x), atol=1e-12)
        a = compiled.interval_forward(net._packed, lo, hi)
        b = _kernels_py.interval_forward(net._packed, lo, hi)
        np.testing.assert_allclose(a[0], b[0], atol=1e-12)
        np.testing.assert_allclose(a[1], b[1], atol=1e-12)
    t = rng.normal(size=(7, 9))
    t1, t2 = t.copy(), t.copy()
    compiled.pivot(t1, 2, 3)
    _kernels_py.pivot(t2, 2, 3)
    np.testing.assert_allclose(t1, t2, atol=1e-12)


def test_pure_python_switch():
    env = dict(os.environ, NNOBSERVER_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from nnobserver._backend import BACKEND; print(BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
