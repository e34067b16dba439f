import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cogflex.models import MODEL_NAMES, build, parse_model
from cogflex.nn_core import (AdamState, DimensionError, Network, Node, WiringError, adam_step, sigmoid,
                             softmax, xavier_init)
from oracles import finite_difference_errors, random_batch, reference_adam, reference_forward


def tiny_mlp(rng=None):
    nodes = [Node("input", "input", size=4), Node("Dense1", "dense", ("input",), 3, "sigmoid"),
             Node("Output", "dense", ("Dense1",), 2)]
    return Network(nodes, 4, ["Dense1"], rng)


def test_xavier_bounds_and_determinism():
    w = xavier_init(12, 8, np.random.default_rng(0))
    assert w.shape == (8, 12)
    assert np.all(np.abs(w) <= np.sqrt(6 / 20))
    assert np.array_equal(w, xavier_init(12, 8, np.random.default_rng(0)))


def test_xavier_variance():
    w = xavier_init(300, 400, np.random.default_rng(1))  # 1.2e5 samples
    assert w.var() == pytest.approx(2 / 700, rel=0.05)


def test_xavier_rejects_empty():
    with pytest.raises(ValueError):
        xavier_init(0, 3, np.random.default_rng(0))


def test_zero_weights_give_uniform_output():
    net = build(parse_model("Gate_2", 4))
    p = net.forward(np.ones(24))
    assert np.allclose(p, 1 / 8)


def test_sigmoid_half_at_zero():
    net = build(parse_model("MLP_1", 2))
    _, taps = net.forward(np.zeros(12), return_taps=True)
    assert all(np.all(v == 0.5) for v in taps.values())
    assert sigmoid(0.0) == 0.5


def test_softmax_stable():
    p = softmax(np.array([[1000.0, 1000.0, -1000.0]]))
    assert np.allclose(p, [[0.5, 0.5, 0.0]])


@pytest.mark.parametrize("name", MODEL_NAMES)
@pytest.mark.parametrize("n", [2, 3, 4])
def test_forward_matches_reference(name, n):
    rng = np.random.default_rng(n * 31 + len(name))
    spec = parse_model(name, n)
    net = build(spec, rng)
    x, _ = random_batch(n, 20, rng)
    probs, taps = net.forward(x, return_taps=True)
    ref_probs, ref_taps = reference_forward(spec, dict(net.named_parameters()), x)
    assert np.max(np.abs(probs - ref_probs)) < 1e-12
    assert set(taps) == set(ref_taps)
    for k in taps:
        assert np.max(np.abs(taps[k] - ref_taps[k])) < 1e-12
    assert np.allclose(probs.sum(axis=1), 1, atol=1e-9) and np.all(probs >= 0)


@pytest.mark.parametrize("name", ["MLP_2", "Gate_2", "Concat_2", "Gate_1"])
def test_gradient_check_n2(name):
    rng = np.random.default_rng(4)
    net = build(parse_model(name, 2), rng)
    x, y = random_batch(2, 16, rng)
    for pname, (rel, gap) in finite_difference_errors(net, x, y).items():
        assert rel < 1e-5, pname
        assert gap < 1e-9, pname


def test_logit_gradient_identity():
    # with no hidden layer the output-layer weight gradient is (p - y)^T x / batch
    nodes = [Node("input", "input", size=3), Node("Output", "dense", ("input",), 4)]
    net = Network(nodes, 3, rng=np.random.default_rng(0))
    x = np.random.default_rng(1).normal(size=(5, 3))
    y = np.array([0, 3, 1, 1, 2])
    net.backward(x, y)
    p = net.forward(x)
    d = (p - np.eye(4)[y]) / 5
    g = net.gradients()
    assert np.allclose(g["Output/weights"], d.T @ x)
    assert np.allclose(g["Output/biases"], d.sum(axis=0))


def test_gate_zero_stream_kills_other_gradient():
    spec = parse_model("Gate_2", 2)
    net = build(spec, np.random.default_rng(0))
    x, y = random_batch(2, 8, np.random.default_rng(1))
    x[:, 8:] = 0.0  # stimulus stream all zeros
    net.backward(x, y)
    # Dense1A only reaches the loss through Gate1 = A * stimulus
    g = net.gradients()["Dense1/weights"]
    assert np.all(g[:4] == 0)
    assert np.any(g[4:] != 0)


def test_one_hot_and_label_targets_agree():
    net = tiny_mlp(np.random.default_rng(0))
    x = np.random.default_rng(1).normal(size=(6, 4))
    y = np.array([0, 1, 1, 0, 1, 0])
    l1, c1 = net.backward(x, y)
    g1 = net.grad.copy()
    l2, c2 = net.backward(x, np.eye(2)[y])
    assert (l1, c1) == (l2, c2) and np.array_equal(g1, net.grad)


def test_shape_errors():
    net = tiny_mlp(np.random.default_rng(0))
    with pytest.raises(DimensionError):
        net.forward(np.zeros(5))
    with pytest.raises(DimensionError):
        net.backward(np.zeros((3, 4)), np.zeros(2, dtype=int))
    with pytest.raises(DimensionError):
        net.backward(np.zeros((3, 4)), np.zeros((3, 3)))
    with pytest.raises(DimensionError):
        net.set_params(np.zeros(3))


def test_wiring_errors():
    with pytest.raises(WiringError):
        Network([Node("input", "input", size=4), Node("g", "gate", ("input", "input")),
                 Node("Output", "dense", ("g",), 2, "sigmoid")], 4)
    with pytest.raises(WiringError):
        Network([Node("a", "input", size=2), Node("b", "input", size=3, start=2),
                 Node("g", "gate", ("a", "b")), Node("Output", "dense", ("g",), 2)], 5)
    with pytest.raises(WiringError):
        Network([Node("input", "input", size=4), Node("Output", "dense", ("nope",), 2)], 4)


def test_adam_zero_gradient_no_move():
    p = np.array([1.0, -2.0, 3.0])
    s = AdamState(p.shape)
    adam_step(s, p, np.zeros(3))
    assert p.tolist() == [1.0, -2.0, 3.0] and s.t == 1


def test_adam_first_step_is_sign():
    p = np.zeros(4)
    g = np.array([0.5, -3.0, 1e-3, -1e-2])
    adam_step(AdamState(p.shape), p, g)
    assert np.allclose(p, -0.001 * np.sign(g), rtol=1e-3)


def test_adam_matches_reference_on_quadratic():
    a = np.array([1.0, 3.0, 0.5, 10.0])
    target = np.array([0.3, -1.0, 2.0, 0.0])
    grad = lambda p: a * (p - target)
    start = np.array([1.0, 1.0, -1.0, 0.5])
    p = start.copy()
    s = AdamState(p.shape, lr=0.01)
    for _ in range(100):
        adam_step(s, p, grad(p))
    ref = reference_adam(start, grad, 100, lr=0.01)
    assert np.max(np.abs(p - ref)) < 1e-10


def test_adam_shape_mismatch():
    with pytest.raises(DimensionError):
        adam_step(AdamState((3,)), np.zeros(3), np.zeros(4))


@pytest.mark.parametrize("seed", range(5))
def test_loss_decreases_on_separable_toy(seed):
    rng = np.random.default_rng(seed)
    net = tiny_mlp(rng)
    x = rng.normal(size=(64, 4))
    y = (x[:, 0] + x[:, 1] > 0).astype(int)
    s = AdamState.for_network(net, lr=0.01)
    losses = []
    for _ in range(50):
        loss, _ = net._backward(x, y)
        losses.append(loss)
        adam_step(s, net.params, net.grad)
        assert np.allclose(net.forward(x).sum(axis=1), 1)
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


def test_training_is_deterministic():
    def trajectory():
        rng = np.random.default_rng(3)
        net = build(parse_model("Concat_2", 3), rng)
        x, y = random_batch(3, 32, rng)
        s = AdamState.for_network(net)
        for _ in range(20):
            net._backward(x, y)
            adam_step(s, net.params, net.grad)
        return net.params.copy()
    assert np.array_equal(trajectory(), trajectory())


def test_snapshot_roundtrip(tmp_path):
    net = build(parse_model("Gate_1", 3), np.random.default_rng(0))
    path = tmp_path / "p.json"
    net.save(path)
    other = build(parse_model("Gate_1", 3))
    other.load(path)
    assert np.array_equal(net.params, other.params)
    snap = net.snapshot()
    assert snap[0]["name"] == "Dense1/weights" and snap[0]["shape"] == [8, 12]
    with pytest.raises(DimensionError):
        build(parse_model("Gate_2", 3)).load_snapshot(snap)


def test_copy_is_independent():
    net = tiny_mlp(np.random.default_rng(0))
    c = net.copy()
    c.params += 1
    assert not np.array_equal(net.params, c.params)


def test_views_share_flat_buffer():
    net = tiny_mlp(np.random.default_rng(0))
    net.layers["Dense1"].weights[0, 0] = 42.0
    assert 42.0 in net.params


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(MODEL_NAMES), st.integers(2, 4))
def test_output_is_distribution(seed, name, n):
    rng = np.random.default_rng(seed)
    net = build(parse_model(name, n), rng)
    x, _ = random_batch(n, 4, rng)
    p = net.forward(x)
    assert p.shape == (4, 2 * n)
    assert np.all(p >= 0) and np.allclose(p.sum(axis=1), 1, atol=1e-9)
