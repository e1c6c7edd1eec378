import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loadcast.nn.conv import Conv1D
from loadcast.nn.core import (
    Dense,
    Flatten,
    Network,
    NonFiniteError,
    TrainConfig,
    gradient_check,
    loss_and_grads,
    mse_loss,
    sgd_step,
    sigmoid,
    train_epochs,
)
from loadcast.nn.recurrent import LSTM, RNN


def rng(seed=0):
    return np.random.default_rng(seed)


def test_identity_layer_passes_input():
    d = Dense(3, 3, "identity")
    d.params["W"] = np.eye(3)
    x = rng().normal(size=(4, 3))
    assert np.array_equal(d.forward(x)[0], x)


def test_zero_sigmoid_layer_outputs_half():
    d = Dense(5, 4, "sigmoid")
    d.params["W"][:] = 0
    assert np.all(d.forward(rng().normal(size=(3, 5)))[0] == 0.5)


def test_hand_computed_2_2_1():
    h = Dense(2, 2, "sigmoid")
    h.params["W"] = np.array([[0.5, -1.0], [0.25, 2.0]])
    h.params["b"] = np.array([0.1, -0.2])
    o = Dense(2, 1, "identity")
    o.params["W"] = np.array([[1.0], [-1.0]])
    o.params["b"] = np.array([0.3])
    # z1 = (1*0.5 + 2*0.25 + 0.1, 1*-1 + 2*2 - 0.2) = (1.1, 2.8)
    expected = 1 / (1 + math.exp(-1.1)) - 1 / (1 + math.exp(-2.8)) + 0.3
    out = Network([h, o]).predict(np.array([[1.0, 2.0]]))
    assert out[0] == pytest.approx(expected, abs=1e-12)


def test_sigmoid_is_stable():
    z = np.array([-800.0, 0.0, 800.0])
    assert np.array_equal(sigmoid(z), [0.0, 0.5, 1.0])


def test_zero_loss_gives_zero_gradients():
    net = Network([Dense(3, 4, "tanh", rng(1)), Dense(4, 1, "identity", rng(2))])
    X = rng(3).normal(size=(5, 3))
    y = net.predict(X)
    _, grads = loss_and_grads(net, X, y)
    assert all(np.all(g == 0) for layer in grads for g in layer.values())


def test_linear_layer_gradient_closed_form():
    d = Dense(3, 1, "identity", rng(4))
    X = rng(5).normal(size=(7, 3))
    y = rng(6).normal(size=7)
    _, grads = loss_and_grads(Network([d]), X, y)
    resid = X @ d.params["W"][:, 0] + d.params["b"][0] - y
    assert np.allclose(grads[0]["W"][:, 0], 2 / 7 * X.T @ resid, atol=1e-14)
    assert grads[0]["b"][0] == pytest.approx(2 / 7 * resid.sum(), abs=1e-14)


def test_gradcheck_linear():
    net = Network([Dense(4, 1, "identity", rng(7))])
    assert gradient_check(net, rng(8).normal(size=(6, 4)), rng(9).normal(size=6)) < 1e-8


@pytest.mark.parametrize("activation", ["sigmoid", "tanh", "relu"])
def test_gradcheck_dense(activation):
    net = Network([Dense(4, 5, activation, rng(10)), Dense(5, 3, activation, rng(11)), Dense(3, 1, "identity", rng(12))])
    X = rng(13).normal(size=(6, 4))
    assert gradient_check(net, X, rng(14).normal(size=6)) < 1e-4


@pytest.mark.parametrize("cell", [RNN, LSTM])
@pytest.mark.parametrize("sequences", [False, True])
def test_gradcheck_recurrent(cell, sequences):
    layers = [cell(3, 4, return_sequences=sequences, rng=rng(15))]
    if sequences:
        layers.append(Flatten())
        layers.append(Dense(3 * 4, 1, "identity", rng(16)))
    else:
        layers.append(Dense(4, 1, "identity", rng(16)))
    X = rng(17).normal(size=(4, 3, 3))
    assert gradient_check(Network(layers), X, rng(18).normal(size=4)) < 1e-4


@pytest.mark.parametrize("stride", [1, 2])
def test_gradcheck_conv(stride):
    conv = Conv1D(2, 3, 3, stride=stride, rng=rng(19))
    L_out = conv.output_shape((7, 2))[0]
    net = Network([conv, Flatten(), Dense(L_out * 3, 1, "identity", rng(20))])
    X = rng(21).normal(size=(3, 7, 2))
    assert gradient_check(net, X, rng(22).normal(size=3)) < 1e-4


def test_backward_rejects_wrong_cache():
    net = Network([Dense(2, 1)])
    with pytest.raises(ValueError, match="cache"):
        net.backward([], np.zeros((1, 1)))


def test_mse_multi_output():
    pred = np.array([[1.0, 2.0], [3.0, 4.0]])
    loss, g = mse_loss(pred, np.zeros((2, 2)))
    assert loss == 7.5
    assert np.array_equal(g, pred / 2)


def _params(value):
    return [{"p": np.array([value])}]


def test_sgd_plain_and_zero_lr():
    p = _params(1.0)
    sgd_step(p, [{"p": np.array([0.5])}], TrainConfig(learning_rate=0.1, momentum=0.0))
    assert p[0]["p"][0] == 1.0 - 0.1 * 0.5
    q = _params(1.0)
    sgd_step(q, [{"p": np.array([0.5])}], TrainConfig(learning_rate=0.0))
    assert q[0]["p"][0] == 1.0


def test_sgd_two_momentum_steps():
    p = _params(1.0)
    cfg = TrainConfig(learning_rate=0.1, momentum=0.9)
    g = [{"p": np.array([0.5])}]
    v = sgd_step(p, g, cfg)
    sgd_step(p, g, cfg, v)
    # v1 = -0.05, p1 = 0.95; v2 = 0.9 * -0.05 - 0.05 = -0.095, p2 = 0.855
    assert p[0]["p"][0] == pytest.approx(0.855, abs=1e-12)


def test_sgd_shape_mismatch():
    with pytest.raises(ValueError, match="shape"):
        sgd_step(_params(1.0), [{"p": np.zeros(2)}], TrainConfig())


@pytest.mark.parametrize(
    "kw", [{"epochs": 0}, {"batch_size": 0}, {"learning_rate": -1}, {"momentum": 1.0}, {"loss": "mae"}]
)
def test_train_config_validation(kw):
    with pytest.raises(ValueError):
        TrainConfig(**kw)


def toy_regression(n=64, seed=0):
    r = rng(seed)
    X = r.normal(size=(n, 3))
    return X, X @ np.array([0.5, -1.0, 2.0]) + 0.25


def test_training_converges():
    X, y = toy_regression()
    net = Network([Dense(3, 1, "identity", rng(1))])
    res = train_epochs(net, X, y, TrainConfig(epochs=400, batch_size=16, learning_rate=0.01))
    assert res.loss_trace[-1] < 0.01 * res.loss_trace[0]


def test_one_epoch_zero_lr_is_noop():
    X, y = toy_regression()
    net = Network([Dense(3, 4, "sigmoid", rng(2)), Dense(4, 1, "identity", rng(3))])
    before = net.get_weights()
    res = train_epochs(net, X, y, TrainConfig(epochs=1, learning_rate=0.0))
    assert len(res.loss_trace) == 1
    for a, b in zip(before, net.get_weights()):
        assert all(np.array_equal(a[k], b[k]) for k in a)


def test_training_is_deterministic():
    X, y = toy_regression()
    traces = []
    for _ in range(2):
        net = Network([Dense(3, 5, "tanh", rng(4)), Dense(5, 1, "identity", rng(5))])
        traces.append(train_epochs(net, X, y, TrainConfig(epochs=20, seed=9)).loss_trace)
    assert traces[0] == traces[1]


def test_full_batch_small_lr_is_monotone():
    X, y = toy_regression()
    net = Network([Dense(3, 4, "tanh", rng(6)), Dense(4, 1, "identity", rng(7))])
    res = train_epochs(net, X, y, TrainConfig(epochs=50, batch_size=len(y), learning_rate=0.01, momentum=0.0))
    assert all(b <= a for a, b in zip(res.loss_trace, res.loss_trace[1:]))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_raises_non_finite():
    X, y = toy_regression()
    net = Network([Dense(3, 1, "identity", rng(8))])
    with pytest.raises(NonFiniteError, match="non-finite"):
        train_epochs(net, X * 1e3, y * 1e3, TrainConfig(epochs=50, learning_rate=10.0))


def test_snapshots_match_shorter_run():
    X, y = toy_regression()
    make = lambda: Network([Dense(3, 4, "sigmoid", rng(10)), Dense(4, 1, "identity", rng(11))])
    long_net, short_net = make(), make()
    res = train_epochs(long_net, X, y, TrainConfig(epochs=30, seed=2), snapshot_epochs=(10,))
    train_epochs(short_net, X, y, TrainConfig(epochs=10, seed=2))
    snap, seconds = res.snapshots[10]
    assert 0 < seconds <= res.seconds
    for a, b in zip(snap, short_net.get_weights()):
        assert all(np.array_equal(a[k], b[k]) for k in a)


def test_trace_csv():
    X, y = toy_regression()
    res = train_epochs(Network([Dense(3, 1, rng=rng())]), X, y, TrainConfig(epochs=3))
    lines = res.trace_csv().splitlines()
    assert lines[0] == "epoch,loss,seconds_elapsed" and len(lines) == 4


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 1000))
def test_set_weights_round_trip(n_in, n_out, seed):
    net = Network([Dense(n_in, n_out, "tanh", rng(seed))])
    other = Network([Dense(n_in, n_out, "tanh", rng(seed + 1))])
    other.set_weights(net.get_weights())
    x = rng(seed).normal(size=(2, n_in))
    assert np.array_equal(net.forward(x)[0], other.forward(x)[0])
    assert net.n_params() == n_in * n_out + n_out
