"""Dense layers, backpropagation, SGD with momentum and a finite-difference checker.

Everything is float64 numpy. A layer's ``forward`` returns its output and a
cache; ``backward`` consumes that cache and the output gradient and returns the
input gradient together with a dict of parameter gradients keyed like
``layer.params``.
"""

from __future__ import annotations

import copy
import time
from dataclasses import dataclass, field

import numpy as np


class NonFiniteError(FloatingPointError):
    """A forward pass, loss or update produced NaN or Inf."""


def check_finite(a: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise NonFiniteError(f"non-finite values in {what}")
    return a


def sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# name -> (f(z), f'(z) expressed through z and a = f(z))
ACTIVATIONS = {
    "sigmoid": (sigmoid, lambda z, a: a * (1.0 - a)),
    "tanh": (np.tanh, lambda z, a: 1.0 - a * a),
    "relu": (lambda z: np.maximum(z, 0.0), lambda z, a: (z > 0).astype(z.dtype)),
    "identity": (lambda z: z, lambda z, a: np.ones_like(z)),
}


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    r = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-r, r, size=shape)


class Layer:
    """Base class. Subclasses fill ``self.params`` with float arrays."""

    params: dict[str, np.ndarray]

    def forward(self, x):
        raise NotImplementedError

    def backward(self, cache, dout):
        raise NotImplementedError

    def config(self) -> dict:
        raise NotImplementedError

    def output_shape(self, input_shape: tuple) -> tuple:
        raise NotImplementedError

    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, activation: str = "identity", rng: np.random.Generator | None = None):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.n_in, self.n_out, self.activation = n_in, n_out, activation
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params = {
            "W": glorot_uniform(rng, (n_in, n_out), n_in, n_out),
            "b": np.zeros(n_out),
        }

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ValueError(f"Dense expects (batch, {self.n_in}) input, got {x.shape}")
        z = x @ self.params["W"] + self.params["b"]
        a = ACTIVATIONS[self.activation][0](z)
        return a, (x, z, a)

    def backward(self, cache, dout):
        x, z, a = cache
        dz = dout * ACTIVATIONS[self.activation][1](z, a)
        grads = {"W": x.T @ dz, "b": dz.sum(axis=0)}
        return dz @ self.params["W"].T, grads

    def config(self):
        return {"n_in": self.n_in, "n_out": self.n_out, "activation": self.activation}

    def output_shape(self, input_shape):
        return (self.n_out,)


class Flatten(Layer):
    def __init__(self):
        self.params = {}

    def forward(self, x):
        return x.reshape(len(x), -1), x.shape

    def backward(self, cache, dout):
        return dout.reshape(cache), {}

    def config(self):
        return {}

    def output_shape(self, input_shape):
        return (int(np.prod(input_shape)),)


class Network:
    """A plain stack of layers ending in a single-output regression head."""

    def __init__(self, layers: list[Layer]):
        self.layers = list(layers)

    def forward(self, x):
        caches = []
        out = x
        for layer in self.layers:
            out, cache = layer.forward(out)
            caches.append(cache)
        check_finite(out, "network output")
        return out, caches

    def predict(self, x) -> np.ndarray:
        return self.forward(x)[0].reshape(len(x))

    def backward(self, caches, dout) -> list[dict[str, np.ndarray]]:
        if len(caches) != len(self.layers):
            raise ValueError(f"cache holds {len(caches)} layers, network has {len(self.layers)}")
        grads: list[dict[str, np.ndarray]] = [None] * len(self.layers)
        for i in range(len(self.layers) - 1, -1, -1):
            dout, grads[i] = self.layers[i].backward(caches[i], dout)
        return grads

    def parameters(self) -> list[dict[str, np.ndarray]]:
        return [layer.params for layer in self.layers]

    def get_weights(self) -> list[dict[str, np.ndarray]]:
        return [{k: v.copy() for k, v in layer.params.items()} for layer in self.layers]

    def set_weights(self, weights: list[dict[str, np.ndarray]]) -> None:
        if len(weights) != len(self.layers):
            raise ValueError("weight list does not match the layer stack")
        for layer, w in zip(self.layers, weights):
            for k, v in w.items():
                if layer.params[k].shape != np.shape(v):
                    raise ValueError(f"shape mismatch for {type(layer).__name__}.{k}")
                layer.params[k] = np.array(v, dtype=float)

    def n_params(self) -> int:
        return sum(layer.n_params() for layer in self.layers)

    def copy(self) -> "Network":
        return copy.deepcopy(self)


def mse_loss(pred: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over all elements and its gradient w.r.t. ``pred``.

    A 1-D ``y`` is matched against a ``(batch, 1)`` prediction.
    """
    diff = pred - y.reshape(pred.shape)
    loss = float(np.mean(diff * diff))
    return loss, (2.0 / diff.size) * diff


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 32
    learning_rate: float = 0.01
    momentum: float = 0.9
    seed: int = 0
    loss: str = "mse"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be > 0")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.loss != "mse":
            raise ValueError(f"unsupported loss {self.loss!r}")


def sgd_step(params, grads, cfg: TrainConfig, velocity=None):
    """In-place momentum update: ``v <- m*v - lr*g; p <- p + v``.

    ``params`` and ``grads`` are parallel lists of dicts. Returns the velocity
    state (created on first use) for the next call.
    """
    if velocity is None:
        velocity = [{k: np.zeros_like(v) for k, v in p.items()} for p in params]
    lr, mom = cfg.learning_rate, cfg.momentum
    for p, g, v in zip(params, grads, velocity):
        for k in p:
            if p[k].shape != g[k].shape:
                raise ValueError(f"gradient shape {g[k].shape} does not match parameter {k} {p[k].shape}")
            v[k] *= mom
            v[k] -= lr * g[k]
            p[k] += v[k]
    return velocity


@dataclass
class TrainResult:
    loss_trace: list[float]
    seconds: float
    epoch_seconds: list[float] = field(default_factory=list)
    # epoch -> (weights, wall seconds at the end of that epoch)
    snapshots: dict[int, tuple[list[dict[str, np.ndarray]], float]] = field(default_factory=dict)

    def trace_csv(self) -> str:
        lines = ["epoch,loss,seconds_elapsed"]
        for i, (loss, s) in enumerate(zip(self.loss_trace, self.epoch_seconds), start=1):
            lines.append(f"{i},{loss!r},{s!r}")
        return "\n".join(lines) + "\n"


def train_epochs(
    net: Network,
    X: np.ndarray,
    y: np.ndarray,
    cfg: TrainConfig,
    *,
    snapshot_epochs=(),
) -> TrainResult:
    """Mini-batch SGD for exactly ``cfg.epochs`` passes over shuffled data.

    The loss recorded per epoch is the sample-weighted mean of the batch
    losses seen during that epoch. ``snapshot_epochs`` lists epochs after
    which the weights and elapsed time are copied out; the copy time is
    excluded from the clock.
    """
    n = len(y)
    rng = np.random.default_rng(cfg.seed)
    params = net.parameters()
    velocity = None
    trace: list[float] = []
    epoch_seconds: list[float] = []
    snapshots = {}
    wanted = set(snapshot_epochs)
    paused = 0.0
    t0 = time.perf_counter()
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            pred, caches = net.forward(X[idx])
            loss, dout = mse_loss(pred, y[idx])
            grads = net.backward(caches, dout)
            velocity = sgd_step(params, grads, cfg, velocity)
            total += loss * len(idx)
        epoch_loss = total / n
        if not np.isfinite(epoch_loss):
            raise NonFiniteError(f"non-finite training loss at epoch {epoch}")
        trace.append(epoch_loss)
        now = time.perf_counter() - t0 - paused
        epoch_seconds.append(now)
        if epoch in wanted:
            t_copy = time.perf_counter()
            snapshots[epoch] = (net.get_weights(), now)
            paused += time.perf_counter() - t_copy
    seconds = time.perf_counter() - t0 - paused
    return TrainResult(trace, seconds, epoch_seconds, snapshots)


def evaluate_mse(net: Network, X: np.ndarray, y: np.ndarray, batch_size: int = 1024) -> float:
    total = 0.0
    for start in range(0, len(y), batch_size):
        pred = net.predict(X[start : start + batch_size])
        total += float(np.sum((pred - y[start : start + batch_size]) ** 2))
    return total / len(y)


def loss_and_grads(net: Network, X, y):
    pred, caches = net.forward(X)
    loss, dout = mse_loss(pred, y)
    return loss, net.backward(caches, dout)


def gradient_check(net: Network, X: np.ndarray, y: np.ndarray, h: float = 1e-5, floor: float = 1e-6) -> float:
    """Worst elementwise relative error between backprop and central differences.

    Relative error is ``|a - n| / max(|a|, |n|, floor)`` so that gradients
    that are zero up to rounding do not blow up the ratio.
    """
    _, grads = loss_and_grads(net, X, y)
    worst = 0.0
    for params, g in zip(net.parameters(), grads):
        for k, p in params.items():
            flat = p.reshape(-1)
            gflat = g[k].reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                lp = mse_loss(net.forward(X)[0], y)[0]
                flat[i] = orig - h
                lm = mse_loss(net.forward(X)[0], y)[0]
                flat[i] = orig
                num = (lp - lm) / (2 * h)
                ana = gflat[i]
                err = abs(ana - num) / max(abs(ana), abs(num), floor)
                worst = max(worst, err)
    return worst
