"""Neural forecasters: MLP, deep dense nets with and without stacked-autoencoder
pretraining, RNN, LSTM, CNN and CNN-LSTM.

Dense kinds see one standardized feature row per prediction. Recurrent and
convolutional kinds see the last ``sequence_length`` rows, built inside one
partition so no sequence ever straddles a split boundary.
"""

from __future__ import annotations

import copy
import time
from dataclasses import asdict, dataclass, replace

import numpy as np

from loadcast.features import N_FEATURES, FeatureMatrix, Scaler, apply_scaler, fit_scaler, invert_target
from loadcast.forecaster import Forecaster
from loadcast.nn.conv import Conv1D
from loadcast.nn.core import Dense, Flatten, Layer, Network, NonFiniteError, TrainConfig, train_epochs
from loadcast.nn.recurrent import LSTM, RNN

KINDS = ("mlp", "dnn_w", "dnn_sa", "rnn", "rnn_lstm", "cnn", "cnn_lstm")
SEQUENCE_KINDS = frozenset({"rnn", "rnn_lstm", "cnn", "cnn_lstm"})
DENSE_KINDS = frozenset({"mlp", "dnn_w", "dnn_sa"})
PYRAMID = (64, 32, 16, 12, 8)


@dataclass(frozen=True)
class ArchitectureSpec:
    """Shape of one neural model.

    ``hidden_layers`` counts hidden layers only, so ``dnn_w`` with 3 has three
    hidden dense layers plus the output head. For recurrent kinds
    ``widths[0]`` is the hidden state size; for ``cnn_lstm`` ``lstm_units``
    sizes the LSTM that reads the conv feature maps.
    """

    kind: str
    hidden_layers: int = 1
    widths: tuple[int, ...] = (100,)
    activation: str = "sigmoid"
    sequence_length: int = 8
    conv_kernels: tuple[int, ...] = (8, 8)
    kernel_size: int = 3
    conv_activation: str = "tanh"
    lstm_units: int = 16
    pretrain_epochs: int = 20
    pretrain_learning_rate: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        object.__setattr__(self, "conv_kernels", tuple(int(k) for k in self.conv_kernels))
        if self.kind not in KINDS:
            raise ValueError(f"unknown architecture kind {self.kind!r}")
        if self.kind in ("dnn_w", "dnn_sa") and self.hidden_layers not in (3, 4, 5):
            raise ValueError(f"{self.kind} needs 3, 4 or 5 hidden layers, got {self.hidden_layers}")
        if self.kind in DENSE_KINDS and len(self.widths) != self.hidden_layers:
            raise ValueError(f"{len(self.widths)} widths given for {self.hidden_layers} hidden layers")
        if self.kind == "mlp" and self.hidden_layers != 1:
            raise ValueError("mlp has exactly one hidden layer")
        if any(w < 1 for w in self.widths):
            raise ValueError("widths must be positive")
        if self.sequence_length < 1:
            raise ValueError("sequence_length must be >= 1")
        if self.kind in ("cnn", "cnn_lstm"):
            min_len = 1 + len(self.conv_kernels) * (self.kernel_size - 1)
            if self.sequence_length < min_len:
                raise ValueError(f"sequence_length {self.sequence_length} too short for the conv stack (need {min_len})")

    @property
    def is_sequence(self) -> bool:
        return self.kind in SEQUENCE_KINDS

    @property
    def label(self) -> str:
        names = {"mlp": "MLP", "dnn_w": "DNN-W", "dnn_sa": "DNN-SA", "rnn": "RNN", "rnn_lstm": "RNN-LSTM",
                 "cnn": "CNN", "cnn_lstm": "CNN-LSTM"}
        base = names[self.kind]
        return f"{base}{self.hidden_layers}" if self.kind in ("dnn_w", "dnn_sa") else base

    def to_dict(self) -> dict:
        d = asdict(self)
        d["widths"] = list(self.widths)
        d["conv_kernels"] = list(self.conv_kernels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ArchitectureSpec":
        return cls(**d)


def default_spec(kind: str, hidden_layers: int | None = None, **overrides) -> ArchitectureSpec:
    if kind == "mlp":
        spec = ArchitectureSpec("mlp", 1, (100,))
    elif kind in ("dnn_w", "dnn_sa"):
        k = 3 if hidden_layers is None else hidden_layers
        spec = ArchitectureSpec(kind, k, PYRAMID[:k])
    elif kind in ("rnn", "rnn_lstm"):
        spec = ArchitectureSpec(kind, 1, (32,), activation="tanh")
    elif kind in ("cnn", "cnn_lstm"):
        spec = ArchitectureSpec(kind, 1, (), activation="tanh")
    else:
        raise ValueError(f"unknown architecture kind {kind!r}")
    return replace(spec, **overrides) if overrides else spec


def build_network(spec: ArchitectureSpec, seed: int, n_features: int = N_FEATURES) -> Network:
    """Fresh network for ``spec``; initial weights depend only on ``(spec, seed)``."""
    rng = np.random.default_rng(seed)
    layers: list[Layer] = []
    if spec.kind in DENSE_KINDS:
        width = n_features
        for w in spec.widths:
            layers.append(Dense(width, w, spec.activation, rng))
            width = w
    elif spec.kind == "rnn":
        layers.append(RNN(n_features, spec.widths[0], rng=rng))
        width = spec.widths[0]
    elif spec.kind == "rnn_lstm":
        layers.append(LSTM(n_features, spec.widths[0], rng=rng))
        width = spec.widths[0]
    else:
        channels, length = n_features, spec.sequence_length
        for k in spec.conv_kernels:
            conv = Conv1D(channels, k, spec.kernel_size, activation=spec.conv_activation, rng=rng)
            length, channels = conv.output_shape((length, channels))
            layers.append(conv)
        if spec.kind == "cnn":
            layers.append(Flatten())
            width = length * channels
        else:
            layers.append(LSTM(channels, spec.lstm_units, rng=rng))
            width = spec.lstm_units
    layers.append(Dense(width, 1, "identity", rng))
    return Network(layers)


def parameter_count(spec: ArchitectureSpec, n_features: int = N_FEATURES) -> int:
    return build_network(spec, 0, n_features).n_params()


# --------------------------------------------------------------------------
# sequences


@dataclass(frozen=True)
class SequenceBatch:
    """``inputs`` (n, L, F) windows ending at each target row; ``targets`` (n,)."""

    inputs: np.ndarray
    targets: np.ndarray
    timestamps: np.ndarray


def make_sequences(m: FeatureMatrix, length: int) -> SequenceBatch:
    """Windows of ``length`` consecutive rows of one partition.

    The window ending at row ``t`` stacks rows ``t-L+1 .. t`` and takes row
    ``t``'s target, so the first ``L - 1`` rows yield no sequence.
    """
    n = len(m)
    if n < length:
        raise ValueError(f"partition has {n} rows, shorter than sequence length {length}")
    win = np.lib.stride_tricks.sliding_window_view(m.X, length, axis=0)  # (n-L+1, F, L)
    inputs = np.ascontiguousarray(win.transpose(0, 2, 1))
    return SequenceBatch(inputs, m.y[length - 1 :].copy(), m.timestamps[length - 1 :])


# --------------------------------------------------------------------------
# stacked autoencoder pretraining


@dataclass
class PretrainResult:
    encoders: list[Dense]
    reconstruction_traces: list[list[float]]
    seconds: float


def pretrain_stacked_autoencoder(
    X: np.ndarray,
    widths,
    cfg: TrainConfig,
    activation: str = "sigmoid",
) -> PretrainResult:
    """Greedy layer-wise autoencoder training.

    Layer ``i`` is an encoder ``Dense(in, widths[i], activation)`` paired with a
    linear decoder back to ``in``, trained with MSE to reconstruct the codes of
    layer ``i - 1`` (the raw inputs for the first layer). Decoders are thrown
    away; the trained encoders are returned in order.
    """
    rng = np.random.default_rng([cfg.seed, 7])
    H = np.asarray(X, dtype=float)
    encoders, traces = [], []
    t0 = time.perf_counter()
    for i, w in enumerate(widths):
        enc = Dense(H.shape[1], w, activation, rng)
        dec = Dense(w, H.shape[1], "identity", rng)
        ae = Network([enc, dec])
        res = train_epochs(ae, H, H, replace(cfg, seed=cfg.seed + 1000 * (i + 1)))
        if not np.all(np.isfinite(res.loss_trace)):
            raise NonFiniteError(f"non-finite reconstruction loss in layer {i}")
        traces.append(res.loss_trace)
        encoders.append(enc)
        H = enc.forward(H)[0]
    return PretrainResult(encoders, traces, time.perf_counter() - t0)


# --------------------------------------------------------------------------
# forecaster


class NeuralForecaster(Forecaster):
    """Any :class:`ArchitectureSpec` behind the shared forecaster contract.

    Inputs and target are standardized with a scaler fitted on the training
    partition; predictions are mapped back to kW. ``train_seconds`` covers
    pretraining plus supervised training.
    """

    kind = "neural"

    def __init__(self, spec: ArchitectureSpec, cfg: TrainConfig = TrainConfig()):
        super().__init__()
        self.spec = spec
        self.cfg = cfg
        self.network = build_network(spec, cfg.seed)
        self.scaler: Scaler | None = None
        self.loss_trace: list[float] = []
        self.pretrain: PretrainResult | None = None
        self.pretrained_weights: list[dict] | None = None
        self.snapshots: dict[int, tuple[list[dict], float]] = {}

    @property
    def warmup(self) -> int:
        return self.spec.sequence_length - 1 if self.spec.is_sequence else 0

    @property
    def name(self) -> str:
        return self.spec.label

    def _inputs(self, m: FeatureMatrix) -> tuple[np.ndarray, np.ndarray]:
        if self.spec.is_sequence:
            seq = make_sequences(m, self.spec.sequence_length)
            return seq.inputs, seq.targets
        return m.X, m.y

    def fit(self, train, validation=None, snapshot_epochs=()):
        self.scaler = fit_scaler(train, scale_target=True)
        X, y = self._inputs(apply_scaler(train, self.scaler))
        pre_seconds = 0.0
        if self.spec.kind == "dnn_sa":
            pcfg = replace(
                self.cfg,
                epochs=self.spec.pretrain_epochs,
                learning_rate=self.spec.pretrain_learning_rate or self.cfg.learning_rate,
            )
            self.pretrain = pretrain_stacked_autoencoder(X, self.spec.widths, pcfg, self.spec.activation)
            for layer, enc in zip(self.network.layers, self.pretrain.encoders):
                layer.params["W"] = enc.params["W"].copy()
                layer.params["b"] = enc.params["b"].copy()
            self.pretrained_weights = self.network.get_weights()
            pre_seconds = self.pretrain.seconds
        res = train_epochs(self.network, X, y, self.cfg, snapshot_epochs=snapshot_epochs)
        self.loss_trace = res.loss_trace
        self.train_result = res
        self.snapshots = {e: (w, pre_seconds + s) for e, (w, s) in res.snapshots.items()}
        self.train_seconds = pre_seconds + res.seconds
        return self

    def at_epoch(self, epoch: int) -> "NeuralForecaster":
        """The model as it stood after ``epoch`` (must have been snapshotted)."""
        if epoch == self.cfg.epochs:
            return self
        if epoch not in self.snapshots:
            raise KeyError(f"no snapshot for epoch {epoch}")
        weights, seconds = self.snapshots[epoch]
        other = copy.copy(self)
        other.network = self.network.copy()
        other.network.set_weights(weights)
        other.cfg = replace(self.cfg, epochs=epoch)
        other.loss_trace = self.loss_trace[:epoch]
        other.snapshots = {}
        other.train_seconds = seconds
        return other

    def predict_scaled(self, X: np.ndarray, batch_size: int = 2048) -> np.ndarray:
        out = [self.network.predict(X[i : i + batch_size]) for i in range(0, len(X), batch_size)]
        return np.concatenate(out) if out else np.empty(0)

    def predict(self, m):
        self._require_fitted()
        X, _ = self._inputs(apply_scaler(m, self.scaler))
        return invert_target(self.predict_scaled(X), self.scaler)

    def to_dict(self):
        return {
            "spec": self.spec.to_dict(),
            "train_config": asdict(self.cfg),
            "scaler": self.scaler.to_dict(),
            "layers": [
                {"type": type(layer).__name__, "config": layer.config(),
                 "params": {k: v.tolist() for k, v in layer.params.items()}}
                for layer in self.network.layers
            ],
        }

    @classmethod
    def from_dict(cls, d):
        f = cls(ArchitectureSpec.from_dict(d["spec"]), TrainConfig(**d["train_config"]))
        f.scaler = Scaler.from_dict(d["scaler"])
        f.network.set_weights([{k: np.asarray(v) for k, v in layer["params"].items()} for layer in d["layers"]])
        f.train_seconds = 0.0
        return f
