"""Elman RNN and LSTM layers over (batch, time, features) input.

Both layers return the final hidden state by default, or the whole hidden
sequence with ``return_sequences=True``. Gate columns in the LSTM weight
matrices are ordered input, forget, output, candidate.
"""

from __future__ import annotations

import numpy as np

from loadcast.nn.core import Layer, glorot_uniform, sigmoid


def rnn_step(params, h_prev, x_t):
    """``h_t = tanh(x_t Wx + h_prev Wh + b)``; returns ``h_t`` twice (state, output)."""
    h = np.tanh(x_t @ params["Wx"] + h_prev @ params["Wh"] + params["b"])
    return h, h


def lstm_step(params, h_prev, c_prev, x_t):
    """One LSTM step. Returns ``(h_t, c_t, gates)`` with gates ``(i, f, o, g)``."""
    H = h_prev.shape[-1]
    a = x_t @ params["Wx"] + h_prev @ params["Wh"] + params["b"]
    i = sigmoid(a[..., :H])
    f = sigmoid(a[..., H : 2 * H])
    o = sigmoid(a[..., 2 * H : 3 * H])
    g = np.tanh(a[..., 3 * H :])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c, (i, f, o, g)


class _Recurrent(Layer):
    def __init__(self, n_in: int, n_hidden: int, return_sequences: bool = False):
        self.n_in, self.n_hidden, self.return_sequences = n_in, n_hidden, return_sequences

    def _check(self, x):
        if x.ndim != 3 or x.shape[2] != self.n_in:
            raise ValueError(f"{type(self).__name__} expects (batch, time, {self.n_in}) input, got {x.shape}")

    def _dh_per_step(self, dout, T):
        if self.return_sequences:
            return dout
        dh = np.zeros(dout.shape[:1] + (T, self.n_hidden))
        dh[:, -1] = dout
        return dh

    def config(self):
        return {"n_in": self.n_in, "n_hidden": self.n_hidden, "return_sequences": self.return_sequences}

    def output_shape(self, input_shape):
        T = input_shape[0]
        return (T, self.n_hidden) if self.return_sequences else (self.n_hidden,)


class RNN(_Recurrent):
    def __init__(self, n_in: int, n_hidden: int, return_sequences: bool = False, rng=None):
        super().__init__(n_in, n_hidden, return_sequences)
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = n_in + n_hidden
        self.params = {
            "Wx": glorot_uniform(rng, (n_in, n_hidden), fan_in, n_hidden),
            "Wh": glorot_uniform(rng, (n_hidden, n_hidden), fan_in, n_hidden),
            "b": np.zeros(n_hidden),
        }

    def forward(self, x):
        self._check(x)
        B, T, _ = x.shape
        hs = np.zeros((B, T + 1, self.n_hidden))
        for t in range(T):
            hs[:, t + 1], _ = rnn_step(self.params, hs[:, t], x[:, t])
        out = hs[:, 1:] if self.return_sequences else hs[:, -1]
        return out, (x, hs)

    def backward(self, cache, dout):
        x, hs = cache
        B, T, _ = x.shape
        Wx, Wh = self.params["Wx"], self.params["Wh"]
        dWx, dWh, db = np.zeros_like(Wx), np.zeros_like(Wh), np.zeros(self.n_hidden)
        dx = np.empty_like(x)
        dh_out = self._dh_per_step(dout, T)
        dh_next = np.zeros((B, self.n_hidden))
        for t in range(T - 1, -1, -1):
            h = hs[:, t + 1]
            da = (dh_out[:, t] + dh_next) * (1.0 - h * h)
            dWx += x[:, t].T @ da
            dWh += hs[:, t].T @ da
            db += da.sum(axis=0)
            dx[:, t] = da @ Wx.T
            dh_next = da @ Wh.T
        return dx, {"Wx": dWx, "Wh": dWh, "b": db}


class LSTM(_Recurrent):
    def __init__(self, n_in: int, n_hidden: int, return_sequences: bool = False, rng=None, forget_bias: float = 1.0):
        super().__init__(n_in, n_hidden, return_sequences)
        rng = rng if rng is not None else np.random.default_rng(0)
        H = n_hidden
        fan_in = n_in + H
        b = np.zeros(4 * H)
        b[H : 2 * H] = forget_bias
        self.params = {
            "Wx": glorot_uniform(rng, (n_in, 4 * H), fan_in, H),
            "Wh": glorot_uniform(rng, (H, 4 * H), fan_in, H),
            "b": b,
        }

    def forward(self, x):
        self._check(x)
        B, T, _ = x.shape
        H = self.n_hidden
        hs = np.zeros((B, T + 1, H))
        cs = np.zeros((B, T + 1, H))
        gates = []
        for t in range(T):
            hs[:, t + 1], cs[:, t + 1], gt = lstm_step(self.params, hs[:, t], cs[:, t], x[:, t])
            gates.append(gt)
        out = hs[:, 1:] if self.return_sequences else hs[:, -1]
        return out, (x, hs, cs, gates)

    def backward(self, cache, dout):
        x, hs, cs, gates = cache
        B, T, _ = x.shape
        H = self.n_hidden
        Wx, Wh = self.params["Wx"], self.params["Wh"]
        dWx, dWh, db = np.zeros_like(Wx), np.zeros_like(Wh), np.zeros(4 * H)
        dx = np.empty_like(x)
        dh_out = self._dh_per_step(dout, T)
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        da = np.empty((B, 4 * H))
        for t in range(T - 1, -1, -1):
            i, f, o, g = gates[t]
            tc = np.tanh(cs[:, t + 1])
            dh = dh_out[:, t] + dh_next
            dc = dh * o * (1.0 - tc * tc) + dc_next
            da[:, :H] = dc * g * i * (1.0 - i)
            da[:, H : 2 * H] = dc * cs[:, t] * f * (1.0 - f)
            da[:, 2 * H : 3 * H] = dh * tc * o * (1.0 - o)
            da[:, 3 * H :] = dc * i * (1.0 - g * g)
            dWx += x[:, t].T @ da
            dWh += hs[:, t].T @ da
            db += da.sum(axis=0)
            dx[:, t] = da @ Wx.T
            dh_next = da @ Wh.T
            dc_next = dc * f
        return dx, {"Wx": dWx, "Wh": dWh, "b": db}
