"""Valid (unpadded) 1-D convolution over (batch, time, channels) input."""

from __future__ import annotations

import numpy as np

from loadcast.nn.core import ACTIVATIONS, Layer, glorot_uniform


def conv_output_length(length: int, kernel: int, stride: int = 1) -> int:
    if kernel > length:
        raise ValueError(f"kernel length {kernel} exceeds input length {length}")
    return (length - kernel) // stride + 1


def _windows(x: np.ndarray, kernel: int, stride: int) -> np.ndarray:
    # (B, L, C) -> (B, L_out, kernel, C)
    w = np.lib.stride_tricks.sliding_window_view(x, kernel, axis=1)  # (B, L-k+1, C, k)
    return w[:, ::stride].transpose(0, 1, 3, 2)


def conv1d_forward(x, kernels, bias=None, stride: int = 1, activation: str = "identity"):
    """Cross-correlate ``x`` with ``kernels``.

    Args:
        x: ``(L, C)`` or ``(B, L, C)`` input.
        kernels: ``(k, C, K)`` weights, or ``(k,)`` for one channel in and out.
        bias: ``(K,)``; zeros if omitted.

    Returns:
        Activated feature maps of shape ``(B, L_out, K)`` (batch axis dropped
        if ``x`` had none), ``L_out = (L - k) // stride + 1``.
    """
    x = np.asarray(x, dtype=float)
    kernels = np.asarray(kernels, dtype=float)
    squeeze = x.ndim == 2
    if x.ndim == 1:
        x = x[:, None]
        squeeze = True
    if squeeze:
        x = x[None]
    if kernels.ndim == 1:
        kernels = kernels[:, None, None]
    k, C, K = kernels.shape
    if x.shape[2] != C:
        raise ValueError(f"input has {x.shape[2]} channels, kernels expect {C}")
    conv_output_length(x.shape[1], k, stride)
    cols = _windows(x, k, stride)
    z = np.tensordot(cols, kernels, axes=([2, 3], [0, 1]))
    if bias is not None:
        z = z + bias
    out = ACTIVATIONS[activation][0](z)
    return out[0] if squeeze else out


class Conv1D(Layer):
    def __init__(self, n_channels: int, n_kernels: int, kernel_size: int, stride: int = 1,
                 activation: str = "tanh", rng=None):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.n_channels, self.n_kernels, self.kernel_size = n_channels, n_kernels, kernel_size
        self.stride, self.activation = stride, activation
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params = {
            "W": glorot_uniform(rng, (kernel_size, n_channels, n_kernels),
                                kernel_size * n_channels, kernel_size * n_kernels),
            "b": np.zeros(n_kernels),
        }

    def forward(self, x):
        if x.ndim != 3 or x.shape[2] != self.n_channels:
            raise ValueError(f"Conv1D expects (batch, time, {self.n_channels}) input, got {x.shape}")
        B, L, _ = x.shape
        k, C, K = self.params["W"].shape
        L_out = conv_output_length(L, k, self.stride)
        cols = _windows(x, k, self.stride).reshape(B * L_out, k * C)
        z = (cols @ self.params["W"].reshape(k * C, K) + self.params["b"]).reshape(B, L_out, K)
        a = ACTIVATIONS[self.activation][0](z)
        return a, (x.shape, cols, z, a)

    def backward(self, cache, dout):
        x_shape, cols, z, a = cache
        B, L, C = x_shape
        k, _, K = self.params["W"].shape
        L_out = z.shape[1]
        dz = (dout * ACTIVATIONS[self.activation][1](z, a)).reshape(B * L_out, K)
        W2 = self.params["W"].reshape(k * C, K)
        grads = {"W": (cols.T @ dz).reshape(k, C, K), "b": dz.sum(axis=0)}
        dcols = (dz @ W2.T).reshape(B, L_out, k, C)
        dx = np.zeros(x_shape)
        s = self.stride
        for j in range(k):
            dx[:, j : j + s * (L_out - 1) + 1 : s] += dcols[:, :, j]
        return dx, grads

    def config(self):
        return {"n_channels": self.n_channels, "n_kernels": self.n_kernels, "kernel_size": self.kernel_size,
                "stride": self.stride, "activation": self.activation}

    def output_shape(self, input_shape):
        L = input_shape[0]
        return (conv_output_length(L, self.kernel_size, self.stride), self.n_kernels)
