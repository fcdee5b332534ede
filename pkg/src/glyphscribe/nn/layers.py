"""Minimal CPU layers with hand-written backprop.

Activations are NCHW float arrays.  Each layer caches what its backward pass
needs during a training forward pass; parameters are mutated in place so the
optimizer can key its state by array identity.
"""

from __future__ import annotations

import numpy as np


def im2col(x: np.ndarray, k: int, stride: int, pad: int) -> tuple[np.ndarray, tuple[int, int]]:
    n, c, h, w = x.shape
    oh = (h + 2 * pad - k) // stride + 1
    ow = (w + 2 * pad - k) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((n, c, k, k, oh, ow), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, :, i, j] = xp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride]
    return cols.transpose(0, 4, 5, 1, 2, 3).reshape(n * oh * ow, c * k * k), (oh, ow)


def col2im(dcols: np.ndarray, x_shape: tuple, k: int, stride: int, pad: int) -> np.ndarray:
    n, c, h, w = x_shape
    oh = (h + 2 * pad - k) // stride + 1
    ow = (w + 2 * pad - k) // stride + 1
    dcols = dcols.reshape(n, oh, ow, c, k, k).transpose(0, 3, 4, 5, 1, 2)
    dxp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=dcols.dtype)
    for i in range(k):
        for j in range(k):
            dxp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += dcols[:, :, i, j]
    if pad:
        return dxp[:, :, pad:-pad, pad:-pad]
    return dxp


class Layer:
    params: dict[str, np.ndarray]
    grads: dict[str, np.ndarray]

    def __init__(self):
        self.params = {}
        self.grads = {}

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Conv2d(Layer):
    def __init__(self, c_in: int, c_out: int, k: int = 3, stride: int = 1, pad: int = 1,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        scale = np.sqrt(2.0 / (c_in * k * k))
        self.params["W"] = (rng.standard_normal((c_out, c_in * k * k)) * scale).astype(dtype)
        self.params["b"] = np.zeros(c_out, dtype=dtype)
        self.grads = {name: np.zeros_like(p) for name, p in self.params.items()}
        self.k, self.stride, self.pad = k, stride, pad
        self._cache = None

    def forward(self, x, train=False):
        cols, (oh, ow) = im2col(x, self.k, self.stride, self.pad)
        out = cols @ self.params["W"].T + self.params["b"]
        out = out.reshape(x.shape[0], oh, ow, -1).transpose(0, 3, 1, 2)
        if train:
            self._cache = (cols, x.shape)
        return out

    def backward(self, dout):
        cols, x_shape = self._cache
        n, c_out, oh, ow = dout.shape
        d2 = dout.transpose(0, 2, 3, 1).reshape(n * oh * ow, c_out)
        self.grads["W"][...] = d2.T @ cols
        self.grads["b"][...] = d2.sum(axis=0)
        dcols = d2 @ self.params["W"]
        return col2im(dcols, x_shape, self.k, self.stride, self.pad)


class ReLU(Layer):
    def __init__(self):
        super().__init__()
        self._mask = None

    def forward(self, x, train=False):
        out = np.maximum(x, 0)
        if train:
            self._mask = x > 0
        return out

    def backward(self, dout):
        return dout * self._mask


class MaxPool2(Layer):
    """2x2 max pooling; input spatial dims must be even."""

    def __init__(self):
        super().__init__()
        self._cache = None

    def forward(self, x, train=False):
        n, c, h, w = x.shape
        if h % 2 or w % 2:
            raise ValueError(f"MaxPool2 needs even spatial dims, got {(h, w)}")
        windows = x.reshape(n, c, h // 2, 2, w // 2, 2)
        out = windows.max(axis=(3, 5))
        if train:
            self._cache = (windows, out, x.shape)
        return out

    def backward(self, dout):
        windows, out, (n, c, h, w) = self._cache
        # exact-tie windows route the gradient to every maximum; with the
        # conv->ReLU->pool stacks used here those are all-zero windows whose
        # gradient the preceding ReLU drops anyway
        mask = windows == out[:, :, :, None, :, None]
        dwin = mask * dout[:, :, :, None, :, None]
        return dwin.reshape(n, c, h, w).astype(dout.dtype, copy=False)


class Flatten(Layer):
    def __init__(self):
        super().__init__()
        self._shape = None

    def forward(self, x, train=False):
        if train:
            self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator | None = None,
                 dtype=np.float32, relu_init: bool = False):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        scale = np.sqrt((2.0 if relu_init else 1.0) / n_in)
        self.params["W"] = (rng.standard_normal((n_in, n_out)) * scale).astype(dtype)
        self.params["b"] = np.zeros(n_out, dtype=dtype)
        self.grads = {name: np.zeros_like(p) for name, p in self.params.items()}
        self._x = None

    def forward(self, x, train=False):
        if train:
            self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dout):
        self.grads["W"][...] = self._x.T @ dout
        self.grads["b"][...] = dout.sum(axis=0)
        return dout @ self.params["W"].T


class L2Normalize(Layer):
    """Project row vectors onto the unit sphere: z = v / max(||v||, eps)."""

    def __init__(self, eps: float = 1e-12):
        super().__init__()
        self.eps = eps
        self._cache = None

    def forward(self, x, train=False):
        norm = np.maximum(np.linalg.norm(x, axis=1, keepdims=True), self.eps)
        z = x / norm
        if train:
            self._cache = (z, norm)
        return z

    def backward(self, dout):
        z, norm = self._cache
        return (dout - z * np.sum(z * dout, axis=1, keepdims=True)) / norm


class Sequential:
    def __init__(self, layers: list[Layer]):
        self.layers = layers

    def forward(self, x, train=False):
        for layer in self.layers:
            x = layer.forward(x, train=train)
        return x

    def backward(self, dout):
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def param_pairs(self) -> list[tuple[np.ndarray, np.ndarray]]:
        pairs = []
        for layer in self.layers:
            for name in sorted(layer.params):
                pairs.append((layer.params[name], layer.grads[name]))
        return pairs

    def get_state(self) -> list[np.ndarray]:
        return [p.copy() for p, _ in self.param_pairs()]

    def set_state(self, state: list[np.ndarray]) -> None:
        # write into the existing arrays so optimizer state stays attached
        for (p, _), saved in zip(self.param_pairs(), state):
            p[...] = saved

    def weight_bytes(self) -> bytes:
        return b"".join(np.ascontiguousarray(p).tobytes() for p, _ in self.param_pairs())
