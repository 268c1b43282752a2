"""A small trainable feature extractor: dense, convolution and sorted-weight pooling.

Tensors are batched and channel-last: images are (N, H, W, D), vectors (N, F).
An empty network is the pass-through used for precomputed features.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import ShapeMismatch, ValidationError

ACTIVATIONS = ("identity", "relu", "tanh")


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    return z


def _activation_grad(z: np.ndarray, out: np.ndarray, kind: str, g: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return g * (z > 0)
    if kind == "tanh":
        return g * (1.0 - out**2)
    return g


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    kind = "layer"

    def output_shape(self, input_shape: tuple) -> tuple:
        raise NotImplementedError

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def forward(self, z: np.ndarray) -> tuple[np.ndarray, Any]:
        raise NotImplementedError

    def backward(self, cache, g: np.ndarray) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass
class Dense(Layer):
    weight: np.ndarray  # (in, out)
    bias: np.ndarray  # (out,)
    activation: str = "identity"
    kind = "dense"

    def __post_init__(self):
        self.weight = np.array(self.weight, dtype=float, ndmin=2)
        self.bias = np.array(self.bias, dtype=float, ndmin=1)
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"unknown activation {self.activation!r}")

    @classmethod
    def create(cls, n_in: int, n_out: int, activation: str, rng: np.random.Generator) -> "Dense":
        return cls(glorot_uniform(rng, (n_in, n_out), n_in, n_out), np.zeros(n_out), activation)

    def output_shape(self, input_shape):
        if input_shape != (self.weight.shape[0],):
            raise ShapeMismatch(f"dense layer expects ({self.weight.shape[0]},), got {input_shape}")
        return (self.weight.shape[1],)

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, z):
        if z.ndim != 2 or z.shape[1] != self.weight.shape[0]:
            raise ShapeMismatch(f"dense layer got input of shape {z.shape}")
        pre = z @ self.weight + self.bias
        out = _activate(pre, self.activation)
        return out, (z, pre, out)

    def backward(self, cache, g):
        z, pre, out = cache
        g = _activation_grad(pre, out, self.activation, g)
        return g @ self.weight.T, {"weight": z.T @ g, "bias": g.sum(axis=0)}

    def to_dict(self):
        return {"type": "dense", "activation": self.activation,
                "weight": self.weight.tolist(), "bias": self.bias.tolist()}


@dataclass
class Conv2D(Layer):
    """``c^j = f(b^j + sum_i w^{i,j} * z^i)`` with valid padding."""

    kernel: np.ndarray  # (a, b, D, e)
    bias: np.ndarray  # (e,)
    stride: int = 1
    activation: str = "relu"
    kind = "conv"

    def __post_init__(self):
        self.kernel = np.array(self.kernel, dtype=float)
        self.bias = np.array(self.bias, dtype=float, ndmin=1)
        if self.kernel.ndim != 4 or self.bias.shape != (self.kernel.shape[3],):
            raise ValidationError("kernel must be (a, b, D, e) with one bias per output channel")
        if self.stride < 1:
            raise ValidationError("stride must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"unknown activation {self.activation!r}")

    @classmethod
    def create(cls, a: int, b: int, d_in: int, e: int, stride: int, activation: str,
               rng: np.random.Generator) -> "Conv2D":
        k = glorot_uniform(rng, (a, b, d_in, e), a * b * d_in, a * b * e)
        return cls(k, np.zeros(e), stride, activation)

    def output_shape(self, input_shape):
        a, b, d_in, e = self.kernel.shape
        if len(input_shape) != 3 or input_shape[2] != d_in:
            raise ShapeMismatch(f"conv layer expects (H, W, {d_in}), got {input_shape}")
        H, W, _ = input_shape
        if H < a or W < b:
            raise ShapeMismatch(f"kernel {a}x{b} larger than input {H}x{W}")
        r = self.stride
        return ((H - a) // r + 1, (W - b) // r + 1, e)

    def params(self):
        return {"kernel": self.kernel, "bias": self.bias}

    def _window(self, z, u, v, Ho, Wo):
        r = self.stride
        return z[:, u:u + r * (Ho - 1) + 1:r, v:v + r * (Wo - 1) + 1:r, :]

    def forward(self, z):
        if z.ndim != 4:
            raise ShapeMismatch(f"conv layer needs (N, H, W, D) input, got {z.shape}")
        Ho, Wo, e = self.output_shape(z.shape[1:])
        a, b = self.kernel.shape[:2]
        pre = np.broadcast_to(self.bias, (z.shape[0], Ho, Wo, e)).copy()
        for u in range(a):
            for v in range(b):
                pre += self._window(z, u, v, Ho, Wo) @ self.kernel[u, v]
        out = _activate(pre, self.activation)
        return out, (z, pre, out)

    def backward(self, cache, g):
        z, pre, out = cache
        g = _activation_grad(pre, out, self.activation, g)
        Ho, Wo = g.shape[1:3]
        a, b = self.kernel.shape[:2]
        dk = np.zeros_like(self.kernel)
        dz = np.zeros_like(z)
        r = self.stride
        for u in range(a):
            for v in range(b):
                win = self._window(z, u, v, Ho, Wo)
                dk[u, v] = np.einsum("nhwd,nhwe->de", win, g)
                dz[:, u:u + r * (Ho - 1) + 1:r, v:v + r * (Wo - 1) + 1:r, :] += g @ self.kernel[u, v].T
        return dz, {"kernel": dk, "bias": g.sum(axis=(0, 1, 2))}

    def to_dict(self):
        return {"type": "conv", "activation": self.activation, "stride": self.stride,
                "kernel": self.kernel.tolist(), "bias": self.bias.tolist()}


@dataclass
class Pool2D(Layer):
    """Non-overlapping ``s x s`` pooling: sort each window descending, dot with ``beta``."""

    window: int
    beta: np.ndarray = field(default=None)
    kind = "pool"

    def __post_init__(self):
        if self.window < 1:
            raise ValidationError("pool window must be >= 1")
        if self.beta is None:
            self.beta = max_pool_weights(self.window)
        self.beta = np.array(self.beta, dtype=float, ndmin=1)
        if self.beta.shape != (self.window**2,):
            raise ValidationError(f"pool weights need {self.window**2} entries")

    def output_shape(self, input_shape):
        if len(input_shape) != 3:
            raise ShapeMismatch(f"pool layer expects (H, W, C), got {input_shape}")
        H, W, C = input_shape
        s = self.window
        if H % s or W % s:
            raise ShapeMismatch(f"{H}x{W} is not divisible by pool window {s}")
        return (H // s, W // s, C)

    def _windows(self, z):
        N, H, W, C = z.shape
        s = self.window
        self.output_shape(z.shape[1:])
        w = z.reshape(N, H // s, s, W // s, s, C).transpose(0, 1, 3, 5, 2, 4)
        return w.reshape(N, H // s, W // s, C, s * s)

    def forward(self, z):
        if z.ndim != 4:
            raise ShapeMismatch(f"pool layer needs (N, H, W, C) input, got {z.shape}")
        win = self._windows(z)
        order = np.argsort(-win, axis=-1, kind="stable")
        ranked = np.take_along_axis(win, order, axis=-1)
        return ranked @ self.beta, (z.shape, order)

    def backward(self, cache, g):
        shape, order = cache
        N, H, W, C = shape
        s = self.window
        gw = np.zeros(order.shape)
        np.put_along_axis(gw, order, g[..., None] * self.beta, axis=-1)
        gw = gw.reshape(N, H // s, W // s, C, s, s).transpose(0, 1, 4, 2, 5, 3)
        return gw.reshape(shape), {}

    def to_dict(self):
        return {"type": "pool", "window": self.window, "beta": self.beta.tolist()}


@dataclass
class Flatten(Layer):
    kind = "flatten"

    def output_shape(self, input_shape):
        return (int(np.prod(input_shape)),)

    def forward(self, z):
        return z.reshape(z.shape[0], -1), z.shape

    def backward(self, cache, g):
        return g.reshape(cache), {}

    def to_dict(self):
        return {"type": "flatten"}


def max_pool_weights(s: int) -> np.ndarray:
    beta = np.zeros(s * s)
    beta[0] = 1.0
    return beta


def mean_pool_weights(s: int) -> np.ndarray:
    return np.full(s * s, 1.0 / (s * s))


def conv_forward(z: np.ndarray, layer: Conv2D) -> np.ndarray:
    """Unbatched convenience: ``z`` is (H, W, D)."""
    return layer.forward(np.asarray(z, dtype=float)[None])[0][0]


def pool_forward(z: np.ndarray, window: int, beta) -> np.ndarray:
    """Unbatched convenience: ``z`` is (H, W, C)."""
    return Pool2D(window, beta).forward(np.asarray(z, dtype=float)[None])[0][0]


def layer_from_dict(d: dict) -> Layer:
    kind = d.get("type")
    if kind == "dense":
        return Dense(np.array(d["weight"]), np.array(d["bias"]), d.get("activation", "identity"))
    if kind == "conv":
        return Conv2D(np.array(d["kernel"]), np.array(d["bias"]), int(d.get("stride", 1)),
                      d.get("activation", "relu"))
    if kind == "pool":
        return Pool2D(int(d["window"]), np.array(d["beta"]))
    if kind == "flatten":
        return Flatten()
    raise ValidationError(f"unknown layer type {kind!r}")


@dataclass
class NetTrace:
    caches: list
    input_shape: tuple


class FeatureNet:
    """Sequential stack of layers mapping raw inputs to a P-vector."""

    def __init__(self, input_shape, layers=()):
        self.input_shape = tuple(int(v) for v in input_shape)
        self.layers: list[Layer] = list(layers)
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.output_shape(shape)
        if len(shape) != 1:
            raise ShapeMismatch(f"network output must be a vector, got shape {shape}; add a flatten layer")
        self.output_dim = shape[0]

    @property
    def input_dim(self) -> int:
        return int(np.prod(self.input_shape))

    @classmethod
    def build(cls, input_shape, spec: list[dict], seed: int) -> "FeatureNet":
        """Create a network from an architecture description with seeded init.

        Entries look like ``{"type": "conv", "size": [2, 2], "channels": 3,
        "stride": 1, "activation": "tanh"}``, ``{"type": "pool", "window": 2,
        "mode": "max"}``, ``{"type": "flatten"}`` or ``{"type": "dense",
        "units": 8, "activation": "relu"}``.
        """
        rng = np.random.default_rng(seed)
        shape = tuple(input_shape)
        layers: list[Layer] = []
        for entry in spec:
            kind = entry.get("type")
            if kind == "conv":
                a, b = entry.get("size", (3, 3))
                layer = Conv2D.create(a, b, shape[2], int(entry["channels"]), int(entry.get("stride", 1)),
                                      entry.get("activation", "relu"), rng)
            elif kind == "pool":
                s = int(entry.get("window", 2))
                mode = entry.get("mode", "max")
                if "beta" in entry:
                    beta = np.array(entry["beta"], dtype=float)
                elif mode == "max":
                    beta = max_pool_weights(s)
                elif mode == "mean":
                    beta = mean_pool_weights(s)
                else:
                    raise ValidationError(f"unknown pool mode {mode!r}")
                layer = Pool2D(s, beta)
            elif kind == "flatten":
                layer = Flatten()
            elif kind == "dense":
                if len(shape) != 1:
                    raise ShapeMismatch("dense layer needs a vector input; add a flatten layer")
                layer = Dense.create(shape[0], int(entry["units"]), entry.get("activation", "identity"), rng)
            else:
                raise ValidationError(f"unknown layer type {kind!r}")
            shape = layer.output_shape(shape)
            layers.append(layer)
        return cls(input_shape, layers)

    def _reshape_input(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[1:] == self.input_shape:
            return X
        if X.ndim == 2 and X.shape[1] == self.input_dim:
            return X.reshape((X.shape[0],) + self.input_shape)
        raise ShapeMismatch(f"input of shape {X.shape} does not match network input {self.input_shape}")

    def forward(self, X) -> tuple[np.ndarray, NetTrace]:
        z = self._reshape_input(X)
        caches = []
        for layer in self.layers:
            z, cache = layer.forward(z)
            caches.append(cache)
        return z.reshape(z.shape[0], -1), NetTrace(caches, self.input_shape)

    def backward(self, trace: NetTrace, dL_dfeatures: np.ndarray) -> tuple[list[dict[str, np.ndarray]], np.ndarray]:
        """Parameter gradients per layer, plus the gradient w.r.t. the input."""
        g = np.asarray(dL_dfeatures, dtype=float)
        grads: list[dict[str, np.ndarray]] = [{} for _ in self.layers]
        for k in range(len(self.layers) - 1, -1, -1):
            g, grads[k] = self.layers[k].backward(trace.caches[k], g)
        return grads, g.reshape(g.shape[0], -1)

    def params(self) -> list[tuple[int, str, np.ndarray]]:
        return [(k, name, arr) for k, layer in enumerate(self.layers) for name, arr in layer.params().items()]

    def copy(self) -> "FeatureNet":
        return FeatureNet(self.input_shape, [layer_from_dict(l.to_dict()) for l in self.layers])

    def to_dict(self) -> dict:
        return {"input_shape": list(self.input_shape), "layers": [l.to_dict() for l in self.layers]}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureNet":
        return cls(tuple(d["input_shape"]), [layer_from_dict(l) for l in d["layers"]])


def net_forward(x, net: FeatureNet):
    return net.forward(x)


def net_backward(net: FeatureNet, trace: NetTrace, dL_dfeatures):
    return net.backward(trace, dL_dfeatures)[0]
