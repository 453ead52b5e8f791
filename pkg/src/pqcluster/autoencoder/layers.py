"""Layers with explicit forward/backward passes.

Each layer caches what its backward pass needs during ``forward`` and stores
parameter gradients in ``self.grads`` (same keys as ``self.params``).
Activations are (batch, channels, length) for the conv stack and
(batch, features) for dense layers.
"""
import numpy as np

from pqcluster import kernels


class Layer:
    kind = "layer"

    def __init__(self):
        self.params = {}
        self.grads = {}
        self._cache = None

    def forward(self, x):
        raise NotImplementedError

    def backward(self, dy, need_dx=True):
        raise NotImplementedError

    def output_shape(self, shape):
        return shape

    def spec(self):
        return {"kind": self.kind}

    def clear(self):
        self._cache = None


class Conv1D(Layer):
    """Stride-1, same-padded 1-D convolution (cross-correlation)."""

    kind = "conv1d"

    def __init__(self, in_ch, out_ch, kernel, dtype=np.float64):
        super().__init__()
        if kernel % 2 != 1:
            raise ValueError("conv kernel must be odd for symmetric same padding")
        self.in_ch, self.out_ch, self.kernel = in_ch, out_ch, kernel
        self.params = {
            "W": np.zeros((out_ch, in_ch, kernel), dtype=dtype),
            "b": np.zeros(out_ch, dtype=dtype),
        }

    @property
    def fan_in(self):
        return self.in_ch * self.kernel

    def forward(self, x):
        x = np.ascontiguousarray(x)
        if x.ndim != 3 or x.shape[1] != self.in_ch:
            raise ValueError(f"conv1d expects (B, {self.in_ch}, T), got {x.shape}")
        self._cache = x
        return kernels.conv1d_forward(x, self.params["W"], self.params["b"])

    def backward(self, dy, need_dx=True):
        dx, dW, db = kernels.conv1d_backward(
            self._cache, self.params["W"], np.ascontiguousarray(dy), need_dx
        )
        self.grads = {"W": dW, "b": db}
        return dx

    def output_shape(self, shape):
        return (self.out_ch, shape[1])

    def spec(self):
        return {"kind": self.kind, "in_ch": self.in_ch, "out_ch": self.out_ch, "kernel": self.kernel}


class MaxPool2(Layer):
    """Max pooling, width 2, stride 2; gradient flows to the stored argmax."""

    kind = "maxpool2"

    def forward(self, x):
        y, idx = kernels.maxpool2_forward(np.ascontiguousarray(x))
        self._cache = idx
        return y

    def backward(self, dy, need_dx=True):
        return kernels.maxpool2_backward(np.ascontiguousarray(dy), self._cache)

    def output_shape(self, shape):
        if shape[1] % 2:
            raise ValueError(f"maxpool2 needs an even length, got {shape[1]}")
        return (shape[0], shape[1] // 2)


class Upsample(Layer):
    """Nearest-neighbour repeat along time."""

    kind = "upsample"

    def __init__(self, factor):
        super().__init__()
        self.factor = int(factor)

    def forward(self, x):
        return np.repeat(x, self.factor, axis=2)

    def backward(self, dy, need_dx=True):
        f = self.factor
        out = dy[:, :, 0::f].copy()
        for j in range(1, f):
            out += dy[:, :, j::f]
        return out

    def output_shape(self, shape):
        return (shape[0], shape[1] * self.factor)

    def spec(self):
        return {"kind": self.kind, "factor": self.factor}


class ReLU(Layer):
    kind = "relu"

    def forward(self, x):
        mask = x > 0
        self._cache = mask
        return x * mask

    def backward(self, dy, need_dx=True):
        return dy * self._cache


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy, need_dx=True):
        return dy.reshape(self._cache)

    def output_shape(self, shape):
        return (int(np.prod(shape)),)


class Reshape(Layer):
    kind = "reshape"

    def __init__(self, channels, length):
        super().__init__()
        self.channels, self.length = channels, length

    def forward(self, x):
        return x.reshape(x.shape[0], self.channels, self.length)

    def backward(self, dy, need_dx=True):
        return dy.reshape(dy.shape[0], -1)

    def output_shape(self, shape):
        if shape != (self.channels * self.length,):
            raise ValueError(f"cannot reshape {shape} to ({self.channels}, {self.length})")
        return (self.channels, self.length)

    def spec(self):
        return {"kind": self.kind, "channels": self.channels, "length": self.length}


class Dense(Layer):
    kind = "dense"

    def __init__(self, n_in, n_out, dtype=np.float64):
        super().__init__()
        self.n_in, self.n_out = n_in, n_out
        self.params = {
            "W": np.zeros((n_out, n_in), dtype=dtype),
            "b": np.zeros(n_out, dtype=dtype),
        }

    @property
    def fan_in(self):
        return self.n_in

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ValueError(f"dense expects (B, {self.n_in}), got {x.shape}")
        self._cache = x
        return x @ self.params["W"].T + self.params["b"]

    def backward(self, dy, need_dx=True):
        x = self._cache
        self.grads = {"W": dy.T @ x, "b": dy.sum(axis=0)}
        return dy @ self.params["W"] if need_dx else None

    def output_shape(self, shape):
        return (self.n_out,)

    def spec(self):
        return {"kind": self.kind, "n_in": self.n_in, "n_out": self.n_out}


def build_layer(spec, dtype=np.float64):
    kind = spec["kind"]
    if kind == "conv1d":
        return Conv1D(spec["in_ch"], spec["out_ch"], spec["kernel"], dtype=dtype)
    if kind == "dense":
        return Dense(spec["n_in"], spec["n_out"], dtype=dtype)
    if kind == "upsample":
        return Upsample(spec["factor"])
    if kind == "reshape":
        return Reshape(spec["channels"], spec["length"])
    simple = {"maxpool2": MaxPool2, "relu": ReLU, "flatten": Flatten}
    if kind not in simple:
        raise ValueError(f"unknown layer kind {kind!r}")
    return simple[kind]()
