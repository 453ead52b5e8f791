"""Encoder/decoder networks and the reconstruction objective."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from pqcluster.autoencoder.layers import (
    Conv1D, Dense, Flatten, Layer, MaxPool2, ReLU, Reshape, Upsample, build_layer,
)


@dataclass(frozen=True)
class ArchConfig:
    """Layer plan for the convolutional autoencoder.

    The defaults map a (3, 4096) capture through five conv+pool stages to a
    60-feature code and back through three upsample+conv stages.
    """

    in_channels: int = 3
    length: int = 4096
    kernel: int = 9
    enc_channels: tuple = (8, 16, 16, 32, 32)
    latent: int = 60
    dec_channels: tuple = (16, 8, 3)
    upsample: tuple = (4, 4, 2)

    def __post_init__(self):
        object.__setattr__(self, "enc_channels", tuple(int(c) for c in self.enc_channels))
        object.__setattr__(self, "dec_channels", tuple(int(c) for c in self.dec_channels))
        object.__setattr__(self, "upsample", tuple(int(f) for f in self.upsample))
        shrink = 2 ** len(self.enc_channels)
        if self.length % shrink:
            raise ValueError(f"length {self.length} not divisible by 2**{len(self.enc_channels)}")
        if int(np.prod(self.upsample)) != shrink:
            raise ValueError("decoder upsample factors must undo the encoder pooling")
        if len(self.upsample) != len(self.dec_channels):
            raise ValueError("one upsample factor per decoder conv")
        if self.dec_channels[-1] != self.in_channels:
            raise ValueError("last decoder conv must emit the input channel count")
        if self.latent < 1:
            raise ValueError("latent size must be positive")

    @classmethod
    def full_width(cls, **kw):
        """Double-width plan: 3->16->32->32->64->64, decoder 64->32->16->3."""
        return cls(enc_channels=(16, 32, 32, 64, 64), dec_channels=(32, 16, 3), **kw)

    @property
    def code_length(self):
        return self.length // 2 ** len(self.enc_channels)

    def to_dict(self):
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class Sequential:
    def __init__(self, layers, input_shape):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.output_shape(shape)
        self.output_shape = shape

    def forward(self, x):
        if tuple(x.shape[1:]) != self.input_shape:
            raise ValueError(f"expected input (B, {', '.join(map(str, self.input_shape))}), got {x.shape}")
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dy, need_dx=True):
        last = len(self.layers) - 1
        for i in range(last, -1, -1):
            dy = self.layers[i].backward(dy, need_dx=need_dx or i > 0)
        return dy

    def parameter_layers(self):
        return [layer for layer in self.layers if layer.params]

    def clear(self):
        for layer in self.layers:
            layer.clear()

    @property
    def dtype(self):
        for layer in self.parameter_layers():
            return layer.params["W"].dtype
        return np.dtype(np.float64)


class EncoderNet(Sequential):
    """conv -> ReLU -> maxpool stages, flatten, linear dense code."""

    @classmethod
    def build(cls, arch: ArchConfig, dtype=np.float64):
        layers = []
        ch = arch.in_channels
        for out in arch.enc_channels:
            layers += [Conv1D(ch, out, arch.kernel, dtype=dtype), ReLU(), MaxPool2()]
            ch = out
        layers += [Flatten(), Dense(ch * arch.code_length, arch.latent, dtype=dtype)]
        return cls(layers, (arch.in_channels, arch.length))

    def encode(self, x):
        return self.forward(x)


class DecoderNet(Sequential):
    """dense -> ReLU -> reshape, then upsample -> conv stages; linear output."""

    @classmethod
    def build(cls, arch: ArchConfig, dtype=np.float64):
        ch = arch.enc_channels[-1]
        layers = [
            Dense(arch.latent, ch * arch.code_length, dtype=dtype),
            ReLU(),
            Reshape(ch, arch.code_length),
        ]
        last = len(arch.dec_channels) - 1
        for i, (factor, out) in enumerate(zip(arch.upsample, arch.dec_channels)):
            layers += [Upsample(factor), Conv1D(ch, out, arch.kernel, dtype=dtype)]
            if i < last:
                layers.append(ReLU())
            ch = out
        return cls(layers, (arch.latent,))

    def decode(self, h):
        return self.forward(h)


def _followed_by_relu(net, layer):
    i = net.layers.index(layer)
    return i + 1 < len(net.layers) and isinstance(net.layers[i + 1], ReLU)


def init_params(net: Sequential, rng):
    """He-uniform for layers feeding a ReLU, Glorot-uniform otherwise; zero biases."""
    for layer in net.parameter_layers():
        W = layer.params["W"]
        fan_in = layer.fan_in
        if _followed_by_relu(net, layer):
            limit = np.sqrt(6.0 / fan_in)
        else:
            fan_out = W.shape[0] * (W.shape[2] if W.ndim == 3 else 1)
            limit = np.sqrt(6.0 / (fan_in + fan_out))
        W[...] = rng.uniform(-limit, limit, size=W.shape)
        layer.params["b"][...] = 0


def mse_loss(x, x_hat):
    """Per-record squared L2 error summed over all elements, averaged over the batch."""
    x = np.asarray(x)
    x_hat = np.asarray(x_hat)
    if x.shape != x_hat.shape:
        raise ValueError(f"mse_loss: shape mismatch {x.shape} vs {x_hat.shape}")
    n = x.shape[0]
    d = (x_hat - x).reshape(n, -1).astype(np.float64)
    return float(np.einsum("ij,ij->", d, d) / n)


def mse_grad(x, x_hat):
    return (2.0 / x.shape[0]) * (x_hat - x)


def per_record_loss(x, x_hat):
    d = (x_hat - x).reshape(x.shape[0], -1).astype(np.float64)
    return np.einsum("ij,ij->i", d, d)


class Autoencoder:
    def __init__(self, arch: ArchConfig = ArchConfig(), dtype=np.float64, seed=None,
                 encoder=None, decoder=None):
        self.arch = arch
        self.encoder = encoder if encoder is not None else EncoderNet.build(arch, dtype)
        self.decoder = decoder if decoder is not None else DecoderNet.build(arch, dtype)
        if seed is not None:
            rng = np.random.default_rng(seed)
            init_params(self.encoder, rng)
            init_params(self.decoder, rng)

    @property
    def dtype(self):
        return self.encoder.dtype

    def _as_input(self, x):
        return np.ascontiguousarray(x, dtype=self.dtype)

    def encode(self, x):
        """(B, C, T) -> (B, latent); a single (C, T) capture gives (latent,)."""
        x = self._as_input(x)
        single = x.ndim == 2
        h = self.encoder.forward(x[None] if single else x)
        return h[0] if single else h

    def decode(self, h):
        h = self._as_input(h)
        single = h.ndim == 1
        x = self.decoder.forward(h[None] if single else h)
        return x[0] if single else x

    def forward(self, x):
        return self.decoder.forward(self.encoder.forward(self._as_input(x)))

    def backward(self, dx_hat):
        """Back-propagate d(loss)/d(x_hat); gradients land in each layer's ``grads``."""
        dh = self.decoder.backward(dx_hat)
        self.encoder.backward(dh, need_dx=False)

    def loss_and_grad(self, x):
        x = self._as_input(x)
        x_hat = self.forward(x)
        loss = mse_loss(x, x_hat)
        self.backward(mse_grad(x, x_hat).astype(self.dtype, copy=False))
        return loss

    def parameter_layers(self):
        return self.encoder.parameter_layers() + self.decoder.parameter_layers()

    def parameters(self):
        """Yield (name, array) in a fixed order."""
        for net_name, net in (("encoder", self.encoder), ("decoder", self.decoder)):
            for i, layer in enumerate(net.layers):
                for key in sorted(layer.params):
                    yield f"{net_name}.{i}.{key}", layer.params[key]

    def gradients(self):
        for net_name, net in (("encoder", self.encoder), ("decoder", self.decoder)):
            for i, layer in enumerate(net.layers):
                for key in sorted(layer.params):
                    yield f"{net_name}.{i}.{key}", layer.grads[key]

    def clear(self):
        self.encoder.clear()
        self.decoder.clear()

    def astype(self, dtype):
        other = Autoencoder(self.arch, dtype=dtype)
        for (_, src), (_, dst) in zip(self.parameters(), other.parameters()):
            dst[...] = src
        return other

    def layer_specs(self):
        return {
            "encoder": [layer.spec() for layer in self.encoder.layers],
            "decoder": [layer.spec() for layer in self.decoder.layers],
        }

    @classmethod
    def from_specs(cls, arch, specs, dtype):
        enc = EncoderNet([build_layer(s, dtype) for s in specs["encoder"]], (arch.in_channels, arch.length))
        dec = DecoderNet([build_layer(s, dtype) for s in specs["decoder"]], (arch.latent,))
        return cls(arch, dtype=dtype, encoder=enc, decoder=dec)


__all__ = [
    "ArchConfig", "Autoencoder", "DecoderNet", "EncoderNet", "Layer", "Sequential",
    "init_params", "mse_grad", "mse_loss", "per_record_loss",
]
