"""Mini-batch Adam training of the autoencoder and feature extraction."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from pqcluster import container
from pqcluster.autoencoder.network import ArchConfig, Autoencoder, mse_grad, per_record_loss
from pqcluster.errors import NumericalError

logger = logging.getLogger(__name__)

FORMAT = "pqcluster-autoencoder"


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    init: str = "he-uniform"
    dtype: str = "float32"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.init != "he-uniform":
            raise ValueError(f"unsupported init scheme {self.init!r}")
        np.dtype(self.dtype)


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        step = self.lr * math.sqrt(1.0 - b2 ** self.t) / (1.0 - b1 ** self.t)
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p -= (step * m / (np.sqrt(v) + self.eps)).astype(p.dtype, copy=False)


@dataclass
class TrainResult:
    model: Autoencoder
    history: dict = field(default_factory=lambda: {"train": [], "val": []})

    @property
    def encoder(self):
        return self.model.encoder

    @property
    def decoder(self):
        return self.model.decoder


def evaluate(model: Autoencoder, x, batch_size=64):
    """Mean per-record reconstruction loss over ``x``."""
    if len(x) == 0:
        return float("nan")
    losses = np.empty(len(x))
    for s in range(0, len(x), batch_size):
        xb = np.ascontiguousarray(x[s:s + batch_size], dtype=model.dtype)
        losses[s:s + len(xb)] = per_record_loss(xb, model.forward(xb))
    model.clear()
    return float(losses.mean())


def train(dataset, cfg: TrainConfig = TrainConfig(), arch: ArchConfig | None = None,
          progress=None) -> TrainResult:
    """Train on ``dataset``'s train split, tracking validation loss per epoch.

    The history lists the mean per-record loss seen during each epoch
    (``train``) and the validation loss after it (``val``).
    """
    if dataset.split is None:
        raise ValueError("train needs a dataset with a train/val/test split")
    dtype = np.dtype(cfg.dtype)
    x_train = dataset.part("train").tensor(dtype)
    x_val = dataset.part("val").tensor(dtype)
    if len(x_train) == 0:
        raise ValueError("empty training split")
    if arch is None:
        arch = ArchConfig(in_channels=x_train.shape[1], length=x_train.shape[2])
    model = Autoencoder(arch, dtype=dtype, seed=cfg.seed)
    opt = Adam([p for _, p in model.parameters()], cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    rng = np.random.default_rng([cfg.seed, 1])
    result = TrainResult(model)
    n = len(x_train)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        seen = np.empty(n)
        for s in range(0, n, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            xb = x_train[idx]
            x_hat = model.forward(xb)
            rec = per_record_loss(xb, x_hat)
            if not np.all(np.isfinite(rec)):
                raise NumericalError(
                    f"non-finite reconstruction loss at epoch {epoch}, batch starting {s}; "
                    f"try a smaller learning rate (lr={cfg.learning_rate})"
                )
            seen[idx] = rec
            model.backward(mse_grad(xb, x_hat).astype(dtype, copy=False))
            opt.step([g for _, g in model.gradients()])
        model.clear()
        train_loss = float(seen.mean())
        val_loss = evaluate(model, x_val, cfg.batch_size)
        if not math.isfinite(train_loss) or (len(x_val) and not math.isfinite(val_loss)):
            raise NumericalError(f"non-finite loss after epoch {epoch}")
        result.history["train"].append(train_loss)
        result.history["val"].append(val_loss)
        logger.info("epoch %d/%d train %.6g val %.6g", epoch, cfg.epochs, train_loss, val_loss)
        if progress is not None:
            progress(epoch, train_loss, val_loss)
    return result


def encode_dataset(dataset, model: Autoencoder, batch_size=64):
    """Feature matrix (n, latent), row i from record i."""
    n = len(dataset)
    out = np.zeros((n, model.arch.latent))
    for s in range(0, n, batch_size):
        xb = np.stack([r.channels for r in dataset.records[s:s + batch_size]])
        out[s:s + len(xb)] = model.encode(xb)
    model.clear()
    return out


def save_model(path, model: Autoencoder, extra=None):
    header = {
        "format": FORMAT,
        "version": 1,
        "arch": model.arch.to_dict(),
        "layers": model.layer_specs(),
        "dtype": np.dtype(model.dtype).name,
    }
    if extra:
        header["meta"] = extra
    container.save(path, header, dict(model.parameters()))


def load_model(path) -> Autoencoder:
    header, arrays = container.load(path)
    if header.get("format") != FORMAT:
        raise ValueError(f"{path}: not an autoencoder container")
    arch = ArchConfig.from_dict(header["arch"])
    model = Autoencoder.from_specs(arch, header["layers"], np.dtype(header["dtype"]))
    for name, p in model.parameters():
        if name not in arrays:
            raise ValueError(f"{path}: missing parameter {name}")
        p[...] = arrays[name]
    return model


def model_meta(path):
    header, _ = container.load(path)
    return header.get("meta", {})


__all__ = ["Adam", "TrainConfig", "TrainResult", "encode_dataset", "evaluate",
           "load_model", "model_meta", "save_model", "train"]
