"""Exact t-SNE (Student-t kernel, KL objective, gradient descent with gains)."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from pqcluster import kernels
from pqcluster.errors import ConfigError, NumericalError

logger = logging.getLogger(__name__)


@dataclass
class TsneConfig:
    perplexity: float = 30.0
    n_components: int = 2
    iterations: int = 1000
    learning_rate: float = 200.0
    exaggeration: float = 12.0
    exaggeration_iters: int = 250
    momentum: float = 0.5
    final_momentum: float = 0.8
    momentum_switch: int = 250
    min_gain: float = 0.01
    seed: int = 0

    def __post_init__(self):
        for name in ("perplexity", "iterations", "learning_rate", "exaggeration", "n_components"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class Embedding:
    points: np.ndarray
    kl_history: list = field(default_factory=list)
    q_sums: list = field(default_factory=list)
    p_sum: float = 1.0


def sq_distances(H):
    H = np.asarray(H, dtype=np.float64)
    sq = np.einsum("ij,ij->i", H, H)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (H @ H.T), 0.0)
    np.fill_diagonal(d2, 0.0)
    return d2


def _row_entropy(d2, beta, mask):
    # p ~ exp(-beta * (d2 - d2_min)) over off-diagonal entries; entropy in nats
    logits = -beta[:, None] * d2
    logits = np.where(mask, logits, -np.inf)
    logits -= logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    s = w.sum(axis=1, keepdims=True)
    p = w / s
    with np.errstate(invalid="ignore", divide="ignore"):
        plogp = np.where(p > 0, p * np.log(p), 0.0)
    return p, -plogp.sum(axis=1)


def conditional_p(d2, perplexity, tol=1e-5, max_iter=64):
    """Row-stochastic p_{j|i} whose Shannon perplexity matches ``perplexity``.

    The Gaussian precision of every row is bisected in parallel.  Returns the
    matrix and the final per-row precisions.
    """
    n = d2.shape[0]
    target = math.log(perplexity)
    mask = ~np.eye(n, dtype=bool)
    off = d2[mask].reshape(n, n - 1)
    scale = np.mean(off, axis=1)
    beta = 1.0 / np.where(scale > 0, scale, 1.0)
    lo = np.zeros(n)
    hi = np.full(n, np.inf)
    done = np.zeros(n, dtype=bool)
    p, ent = _row_entropy(d2, beta, mask)
    for _ in range(max_iter):
        err = ent - target
        done |= np.abs(err) < tol
        if done.all():
            break
        up = (err > 0) & ~done      # too flat: sharpen
        down = (err < 0) & ~done
        lo = np.where(up, beta, lo)
        hi = np.where(down, beta, hi)
        beta = np.where(
            up, np.where(np.isinf(hi), beta * 2.0, 0.5 * (beta + hi)),
            np.where(down, 0.5 * (beta + lo), beta),
        )
        p_new, ent_new = _row_entropy(d2, beta, mask)
        p = np.where(done[:, None], p, p_new)
        ent = np.where(done, ent, ent_new)
    return p, beta


def joint_p(H, perplexity, seed=0):
    """Symmetrized affinities (P + P^T) / (2n) of the rows of ``H``."""
    H = np.asarray(H, dtype=np.float64)
    n = H.shape[0]
    if n < 4:
        raise ValueError("t-SNE needs at least 4 points")
    d2 = sq_distances(H)
    off = d2[~np.eye(n, dtype=bool)]
    if np.any(off == 0):
        logger.warning("duplicate points in t-SNE input; adding 1e-10 jitter")
        H = H + np.random.default_rng([seed, 2]).normal(0.0, 1e-10, size=H.shape)
        d2 = sq_distances(H)
    p, _ = conditional_p(d2, perplexity)
    return (p + p.T) / (2.0 * n)


def fit(H, cfg: TsneConfig = TsneConfig(), P=None) -> Embedding:
    H = np.asarray(H, dtype=np.float64)
    n = H.shape[0]
    if not cfg.perplexity < n / 3.0:
        raise ConfigError(f"perplexity {cfg.perplexity} must be < n/3 = {n / 3.0:.3g}")
    if P is None:
        P = joint_p(H, cfg.perplexity, cfg.seed)
    P = np.ascontiguousarray(P, dtype=np.float64)
    rng = np.random.default_rng(cfg.seed)
    Y = rng.normal(0.0, 1e-4, size=(n, cfg.n_components))
    Y -= Y.mean(axis=0)
    velocity = np.zeros_like(Y)
    gains = np.ones_like(Y)
    emb = Embedding(Y, p_sum=float(P.sum()))
    kl_min = math.inf
    for it in range(cfg.iterations):
        exag = cfg.exaggeration if it < cfg.exaggeration_iters else 1.0
        mom = cfg.momentum if it < cfg.momentum_switch else cfg.final_momentum
        grad, kl, qsum = kernels.tsne_gradient(Y, P, exag)
        if not (math.isfinite(kl) and np.all(np.isfinite(grad))):
            raise NumericalError(f"t-SNE produced non-finite values at iteration {it}")
        emb.kl_history.append(float(kl))
        emb.q_sums.append(float(qsum))
        kl_min = min(kl_min, kl)
        if kl > 10.0 * kl_min and kl_min > 0:
            raise NumericalError(f"t-SNE diverged at iteration {it}: KL {kl:.4g} > 10 x min {kl_min:.4g}")
        same = np.sign(grad) == np.sign(velocity)
        gains = np.where(same, gains * 0.8, gains + 0.2)
        np.maximum(gains, cfg.min_gain, out=gains)
        velocity = mom * velocity - cfg.learning_rate * gains * grad
        Y = Y + velocity
        Y -= Y.mean(axis=0)
    emb.points = np.ascontiguousarray(Y)
    return emb
