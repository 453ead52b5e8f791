"""NumPy implementations of the hot kernels (fallback for ``_core``)."""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _im2col(x, K):
    # (B, C, T) -> (B, T, C*K), row c*K + k holds x[c, t + k - K//2]
    pad = K // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
    win = sliding_window_view(xp, K, axis=2)  # B, C, T, K
    B, C, T, _ = win.shape
    return np.ascontiguousarray(win.transpose(0, 2, 1, 3)).reshape(B, T, C * K)


def conv1d_forward(x, W, b):
    B, C, T = x.shape
    O, Cw, K = W.shape
    if Cw != C or b.shape[0] != O:
        raise ValueError("conv1d: weight/bias shape does not match input channels")
    cols = _im2col(x, K)
    y = cols @ W.reshape(O, C * K).T
    y += b
    return np.ascontiguousarray(y.transpose(0, 2, 1))


def conv1d_backward(x, W, dy, need_dx=True):
    """Return (dx, dW, db); dx is None when need_dx is False."""
    B, C, T = x.shape
    O, _, K = W.shape
    cols = _im2col(x, K).reshape(B * T, C * K)
    dy_t = dy.transpose(0, 2, 1).reshape(B * T, O)
    dW = (dy_t.T @ cols).reshape(O, C, K)
    db = dy.sum(axis=(0, 2))
    if not need_dx:
        return None, dW, db
    dcols = (dy_t @ W.reshape(O, C * K)).reshape(B, T, C, K)
    pad = K // 2
    dxp = np.zeros((B, C, T + 2 * pad), dtype=x.dtype)
    for k in range(K):
        dxp[:, :, k:k + T] += dcols[:, :, :, k].transpose(0, 2, 1)
    return np.ascontiguousarray(dxp[:, :, pad:pad + T]), dW, db


def maxpool2_forward(x):
    B, C, T = x.shape
    if T % 2:
        raise ValueError("maxpool2: length must be even")
    pairs = x.reshape(B, C, T // 2, 2)
    idx = (pairs[..., 1] > pairs[..., 0]).astype(np.uint8)
    y = np.where(idx, pairs[..., 1], pairs[..., 0])
    return y, idx


def maxpool2_backward(dy, idx):
    B, C, H = dy.shape
    dx = np.zeros((B, C, H, 2), dtype=dy.dtype)
    np.put_along_axis(dx, idx[..., None].astype(np.intp), dy[..., None], axis=3)
    return dx.reshape(B, C, 2 * H)


def tsne_gradient(Y, P, exaggeration=1.0):
    """Exact KL(P||Q) gradient for a Student-t embedding; returns (grad, kl, qsum)."""
    sq = np.sum(Y * Y, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (Y @ Y.T), 0.0)
    num = 1.0 / (1.0 + d2)
    np.fill_diagonal(num, 0.0)
    Q = num / num.sum()
    mask = P > 0
    kl = float(np.sum(P[mask] * np.log(P[mask] / np.maximum(Q[mask], 1e-300))))
    W = (exaggeration * P - Q) * num
    grad = 4.0 * (W.sum(axis=1)[:, None] * Y - W @ Y)
    return grad, kl, float(Q.sum())
