# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the conv/pool stack and the exact t-SNE gradient.

Every function here has a NumPy twin in ``_pycore`` with the same signature
and the same results up to floating-point reassociation.
"""
import numpy as np
cimport numpy as cnp
from cython cimport floating
from libc.string cimport memset
from libc.math cimport log
from scipy.linalg.cython_blas cimport sgemm, dgemm

cnp.import_array()


cdef inline void _gemm(char *ta, char *tb, int m, int n, int k,
                       floating alpha, floating *a, int lda,
                       floating *b, int ldb, floating beta,
                       floating *c, int ldc) noexcept nogil:
    # column-major BLAS call
    if floating is float:
        sgemm(ta, tb, &m, &n, &k, &alpha, a, &lda, b, &ldb, &beta, c, &ldc)
    else:
        dgemm(ta, tb, &m, &n, &k, &alpha, a, &lda, b, &ldb, &beta, c, &ldc)


cdef Py_ssize_t _TILE_BYTES = 512 * 1024


cdef Py_ssize_t _tile_len(Py_ssize_t CK, Py_ssize_t T, Py_ssize_t itemsize) noexcept nogil:
    # time-tile so one column block stays cache resident
    cdef Py_ssize_t tl = _TILE_BYTES // (CK * itemsize)
    tl = (tl // 16) * 16
    if tl < 16:
        tl = 16
    return T if tl > T else tl


cdef void _im2col_tile(floating *x, Py_ssize_t C, Py_ssize_t T, int K,
                       Py_ssize_t t0, Py_ssize_t tl, floating *cols) noexcept nogil:
    # cols[(c*K + k), j] = x[c, t0 + j + k - K//2], zero outside [0, T)
    cdef Py_ssize_t pad = K // 2
    cdef Py_ssize_t c, k, j, lo, hi, off
    cdef floating *row
    cdef floating *src
    for c in range(C):
        src = x + c * T
        for k in range(K):
            row = cols + (c * K + k) * tl
            off = t0 + k - pad
            lo = -off if off < 0 else 0
            hi = T - off if off + tl > T else tl
            if hi < lo:
                hi = lo
            for j in range(lo):
                row[j] = 0
            for j in range(lo, hi):
                row[j] = src[j + off]
            for j in range(hi, tl):
                row[j] = 0


cdef void _col2im_tile(floating *dcols, Py_ssize_t C, Py_ssize_t T, int K,
                       Py_ssize_t t0, Py_ssize_t tl, floating *dx) noexcept nogil:
    cdef Py_ssize_t pad = K // 2
    cdef Py_ssize_t c, k, j, lo, hi, off
    cdef floating *row
    cdef floating *dst
    for c in range(C):
        dst = dx + c * T
        for k in range(K):
            row = dcols + (c * K + k) * tl
            off = t0 + k - pad
            lo = -off if off < 0 else 0
            hi = T - off if off + tl > T else tl
            for j in range(lo, hi):
                dst[j + off] += row[j]


def conv1d_forward(floating[:, :, ::1] x, floating[:, :, ::1] W, floating[::1] b):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], T = x.shape[2]
    cdef Py_ssize_t O = W.shape[0], K = W.shape[2]
    if W.shape[1] != C or b.shape[0] != O:
        raise ValueError("conv1d: weight/bias shape does not match input channels")
    dtype = np.float32 if floating is float else np.float64
    cdef Py_ssize_t CK = C * K
    cdef Py_ssize_t tl = _tile_len(CK, T, sizeof(floating))
    y_arr = np.empty((B, O, T), dtype=dtype)
    cols_arr = np.empty(CK * tl, dtype=dtype)
    cdef floating[:, :, ::1] y = y_arr
    cdef floating[::1] cols = cols_arr
    cdef Py_ssize_t i, o, t, t0, n
    with nogil:
        for i in range(B):
            t0 = 0
            while t0 < T:
                n = tl if t0 + tl <= T else T - t0
                _im2col_tile(&x[i, 0, 0], C, T, <int>K, t0, n, &cols[0])
                # y_i[:, t0:t0+n] (O x n) = W (O x CK) @ cols (CK x n)
                _gemm(b"N", b"N", <int>n, <int>O, <int>CK, <floating>1.0,
                      &cols[0], <int>n, &W[0, 0, 0], <int>CK, <floating>0.0,
                      &y[i, 0, t0], <int>T)
                t0 += n
            for o in range(O):
                for t in range(T):
                    y[i, o, t] += b[o]
    return y_arr


def conv1d_backward(floating[:, :, ::1] x, floating[:, :, ::1] W,
                    floating[:, :, ::1] dy, bint need_dx=True):
    """Return (dx, dW, db); dx is None when need_dx is False."""
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], T = x.shape[2]
    cdef Py_ssize_t O = W.shape[0], K = W.shape[2]
    dtype = np.float32 if floating is float else np.float64
    cdef Py_ssize_t CK = C * K
    cdef Py_ssize_t tl = _tile_len(CK, T, sizeof(floating))
    dW_arr = np.zeros((O, C, K), dtype=dtype)
    db_arr = np.zeros(O, dtype=dtype)
    cols_arr = np.empty(CK * tl, dtype=dtype)
    dcols_arr = np.empty(CK * tl, dtype=dtype)
    dx_arr = np.zeros((B, C, T), dtype=dtype) if need_dx else None
    cdef floating[:, :, ::1] dW = dW_arr
    cdef floating[::1] db = db_arr
    cdef floating[::1] cols = cols_arr
    cdef floating[::1] dcols = dcols_arr
    cdef floating[:, :, ::1] dx
    if need_dx:
        dx = dx_arr
    cdef Py_ssize_t i, o, t, t0, n
    cdef floating acc
    with nogil:
        for i in range(B):
            t0 = 0
            while t0 < T:
                n = tl if t0 + tl <= T else T - t0
                _im2col_tile(&x[i, 0, 0], C, T, <int>K, t0, n, &cols[0])
                # dW (O x CK) += dy_i[:, tile] (O x n) @ cols^T
                _gemm(b"T", b"N", <int>CK, <int>O, <int>n, <floating>1.0,
                      &cols[0], <int>n, &dy[i, 0, t0], <int>T, <floating>1.0,
                      &dW[0, 0, 0], <int>CK)
                if need_dx:
                    # dcols (CK x n) = W^T @ dy_i[:, tile]
                    _gemm(b"N", b"T", <int>n, <int>CK, <int>O, <floating>1.0,
                          &dy[i, 0, t0], <int>T, &W[0, 0, 0], <int>CK, <floating>0.0,
                          &dcols[0], <int>n)
                    _col2im_tile(&dcols[0], C, T, <int>K, t0, n, &dx[i, 0, 0])
                t0 += n
            for o in range(O):
                acc = 0
                for t in range(T):
                    acc = acc + dy[i, o, t]
                db[o] += acc
    return dx_arr, dW_arr, db_arr


def maxpool2_forward(floating[:, :, ::1] x):
    """Width-2 stride-2 max pool; returns (y, idx) with idx in {0, 1}."""
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], T = x.shape[2]
    cdef Py_ssize_t H = T // 2
    if T % 2:
        raise ValueError("maxpool2: length must be even")
    dtype = np.float32 if floating is float else np.float64
    y_arr = np.empty((B, C, H), dtype=dtype)
    idx_arr = np.empty((B, C, H), dtype=np.uint8)
    cdef floating[:, :, ::1] y = y_arr
    cdef unsigned char[:, :, ::1] idx = idx_arr
    cdef Py_ssize_t i, c, t
    cdef floating a, bb
    with nogil:
        for i in range(B):
            for c in range(C):
                for t in range(H):
                    a = x[i, c, 2 * t]
                    bb = x[i, c, 2 * t + 1]
                    # first index wins ties
                    if bb > a:
                        y[i, c, t] = bb
                        idx[i, c, t] = 1
                    else:
                        y[i, c, t] = a
                        idx[i, c, t] = 0
    return y_arr, idx_arr


def maxpool2_backward(floating[:, :, ::1] dy, unsigned char[:, :, ::1] idx):
    cdef Py_ssize_t B = dy.shape[0], C = dy.shape[1], H = dy.shape[2]
    dtype = np.float32 if floating is float else np.float64
    dx_arr = np.zeros((B, C, 2 * H), dtype=dtype)
    cdef floating[:, :, ::1] dx = dx_arr
    cdef Py_ssize_t i, c, t
    with nogil:
        for i in range(B):
            for c in range(C):
                for t in range(H):
                    dx[i, c, 2 * t + idx[i, c, t]] = dy[i, c, t]
    return dx_arr


def tsne_gradient(double[:, ::1] Y, double[:, ::1] P, double exaggeration=1.0):
    """Exact KL(P||Q) gradient for a Student-t embedding.

    Returns (grad, kl, qsum) where qsum is the sum of the normalized Q
    (1 up to rounding); kl is evaluated against the unexaggerated P.
    """
    cdef Py_ssize_t n = Y.shape[0], dims = Y.shape[1]
    grad_arr = np.zeros((n, dims), dtype=np.float64)
    num_arr = np.empty((n, n), dtype=np.float64)
    cdef double[:, ::1] grad = grad_arr
    cdef double[:, ::1] num = num_arr
    cdef Py_ssize_t i, j, d
    cdef double dist, diff, z = 0.0, kl = 0.0, qsum = 0.0, q, w, pij
    with nogil:
        for i in range(n):
            num[i, i] = 0.0
            for j in range(i + 1, n):
                dist = 0.0
                for d in range(dims):
                    diff = Y[i, d] - Y[j, d]
                    dist = dist + diff * diff
                w = 1.0 / (1.0 + dist)
                num[i, j] = w
                num[j, i] = w
                z = z + 2.0 * w
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                w = num[i, j]
                q = w / z
                qsum = qsum + q
                pij = P[i, j]
                if pij > 0.0:
                    kl = kl + pij * log(pij / (q if q > 1e-300 else 1e-300))
                # dC/dy_i = 4 sum_j (p_ij - q_ij) w_ij (y_i - y_j)
                w = 4.0 * (exaggeration * pij - q) * w
                for d in range(dims):
                    grad[i, d] += w * (Y[i, d] - Y[j, d])
    return grad_arr, kl, qsum
