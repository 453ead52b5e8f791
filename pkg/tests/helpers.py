"""Shared oracles for the test suite."""
import itertools

import numpy as np


def numeric_grad(f, x, eps=1e-5):
    """Central finite differences of scalar ``f()`` w.r.t. array ``x`` (perturbed in place)."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        fp = f()
        flat[i] = old - eps
        fm = f()
        flat[i] = old
        gf[i] = (fp - fm) / (2 * eps)
    return g


def max_rel_err(analytic, numeric, floor=1e-8):
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)))


def partitions(n, k):
    """Every assignment of n items to exactly k non-empty, canonically numbered groups."""
    def rec(i, labels, used):
        if i == n:
            if used == k:
                yield tuple(labels)
            return
        for c in range(min(used + 1, k)):
            labels.append(c)
            yield from rec(i + 1, labels, max(used, c + 1))
            labels.pop()
    yield from rec(0, [], 0)


def partition_objective(X, labels):
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels)
    total = 0.0
    for c in np.unique(labels):
        pts = X[labels == c]
        total += float(((pts - pts.mean(axis=0)) ** 2).sum())
    return total


def brute_force_kmeans(X, k):
    return min(partition_objective(X, p) for p in partitions(len(X), k))


def naive_silhouette(X, labels):
    """Direct double loop: a(i) own-cluster mean distance, b(i) nearest other cluster mean."""
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    out = np.zeros(n)
    clusters = sorted(set(int(l) for l in labels))
    for i in range(n):
        own = [j for j in range(n) if labels[j] == labels[i] and j != i]
        if not own:
            out[i] = 0.0
            continue
        a = sum(np.sqrt(((X[i] - X[j]) ** 2).sum()) for j in own) / len(own)
        b = min(
            sum(np.sqrt(((X[i] - X[j]) ** 2).sum()) for j in range(n) if labels[j] == c)
            / sum(1 for j in range(n) if labels[j] == c)
            for c in clusters if c != labels[i]
        )
        out[i] = (b - a) / max(a, b) if max(a, b) > 0 else 0.0
    return out


def charpoly_eigenvalues(C):
    """Eigenvalues of a symmetric matrix with d <= 3 from its characteristic polynomial."""
    C = np.asarray(C, dtype=np.float64)
    d = C.shape[0]
    if d == 1:
        return np.array([C[0, 0]])
    if d == 2:
        tr, det = np.trace(C), np.linalg.det(C)
        disc = np.sqrt(max(tr * tr / 4 - det, 0.0))
        return np.array([tr / 2 + disc, tr / 2 - disc])
    # trigonometric solution of the symmetric cubic
    q = np.trace(C) / 3
    p1 = C[0, 1] ** 2 + C[0, 2] ** 2 + C[1, 2] ** 2
    p2 = sum((C[i, i] - q) ** 2 for i in range(3)) + 2 * p1
    p = np.sqrt(p2 / 6)
    if p == 0:
        return np.full(3, q)
    B = (C - q * np.eye(3)) / p
    r = np.clip(np.linalg.det(B) / 2, -1.0, 1.0)
    phi = np.arccos(r) / 3
    e1 = q + 2 * p * np.cos(phi)
    e3 = q + 2 * p * np.cos(phi + 2 * np.pi / 3)
    return np.array([e1, 3 * q - e1 - e3, e3])


def null_vector(A):
    """Unit vector spanning the null space of a rank-(d-1) symmetric matrix, d in {2, 3}."""
    if A.shape[0] == 2:
        cands = [np.array([-A[r, 1], A[r, 0]]) for r in range(2)]
    else:
        cands = [np.cross(A[i], A[j]) for i, j in itertools.combinations(range(3), 2)]
    v = max(cands, key=np.linalg.norm)
    return v / np.linalg.norm(v)
