"""Lloyd's K-means with random-row restarts, WSS elbow scan and silhouettes."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from pqcluster.errors import NumericalError

WEAK_ELBOW = 0.05


@dataclass
class ClusterModel:
    centers: np.ndarray       # (c, d)
    assignments: np.ndarray   # (n,) ints in [0, c)
    objective: float
    wss_history: list = field(default_factory=list)
    seed: int = 0
    n_iter: int = 0

    @property
    def c(self):
        return self.centers.shape[0]

    @property
    def sizes(self):
        return np.bincount(self.assignments, minlength=self.c)


def sq_distances(H, centers):
    """(n, c) squared Euclidean distances, computed from explicit differences."""
    diff = H[:, None, :] - centers[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def objective(H, centers, assignments):
    d = H - centers[assignments]
    return float(np.einsum("ij,ij->", d, d))


def assign(H, centers):
    """Nearest center per row; ties go to the lowest center index."""
    return np.argmin(sq_distances(H, centers), axis=1)


def update_centers(H, assignments, k, old_centers=None):
    """Member means; empty clusters keep ``old_centers`` rows (or NaN)."""
    d = H.shape[1]
    sums = np.zeros((k, d))
    np.add.at(sums, assignments, H)
    counts = np.bincount(assignments, minlength=k)
    centers = np.full((k, d), np.nan) if old_centers is None else old_centers.copy()
    nz = counts > 0
    centers[nz] = sums[nz] / counts[nz, None]
    return centers, counts


def _reseed_empty(H, centers, assignments, counts):
    # farthest points from their own centers become the new centers
    empty = np.flatnonzero(counts == 0)
    if empty.size == 0:
        return centers
    d = H - centers[assignments]
    far = np.argsort(-np.einsum("ij,ij->i", d, d), kind="stable")
    centers = centers.copy()
    for slot, idx in zip(empty, far):
        centers[slot] = H[idx]
    return centers


def _lloyd(H, init, max_iter, tol):
    k = init.shape[0]
    centers = init.copy()
    assignments = assign(H, centers)
    J = objective(H, centers, assignments)
    history = []
    n_iter = 0
    # rounding slack: relative to J, plus an absolute floor tied to the data's energy
    slack = 1e-20 * float(np.einsum("ij,ij->", H, H)) + 1e-300
    for n_iter in range(1, max_iter + 1):
        centers_new, counts = update_centers(H, assignments, k, centers)
        J_upd = objective(H, centers_new, assignments)
        if J_upd > J * (1 + 1e-12) + slack:
            raise NumericalError("k-means center update increased the objective")
        if np.any(counts == 0):
            centers_new = _reseed_empty(H, centers_new, assignments, counts)
        centers = centers_new
        new_assign = assign(H, centers)
        J_new = objective(H, centers, new_assign)
        if J_new > J_upd * (1 + 1e-12) + slack:
            raise NumericalError("k-means assignment step increased the objective")
        changed = not np.array_equal(new_assign, assignments)
        assignments = new_assign
        history.append(J_new)
        converged = not changed or abs(J - J_new) < tol * J_new
        J = J_new
        if converged and np.all(np.bincount(assignments, minlength=k) > 0):
            break
    # final means for the final memberships
    centers, counts = update_centers(H, assignments, k, centers)
    J_final = objective(H, centers, assignments)
    if J_final < J:
        history.append(J_final)
        J = J_final
    return centers, assignments, J, history, n_iter


def fit(H, k: int, seed: int = 0, n_init: int = 10, max_iter: int = 300, tol: float = 1e-6) -> ClusterModel:
    """Best of ``n_init`` Lloyd runs, each started from ``k`` distinct random rows."""
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2:
        raise ValueError("k-means expects a 2-D feature matrix")
    n = H.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of samples ({n})")
    if n_init < 1:
        raise ValueError("n_init must be >= 1")
    best = None
    for restart in range(n_init):
        rng = np.random.default_rng([seed, restart])
        init = H[rng.choice(n, size=k, replace=False)]
        centers, assignments, J, history, n_iter = _lloyd(H, init, max_iter, tol)
        if best is None or J < best.objective:
            best = ClusterModel(centers, assignments, J, history, seed, n_iter)
    return best


def predict(model: ClusterModel, H):
    return assign(np.asarray(H, dtype=np.float64), model.centers)


def wss(model: ClusterModel, H):
    """Within-cluster sum of squared distances to the assigned centers."""
    return objective(np.asarray(H, dtype=np.float64), model.centers, model.assignments)


@dataclass
class ElbowScan:
    k_values: list
    wss: list
    knee: Optional[int] = None
    knee_strength: float = 0.0
    weak: bool = True


def find_knee(k_values, wss_values, weak_threshold=WEAK_ELBOW):
    """Knee of a WSS curve, its normalized second difference, and a weak flag.

    The curve is min-max normalized and the knee is the interior k with the
    largest second forward difference (smaller k on ties).
    """
    w = np.asarray(wss_values, dtype=np.float64)
    if w.size < 3:
        return None, 0.0, True
    span = w.max() - w.min()
    w = (w - w.min()) / span if span > 0 else np.zeros_like(w)
    d2 = w[:-2] - 2.0 * w[1:-1] + w[2:]
    i = int(np.argmax(d2))
    strength = float(d2[i])
    return int(k_values[i + 1]), strength, strength < weak_threshold


def elbow_scan(H, k_range=range(2, 16), seed: int = 0, n_init: int = 10,
               max_iter: int = 300, tol: float = 1e-6) -> ElbowScan:
    H = np.asarray(H, dtype=np.float64)
    ks = [int(k) for k in k_range]
    if ks and max(ks) > H.shape[0]:
        raise ValueError("largest k exceeds the number of samples")
    curve = [fit(H, k, seed=seed, n_init=n_init, max_iter=max_iter, tol=tol).objective for k in ks]
    knee, strength, weak = find_knee(ks, curve)
    return ElbowScan(ks, curve, knee, strength, weak)


def pairwise_distances(H):
    H = np.asarray(H, dtype=np.float64)
    sq = np.einsum("ij,ij->i", H, H)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (H @ H.T)
    np.fill_diagonal(d2, 0.0)
    D = np.sqrt(np.maximum(d2, 0.0))
    # exact recompute where cancellation can dominate
    small = d2 < 1e-8 * (sq[:, None] + sq[None, :] + 1e-300)
    if np.any(small):
        ii, jj = np.nonzero(small)
        diff = H[ii] - H[jj]
        D[ii, jj] = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    return D


def silhouette(H, assignments):
    """Per-sample silhouette s(i) = (b - a) / max(a, b) and its mean.

    ``a`` is the mean distance to the other members of the sample's cluster,
    ``b`` the smallest mean distance to the members of another cluster.
    Samples in singleton clusters score 0.
    """
    assignments = np.asarray(assignments)
    labels, inv = np.unique(assignments, return_inverse=True)
    if labels.size < 2:
        raise ValueError("silhouette needs at least 2 clusters")
    n = assignments.shape[0]
    D = pairwise_distances(H)
    onehot = np.zeros((n, labels.size))
    onehot[np.arange(n), inv] = 1.0
    sums = D @ onehot
    sizes = onehot.sum(axis=0)
    own = sizes[inv]
    a = np.where(own > 1, sums[np.arange(n), inv] / np.maximum(own - 1, 1), 0.0)
    means = sums / sizes
    means[np.arange(n), inv] = np.inf
    b = means.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where((own > 1) & (denom > 0), (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return s, float(s.mean())


def silhouette_report(H, assignments):
    s, mean = silhouette(H, assignments)
    assignments = np.asarray(assignments)
    clusters = {}
    for c in np.unique(assignments):
        m = assignments == c
        clusters[str(int(c))] = {"size": int(m.sum()), "mean": float(s[m].mean())}
    return {"overall_mean": mean, "clusters": clusters}
