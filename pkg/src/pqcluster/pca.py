"""Principal component analysis by eigendecomposition of the sample covariance."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from pqcluster import container

FORMAT = "pqcluster-pca"


@dataclass(frozen=True)
class PCAModel:
    mean: np.ndarray          # (d,)
    components: np.ndarray    # (m, d), orthonormal rows
    eigenvalues: np.ndarray   # (m,), non-increasing
    spectrum: np.ndarray      # all d eigenvalues, non-increasing
    explained_fraction: float

    @property
    def n_components(self):
        return self.components.shape[0]

    @property
    def n_features(self):
        return self.mean.shape[0]

    def to_arrays(self):
        return {
            "mean": self.mean,
            "components": self.components,
            "eigenvalues": self.eigenvalues,
            "spectrum": self.spectrum,
        }

    @classmethod
    def from_arrays(cls, arrays, explained_fraction):
        return cls(arrays["mean"], arrays["components"], arrays["eigenvalues"],
                   arrays["spectrum"], float(explained_fraction))


def _orient(vectors):
    # make the largest-magnitude entry of each row positive
    idx = np.argmax(np.abs(vectors), axis=1)
    signs = np.sign(vectors[np.arange(len(vectors)), idx])
    signs[signs == 0] = 1.0
    return vectors * signs[:, None]


def fit(X, variance_target: float = 0.95, fixed_m: Optional[int] = None) -> PCAModel:
    """Fit PCA keeping ``fixed_m`` components, or the fewest reaching ``variance_target``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("PCA expects a 2-D matrix")
    n, d = X.shape
    if n < 2:
        raise ValueError("PCA needs at least 2 samples")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / (n - 1)
    cov = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1]
    vals = np.clip(vals[order], 0.0, None)
    vecs = vecs[:, order].T
    total = float(vals.sum())
    if not total > 0:
        raise ValueError("zero-variance data: no principal components (m = 0)")
    if fixed_m is not None:
        m = int(fixed_m)
        if not 1 <= m <= d:
            raise ValueError(f"fixed_m must lie in [1, {d}]")
    else:
        if not 0 < variance_target <= 1:
            raise ValueError("variance_target must lie in (0, 1]")
        frac = np.cumsum(vals) / total
        m = int(np.searchsorted(frac, variance_target - 1e-12) + 1)
        m = min(m, d)
    comps = _orient(vecs[:m])
    return PCAModel(
        mean=mean,
        components=np.ascontiguousarray(comps),
        eigenvalues=vals[:m].copy(),
        spectrum=vals,
        explained_fraction=float(vals[:m].sum() / total),
    )


def transform(model: PCAModel, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError(f"expected (n, {model.n_features}) input, got {X.shape}")
    return (X - model.mean) @ model.components.T


def inverse_transform(model: PCAModel, Y):
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2 or Y.shape[1] != model.n_components:
        raise ValueError(f"expected (n, {model.n_components}) input, got {Y.shape}")
    return Y @ model.components + model.mean


def save(path, model: PCAModel):
    container.save(path, {"format": FORMAT, "version": 1,
                          "explained_fraction": model.explained_fraction}, model.to_arrays())


def load(path) -> PCAModel:
    header, arrays = container.load(path)
    if header.get("format") != FORMAT:
        raise ValueError(f"{path}: not a PCA container")
    return PCAModel.from_arrays(arrays, header["explained_fraction"])
