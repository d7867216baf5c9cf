"""Dimensionality reduction behind one pluggable interface.

The default reducer is a deterministic principal-component projection:
orthonormal directions from the eigendecomposition of the covariance,
component signs fixed by the largest-loading convention. Alternative
reducers register under a name and share the same call signature.
"""

from __future__ import annotations

from typing import Callable

import numpy as np


def pca_project(points: np.ndarray, target_dim: int = 3,
                whiten: bool = True) -> tuple[np.ndarray, dict]:
    """Project onto the top principal components.

    With ``whiten`` (the default for the clustering path) every retained
    component is scaled to unit variance, so downstream density parameters
    expressed as absolute distances keep a stable meaning regardless of how
    compact the embedding is. Rank below target_dim pads with zero
    components and sets the ``rank_deficient`` flag.
    """
    x = np.asarray(points, dtype=float)
    if x.ndim != 2:
        raise ValueError("points must be a 2-D matrix")
    center = x.mean(axis=0)
    xc = x - center
    cov = xc.T @ xc / max(len(x) - 1, 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]

    tol = max(eigvals[0], 0.0) * 1e-10 if eigvals.size else 0.0
    rank = int(np.sum(eigvals > tol))
    k = min(target_dim, eigvecs.shape[1])
    components = eigvecs[:, :k].copy()
    for j in range(k):
        lead = np.argmax(np.abs(components[:, j]))
        if components[lead, j] < 0:
            components[:, j] = -components[:, j]

    projected = xc @ components
    if whiten:
        scale = np.sqrt(np.maximum(eigvals[:k], tol if tol > 0 else 1e-300))
        live = eigvals[:k] > tol
        projected[:, live] = projected[:, live] / scale[live]
    if k < target_dim:
        projected = np.hstack([projected, np.zeros((len(x), target_dim - k))])
    if rank < target_dim:
        projected[:, rank:target_dim] = 0.0
    total_var = float(eigvals.sum()) if eigvals.size else 0.0
    info = {
        "explained_variance": [float(v) for v in eigvals[:target_dim]],
        "explained_variance_ratio": [float(v / total_var) if total_var > 0 else 0.0
                                     for v in eigvals[:target_dim]],
        "rank_deficient": rank < target_dim,
        "whiten": whiten,
        "components": components,
        "center": center,
    }
    return projected, info


REDUCERS: dict[str, Callable[[np.ndarray, int], tuple[np.ndarray, dict]]] = {
    "pca": pca_project,
}


def register_reducer(name: str, fn: Callable[[np.ndarray, int], tuple[np.ndarray, dict]]) -> None:
    REDUCERS[name] = fn


def reduce_dim(points: np.ndarray, target_dim: int = 3, method: str = "pca"
               ) -> tuple[np.ndarray, dict]:
    if method not in REDUCERS:
        raise ValueError(f"unknown reducer {method!r}; have {sorted(REDUCERS)}")
    return REDUCERS[method](points, target_dim)
