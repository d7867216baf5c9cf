"""Classical baselines under the same folds and metrics as the GNN.

Classification: a bagged forest of Gini trees with class-balanced weighting,
and stagewise gradient boosting on logistic loss with depth-limited trees
and imbalance-scaled positive gradients. Clustering: Lloyd k-means with
k-means++ seeding and silhouette-based k selection, and spectral clustering
on the symmetric-normalized Laplacian with a dense cyclic-Jacobi
eigensolver (node counts here stay in the hundreds).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gnn import evaluate_classifier
from .riskcluster.metrics import silhouette


# ---------------------------------------------------------------------------
# Decision trees
# ---------------------------------------------------------------------------

@dataclass
class _Node:
    feature: int = -1
    threshold: float = 0.0
    left: "_Node | None" = None
    right: "_Node | None" = None
    value: float = 0.0         # leaf payload: class index or regression value

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(self.left.depth(), self.right.depth())


def _predict_tree(node: _Node, X: np.ndarray) -> np.ndarray:
    out = np.empty(len(X))
    for i, row in enumerate(X):
        cur = node
        while not cur.is_leaf:
            cur = cur.left if row[cur.feature] <= cur.threshold else cur.right
        out[i] = cur.value
    return out


def _gini_best_split(X: np.ndarray, y: np.ndarray, w: np.ndarray,
                     features: np.ndarray) -> tuple[int, float, float] | None:
    """Best (feature, threshold, impurity_decrease) by weighted Gini."""
    total_w = w.sum()
    w1 = w[y == 1].sum()
    parent_gini = 1.0 - ((w1 / total_w) ** 2 + ((total_w - w1) / total_w) ** 2)
    best = None
    best_gain = 1e-12
    for f in features:
        order = np.argsort(X[:, f], kind="stable")
        xs, ys, ws = X[order, f], y[order], w[order]
        cum_w = np.cumsum(ws)
        cum_w1 = np.cumsum(ws * ys)
        boundary = np.flatnonzero(np.diff(xs) > 0)
        if boundary.size == 0:
            continue
        wl = cum_w[boundary]
        wl1 = cum_w1[boundary]
        wr = total_w - wl
        wr1 = cum_w1[-1] - wl1
        gini_l = 1.0 - (wl1 / wl) ** 2 - ((wl - wl1) / wl) ** 2
        gini_r = 1.0 - (wr1 / wr) ** 2 - ((wr - wr1) / wr) ** 2
        gain = parent_gini - (wl * gini_l + wr * gini_r) / total_w
        j = int(np.argmax(gain))
        if gain[j] > best_gain:
            best_gain = float(gain[j])
            thr = (xs[boundary[j]] + xs[boundary[j] + 1]) / 2.0
            best = (int(f), float(thr), best_gain)
    return best


def _grow_gini_tree(X: np.ndarray, y: np.ndarray, w: np.ndarray, depth: int,
                    max_depth: int | None, max_features: int,
                    rng: np.random.Generator) -> _Node:
    w1 = w[y == 1].sum()
    w0 = w.sum() - w1
    majority = 1.0 if w1 > w0 else 0.0
    if (max_depth is not None and depth >= max_depth) or w1 == 0 or w0 == 0 or len(y) < 2:
        return _Node(value=majority)
    features = rng.permutation(X.shape[1])[:max_features]
    split = _gini_best_split(X, y, w, np.sort(features))
    if split is None:
        return _Node(value=majority)
    f, thr, _ = split
    mask = X[:, f] <= thr
    left = _grow_gini_tree(X[mask], y[mask], w[mask], depth + 1, max_depth,
                           max_features, rng)
    right = _grow_gini_tree(X[~mask], y[~mask], w[~mask], depth + 1, max_depth,
                            max_features, rng)
    return _Node(feature=f, threshold=thr, left=left, right=right, value=majority)


@dataclass
class TreeEnsemble:
    trees: list[_Node]
    mode: str                  # "bagged-forest" | "boosted"
    learning_rate: float = 1.0
    base_score: float = 0.0
    class_weights: dict[int, float] = field(default_factory=dict)
    imbalance_scale: float = 1.0
    constant_prediction: float | None = None
    flags: list[str] = field(default_factory=list)


def class_balanced_weights(y: np.ndarray) -> dict[int, float]:
    """Weights inversely proportional to class frequency, mean-normalized."""
    n = len(y)
    out = {}
    for cls in (0, 1):
        n_c = int(np.sum(y == cls))
        out[cls] = n / (2.0 * n_c) if n_c else 0.0
    return out


def random_forest_fit(X: np.ndarray, y: np.ndarray, n_trees: int = 100,
                      class_balanced: bool = True, max_depth: int | None = None,
                      seed: int = 0) -> TreeEnsemble:
    """Bootstrap-bagged Gini trees; sqrt-feature subsampling per split."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    rng = np.random.default_rng(seed)
    if len(set(y.tolist())) == 1:
        return TreeEnsemble(trees=[], mode="bagged-forest",
                            constant_prediction=float(y[0]),
                            flags=["single_class_training_data"])
    weights = class_balanced_weights(y) if class_balanced else {0: 1.0, 1: 1.0}
    w = np.array([weights[int(t)] for t in y])
    max_features = max(1, int(math.sqrt(X.shape[1])))
    trees = []
    for _ in range(n_trees):
        idx = rng.integers(0, len(y), size=len(y))
        trees.append(_grow_gini_tree(X[idx], y[idx], w[idx], 0, max_depth,
                                     max_features, rng))
    return TreeEnsemble(trees=trees, mode="bagged-forest", class_weights=weights)


def forest_predict(ensemble: TreeEnsemble, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if ensemble.constant_prediction is not None:
        return np.full(len(X), int(ensemble.constant_prediction))
    votes = np.zeros(len(X))
    for tree in ensemble.trees:
        votes += _predict_tree(tree, X)
    return (votes * 2 > len(ensemble.trees)).astype(int)


# ---------------------------------------------------------------------------
# Gradient boosting on logistic loss
# ---------------------------------------------------------------------------

def _best_newton_split(X: np.ndarray, g: np.ndarray, h: np.ndarray,
                       ) -> tuple[int, float] | None:
    """Split maximizing sum-of-squares gain G_L^2/H_L + G_R^2/H_R - G^2/H."""
    G, H = g.sum(), h.sum()
    parent = G * G / max(H, 1e-12)
    best, best_gain = None, 1e-10
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs, gs, hs = X[order, f], g[order], h[order]
        cg, ch = np.cumsum(gs), np.cumsum(hs)
        boundary = np.flatnonzero(np.diff(xs) > 0)
        if boundary.size == 0:
            continue
        gl, hl = cg[boundary], ch[boundary]
        gr, hr = G - gl, H - hl
        gain = gl ** 2 / np.maximum(hl, 1e-12) + gr ** 2 / np.maximum(hr, 1e-12) - parent
        j = int(np.argmax(gain))
        if gain[j] > best_gain:
            best_gain = float(gain[j])
            best = (f, float((xs[boundary[j]] + xs[boundary[j] + 1]) / 2.0))
    return best


def _grow_newton_tree(X: np.ndarray, g: np.ndarray, h: np.ndarray,
                      depth: int, max_depth: int) -> _Node:
    if depth >= max_depth or len(g) < 2:
        return _Node(value=float(g.sum() / max(h.sum(), 1e-12)))
    split = _best_newton_split(X, g, h)
    if split is None:
        return _Node(value=float(g.sum() / max(h.sum(), 1e-12)))
    f, thr = split
    mask = X[:, f] <= thr
    return _Node(feature=f, threshold=thr,
                 left=_grow_newton_tree(X[mask], g[mask], h[mask], depth + 1, max_depth),
                 right=_grow_newton_tree(X[~mask], g[~mask], h[~mask], depth + 1, max_depth))


def gbt_fit(X: np.ndarray, y: np.ndarray, depth: int = 3, n_rounds: int = 200,
            learning_rate: float = 0.1, imbalance_scale: float | None = None,
            seed: int = 0) -> tuple[TreeEnsemble, list[float]]:
    """Stagewise boosting; positive-class gradients scaled by negatives/positives.

    Returns the ensemble and the per-round weighted training log-loss.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if len(set(y.tolist())) == 1:
        ens = TreeEnsemble(trees=[], mode="boosted",
                           constant_prediction=float(y[0]),
                           flags=["single_class_training_data"])
        return ens, []
    n_pos = int(np.sum(y == 1))
    scale = imbalance_scale if imbalance_scale is not None else (len(y) - n_pos) / n_pos
    w = np.where(y == 1, scale, 1.0)
    base = math.log(float(np.sum(w * y)) / float(np.sum(w * (1 - y))))

    F = np.full(len(y), base)
    trees: list[_Node] = []
    losses: list[float] = []
    for _ in range(n_rounds):
        p = 1.0 / (1.0 + np.exp(-F))
        g = w * (y - p)
        h = w * p * (1.0 - p)
        tree = _grow_newton_tree(X, g, h, 0, depth)
        trees.append(tree)
        F = F + learning_rate * _predict_tree(tree, X)
        p = np.clip(1.0 / (1.0 + np.exp(-F)), 1e-12, 1 - 1e-12)
        losses.append(float(-np.sum(w * (y * np.log(p) + (1 - y) * np.log(1 - p)))
                            / np.sum(w)))
    ens = TreeEnsemble(trees=trees, mode="boosted", learning_rate=learning_rate,
                       base_score=base, imbalance_scale=float(scale))
    return ens, losses


def gbt_predict(ensemble: TreeEnsemble, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if ensemble.constant_prediction is not None:
        return np.full(len(X), int(ensemble.constant_prediction))
    F = np.full(len(X), ensemble.base_score)
    for tree in ensemble.trees:
        F += ensemble.learning_rate * _predict_tree(tree, X)
    return (F > 0).astype(int)


def max_tree_depth(ensemble: TreeEnsemble) -> int:
    return max((t.depth() for t in ensemble.trees), default=0)


# ---------------------------------------------------------------------------
# K-means
# ---------------------------------------------------------------------------

def kmeans_fit(points: np.ndarray, k: int, seed: int = 0, max_iter: int = 200
               ) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """k-means++ seeding then Lloyd iterations; returns (labels, centroids, inertias)."""
    X = np.asarray(points, dtype=float)
    n = len(X)
    if k > n:
        raise ValueError(f"k={k} exceeds {n} points")
    rng = np.random.default_rng(seed)

    centroids = np.empty((k, X.shape[1]))
    centroids[0] = X[int(rng.integers(n))]
    d2 = np.sum((X - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        probs = d2 / total if total > 0 else np.full(n, 1.0 / n)
        centroids[j] = X[int(rng.choice(n, p=probs))]
        d2 = np.minimum(d2, np.sum((X - centroids[j]) ** 2, axis=1))

    labels = np.zeros(n, dtype=int)
    inertias: list[float] = []
    for _ in range(max_iter):
        dists = np.sum((X[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        new_labels = np.argmin(dists, axis=1)
        inertias.append(float(dists[np.arange(n), new_labels].sum()))
        for j in range(k):
            members = X[new_labels == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
            else:  # re-seed an empty cluster at the farthest point
                far = int(np.argmax(dists[np.arange(n), new_labels]))
                centroids[j] = X[far]
        if np.array_equal(new_labels, labels) and len(inertias) > 1:
            break
        labels = new_labels
    return labels, centroids, inertias


def kmeans_select(points: np.ndarray, ks=(2, 3, 4), seed: int = 0
                  ) -> tuple[np.ndarray, int, dict[int, float]]:
    """Best k by silhouette over the candidate set."""
    scores: dict[int, float] = {}
    results = {}
    for k in ks:
        labels, _, _ = kmeans_fit(points, k, seed=seed)
        if len(set(labels.tolist())) < 2:
            continue
        scores[k], _ = silhouette(points, labels)
        results[k] = labels
    if not scores:
        raise ValueError("no candidate k produced at least 2 clusters")
    best_k = max(sorted(scores), key=lambda k: scores[k])
    return results[best_k], best_k, scores


# ---------------------------------------------------------------------------
# Spectral clustering
# ---------------------------------------------------------------------------

def jacobi_eigh(A: np.ndarray, tol: float = 1e-12, max_sweeps: int = 50
                ) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi rotations for a dense symmetric matrix.

    Returns eigenvalues ascending and the matching orthonormal eigenvectors
    as columns. Intended for matrices up to a few hundred rows.
    """
    A = np.asarray(A, dtype=float)
    if not np.allclose(A, A.T, atol=1e-10):
        raise ValueError("matrix is not symmetric")
    n = A.shape[0]
    a = A.copy()
    v = np.eye(n)
    scale = max(float(np.max(np.abs(A))), 1e-300)
    for _ in range(max_sweeps):
        off = math.sqrt(np.sum(np.tril(a, -1) ** 2))
        if off <= tol * scale * n:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= tol * scale / n:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rp, rq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                cp, cq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    eigvals = np.diag(a).copy()
    order = np.argsort(eigvals, kind="stable")
    return eigvals[order], v[:, order]


def normalized_laplacian(affinity: np.ndarray) -> np.ndarray:
    A = np.asarray(affinity, dtype=float)
    if np.any(A < 0):
        raise ValueError("affinity must be nonnegative")
    deg = A.sum(axis=1)
    inv_sqrt = np.where(deg > 0, 1.0 / np.sqrt(np.maximum(deg, 1e-300)), 0.0)
    return np.eye(len(A)) - (inv_sqrt[:, None] * A) * inv_sqrt[None, :]


def spectral_fit(affinity: np.ndarray, k: int, seed: int = 0) -> np.ndarray:
    """Bottom-k eigenvectors of the symmetric-normalized Laplacian, row-normalized,
    clustered with k-means."""
    L = normalized_laplacian(affinity)
    L = (L + L.T) / 2.0
    _, vecs = jacobi_eigh(L)
    emb = vecs[:, :k]
    norms = np.linalg.norm(emb, axis=1, keepdims=True)
    emb = np.divide(emb, norms, out=np.zeros_like(emb), where=norms > 0)
    labels, _, _ = kmeans_fit(emb, k, seed=seed)
    return labels


def spectral_select(affinity: np.ndarray, ks=(2, 3, 4), seed: int = 0
                    ) -> tuple[np.ndarray, int, dict[int, float]]:
    L = normalized_laplacian(affinity)
    L = (L + L.T) / 2.0
    _, vecs = jacobi_eigh(L)
    scores: dict[int, float] = {}
    results = {}
    for k in ks:
        emb = vecs[:, :k]
        norms = np.linalg.norm(emb, axis=1, keepdims=True)
        emb = np.divide(emb, norms, out=np.zeros_like(emb), where=norms > 0)
        labels, _, _ = kmeans_fit(emb, k, seed=seed)
        if len(set(labels.tolist())) < 2:
            continue
        scores[k], _ = silhouette(emb, labels)
        results[k] = labels
    if not scores:
        raise ValueError("no candidate k produced at least 2 clusters")
    best_k = max(sorted(scores), key=lambda k: scores[k])
    return results[best_k], best_k, scores


# ---------------------------------------------------------------------------
# Shared evaluation path
# ---------------------------------------------------------------------------

def classification_cv(X: np.ndarray, y: np.ndarray, folds: list[np.ndarray],
                      fit_predict) -> list[dict]:
    """Evaluate a fit/predict callable on the exact folds the GNN uses."""
    y = np.asarray(y, dtype=int)
    metrics = []
    for test_idx in folds:
        train_idx = np.setdiff1d(np.arange(len(y)), test_idx)
        pred = fit_predict(X[train_idx], y[train_idx], X[test_idx])
        metrics.append(evaluate_classifier(pred, y[test_idx]))
    return metrics
