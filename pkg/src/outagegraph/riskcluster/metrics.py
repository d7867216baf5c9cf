"""Internal cluster-quality indices and statistical validation."""

from __future__ import annotations

import math

import numpy as np

from ..util import f_sf
from .density import NOISE


def silhouette(points: np.ndarray, labels: np.ndarray) -> tuple[float, dict[int, float]]:
    """Mean silhouette over non-noise points, plus per-cluster means.

    a(i) is the mean distance to the point's own cluster (self excluded),
    b(i) the smallest mean distance to any other cluster. Singleton clusters
    contribute 0 by convention.
    """
    points = np.asarray(points, dtype=float)
    labels = np.asarray(labels)
    keep = labels != NOISE
    pts, labs = points[keep], labels[keep]
    clusters = sorted(set(labs.tolist()))
    if len(clusters) < 2:
        raise ValueError("silhouette requires at least 2 clusters")
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=2))

    scores = np.zeros(len(labs))
    for i in range(len(labs)):
        own = labs == labs[i]
        n_own = int(own.sum())
        if n_own <= 1:
            scores[i] = 0.0
            continue
        a = dist[i, own].sum() / (n_own - 1)
        b = min(dist[i, labs == c].mean() for c in clusters if c != labs[i])
        scores[i] = 0.0 if max(a, b) == 0 else (b - a) / max(a, b)
    per_cluster = {int(c): float(scores[labs == c].mean()) for c in clusters}
    return float(scores.mean()), per_cluster


def davies_bouldin(points: np.ndarray, labels: np.ndarray) -> float:
    """Mean over clusters of the worst intra-scatter / centroid-separation ratio."""
    points = np.asarray(points, dtype=float)
    labels = np.asarray(labels)
    keep = labels != NOISE
    pts, labs = points[keep], labels[keep]
    clusters = sorted(set(labs.tolist()))
    if len(clusters) < 2:
        raise ValueError("davies_bouldin requires at least 2 clusters")
    centroids = {}
    scatter = {}
    for c in clusters:
        members = pts[labs == c]
        if len(members) == 0:
            raise ValueError(f"cluster {c} is empty")
        centroids[c] = members.mean(axis=0)
        scatter[c] = float(np.mean(np.linalg.norm(members - centroids[c], axis=1)))
    worst = []
    for ci in clusters:
        ratios = []
        for cj in clusters:
            if cj == ci:
                continue
            sep = float(np.linalg.norm(centroids[ci] - centroids[cj]))
            if sep == 0:
                raise ValueError("coincident centroids")
            ratios.append((scatter[ci] + scatter[cj]) / sep)
        worst.append(max(ratios))
    return float(np.mean(worst))


def anova_f(groups: list[np.ndarray]) -> tuple[float, float]:
    """One-way ANOVA: F = MSB/MSW and its p-value.

    Zero within-group variance with unequal means reports (inf, 0.0).
    """
    if len(groups) < 2:
        raise ValueError("ANOVA requires at least 2 groups")
    groups = [np.asarray(g, dtype=float) for g in groups]
    if any(len(g) < 2 for g in groups):
        raise ValueError("every group needs at least 2 members")
    all_values = np.concatenate(groups)
    grand = all_values.mean()
    n_total = len(all_values)
    k = len(groups)
    ssb = sum(len(g) * (g.mean() - grand) ** 2 for g in groups)
    ssw = sum(float(np.sum((g - g.mean()) ** 2)) for g in groups)
    df_b, df_w = k - 1, n_total - k
    msb = ssb / df_b
    if ssw == 0.0:
        if msb == 0.0:
            return 0.0, 1.0
        return math.inf, 0.0
    f_stat = msb / (ssw / df_w)
    return float(f_stat), float(f_sf(f_stat, df_b, df_w))


def format_p(p: float) -> str:
    """Report convention: p-values below 1e-4 print as '<0.0001'."""
    return "<0.0001" if p < 1e-4 else f"{p:.4f}"


def adjusted_rand_index(labels_a: np.ndarray, labels_b: np.ndarray) -> float:
    """Agreement between two labelings, corrected for chance."""
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape:
        raise ValueError("label arrays differ in length")
    classes_a = sorted(set(a.tolist()))
    classes_b = sorted(set(b.tolist()))
    table = np.zeros((len(classes_a), len(classes_b)), dtype=np.int64)
    ia = {c: i for i, c in enumerate(classes_a)}
    ib = {c: i for i, c in enumerate(classes_b)}
    for x, y in zip(a, b):
        table[ia[x], ib[y]] += 1

    def comb2(x):
        return x * (x - 1) / 2.0

    sum_cells = float(sum(comb2(int(v)) for v in table.flat))
    sum_rows = float(sum(comb2(int(v)) for v in table.sum(axis=1)))
    sum_cols = float(sum(comb2(int(v)) for v in table.sum(axis=0)))
    total = comb2(len(a))
    expected = sum_rows * sum_cols / total if total else 0.0
    max_index = (sum_rows + sum_cols) / 2.0
    if max_index == expected:
        return 1.0
    return (sum_cells - expected) / (max_index - expected)


def intra_cluster_edge_ratio(edges: list[tuple[int, int]], labels: np.ndarray,
                             n_permutations: int = 200,
                             rng: np.random.Generator | None = None) -> dict:
    """Fraction of edges whose endpoints share a cluster, vs a permutation null.

    Noise nodes never count as sharing. Returns the observed ratio, the null
    mean/sd over label permutations, and the z-score of the observation.
    """
    labels = np.asarray(labels)
    rng = rng or np.random.default_rng(0)
    if not edges:
        return {"ratio": 0.0, "null_mean": 0.0, "null_sd": 0.0, "z": 0.0,
                "n_edges": 0, "n_intra": 0}
    us = np.array([e[0] for e in edges])
    vs = np.array([e[1] for e in edges])

    def ratio_for(lab: np.ndarray) -> float:
        lu, lv = lab[us], lab[vs]
        return float(np.mean((lu == lv) & (lu != NOISE)))

    observed = ratio_for(labels)
    null = np.array([ratio_for(rng.permutation(labels)) for _ in range(n_permutations)])
    sd = float(null.std())
    z = (observed - float(null.mean())) / sd if sd > 0 else math.inf
    return {"ratio": observed, "null_mean": float(null.mean()), "null_sd": sd,
            "z": float(z), "n_edges": len(edges),
            "n_intra": int(round(observed * len(edges)))}
