"""Density-based clustering: mutual reachability, MST, condensed tree, extraction.

The pipeline follows the standard hierarchical density-clustering recipe:
core distance to the min_samples-th neighbor (the point itself counts),
mutual reachability max(core_u, core_v, d(u, v)), a minimum spanning tree,
a single-linkage merge hierarchy, condensation with min_cluster_size,
stability-based (excess-of-mass) extraction with the root excluded, and an
epsilon rule that merges clusters born below the distance threshold upward.
Points outside every selected cluster are labeled NOISE (-1).

All tie-breaking is by index, so the output is invariant to input order up
to relabeling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NOISE = -1


@dataclass
class CondensedTree:
    # Parallel arrays: one record per child (cluster or point) leaving a cluster.
    parents: np.ndarray
    children: np.ndarray
    lambdas: np.ndarray
    sizes: np.ndarray
    n_points: int
    root: int


def pairwise_distances(points: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - points[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=2))


def core_distances(dist: np.ndarray, min_samples: int) -> np.ndarray:
    """Distance to the min_samples-th nearest neighbor, self included."""
    n = dist.shape[0]
    k = min(min_samples, n) - 1
    return np.sort(dist, axis=1)[:, k]


def mutual_reachability(dist: np.ndarray, min_samples: int) -> np.ndarray:
    core = core_distances(dist, min_samples)
    mr = np.maximum(dist, core[:, None])
    mr = np.maximum(mr, core[None, :])
    np.fill_diagonal(mr, 0.0)
    return mr


def minimum_spanning_tree(weights: np.ndarray) -> list[tuple[int, int, float]]:
    """Prim's algorithm on a dense weight matrix; ties resolved by index."""
    n = weights.shape[0]
    in_tree = np.zeros(n, dtype=bool)
    best = weights[0].copy()
    src = np.zeros(n, dtype=np.int64)
    in_tree[0] = True
    best[0] = np.inf
    edges: list[tuple[int, int, float]] = []
    for _ in range(n - 1):
        masked = np.where(in_tree, np.inf, best)
        j = int(np.argmin(masked))
        edges.append((int(src[j]), j, float(masked[j])))
        in_tree[j] = True
        improve = (weights[j] < best) & ~in_tree
        best[improve] = weights[j][improve]
        src[improve] = j
        best[j] = np.inf
    return edges


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n
        self.cluster = list(range(n))  # current dendrogram node id per root

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int, new_cluster: int) -> int:
        ra, rb = self.find(a), self.find(b)
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        self.cluster[ra] = new_cluster
        return self.size[ra]


def single_linkage(mst_edges: list[tuple[int, int, float]], n: int) -> np.ndarray:
    """Merge hierarchy from sorted MST edges: rows (left, right, dist, size)."""
    order = sorted(mst_edges, key=lambda e: (e[2], min(e[0], e[1]), max(e[0], e[1])))
    uf = _UnionFind(n)
    linkage = np.zeros((n - 1, 4))
    for i, (u, v, w) in enumerate(order):
        ru, rv = uf.find(u), uf.find(v)
        left, right = uf.cluster[ru], uf.cluster[rv]
        size = uf.union(u, v, n + i)
        linkage[i] = (left, right, w, size)
    return linkage


def condense_tree(linkage: np.ndarray, n: int, min_cluster_size: int) -> CondensedTree:
    """Collapse the dendrogram: splits where both sides reach min_cluster_size
    create new clusters; smaller sides shed their points at the split level."""
    root = n + linkage.shape[0] - 1

    def node_size(node: int) -> int:
        return 1 if node < n else int(linkage[node - n, 3])

    def leaves(node: int) -> list[int]:
        out, stack = [], [node]
        while stack:
            cur = stack.pop()
            if cur < n:
                out.append(cur)
            else:
                stack.append(int(linkage[cur - n, 0]))
                stack.append(int(linkage[cur - n, 1]))
        return out

    relabel = {root: n}
    next_label = n + 1
    parents: list[int] = []
    children: list[int] = []
    lambdas: list[float] = []
    sizes: list[int] = []
    queue = [root]
    while queue:
        node = queue.pop(0)
        left, right = int(linkage[node - n, 0]), int(linkage[node - n, 1])
        dist = float(linkage[node - n, 2])
        lam = 1.0 / max(dist, 1e-12)
        cl, cr = node_size(left), node_size(right)
        label = relabel[node]
        if cl >= min_cluster_size and cr >= min_cluster_size:
            for child, csize in ((left, cl), (right, cr)):
                relabel[child] = next_label
                next_label += 1
                parents.append(label)
                children.append(relabel[child])
                lambdas.append(lam)
                sizes.append(csize)
                if child >= n:
                    queue.append(child)
                else:  # a min_cluster_size of 1 admits point-clusters
                    parents.append(relabel[child])
                    children.append(child)
                    lambdas.append(lam)
                    sizes.append(1)
        elif cl < min_cluster_size and cr < min_cluster_size:
            for child in (left, right):
                for p in leaves(child):
                    parents.append(label)
                    children.append(p)
                    lambdas.append(lam)
                    sizes.append(1)
        else:
            big, small = (left, right) if cl >= min_cluster_size else (right, left)
            relabel[big] = label
            if big >= n:
                queue.append(big)
            for p in leaves(small):
                parents.append(label)
                children.append(p)
                lambdas.append(lam)
                sizes.append(1)
    return CondensedTree(parents=np.array(parents, dtype=np.int64),
                         children=np.array(children, dtype=np.int64),
                         lambdas=np.array(lambdas), sizes=np.array(sizes, dtype=np.int64),
                         n_points=n, root=n)


def compute_stability(tree: CondensedTree) -> dict[int, float]:
    births: dict[int, float] = {tree.root: 0.0}
    for parent, child, lam in zip(tree.parents, tree.children, tree.lambdas):
        if child >= tree.n_points:
            births[int(child)] = float(lam)
    stability: dict[int, float] = {c: 0.0 for c in births}
    for parent, lam, size in zip(tree.parents, tree.lambdas, tree.sizes):
        stability[int(parent)] += (float(lam) - births[int(parent)]) * int(size)
    return stability


def extract_clusters(tree: CondensedTree, stability: dict[int, float],
                     cluster_selection_epsilon: float = 0.0) -> set[int]:
    """Excess-of-mass selection (root excluded) plus the epsilon merge rule."""
    parent_of: dict[int, int] = {}
    cluster_children: dict[int, list[int]] = {c: [] for c in stability}
    for parent, child in zip(tree.parents, tree.children):
        if child >= tree.n_points:
            parent_of[int(child)] = int(parent)
            cluster_children[int(parent)].append(int(child))

    births = {tree.root: 0.0}
    for parent, child, lam in zip(tree.parents, tree.children, tree.lambdas):
        if child >= tree.n_points:
            births[int(child)] = float(lam)

    selected: set[int] = set()
    subtree: dict[int, float] = {}
    for c in sorted(stability, reverse=True):  # children precede parents
        child_sum = sum(subtree[ch] for ch in cluster_children[c])
        if c == tree.root:
            subtree[c] = child_sum
            continue
        if stability[c] >= child_sum:
            selected.add(c)
            subtree[c] = stability[c]
        else:
            subtree[c] = child_sum
    # Keep only the shallowest selected cluster along any root-to-leaf path.
    for c in sorted(selected):
        anc = parent_of.get(c)
        while anc is not None and anc != tree.root:
            if anc in selected:
                selected.discard(c)
                break
            anc = parent_of.get(anc)

    if cluster_selection_epsilon > 0.0:
        merged: set[int] = set()
        for c in sorted(selected):
            cur = c
            while 1.0 / births[cur] < cluster_selection_epsilon:
                par = parent_of.get(cur, tree.root)
                if par == tree.root:
                    break
                cur = par
            merged.add(cur)
        selected = merged
        for c in sorted(selected):
            anc = parent_of.get(c)
            while anc is not None and anc != tree.root:
                if anc in selected:
                    selected.discard(c)
                    break
                anc = parent_of.get(anc)
    return selected


def label_points(tree: CondensedTree, selected: set[int]) -> np.ndarray:
    parent_of: dict[int, int] = {}
    point_parent: dict[int, int] = {}
    for parent, child in zip(tree.parents, tree.children):
        if child >= tree.n_points:
            parent_of[int(child)] = int(parent)
        else:
            point_parent[int(child)] = int(parent)

    label_of = {c: i for i, c in enumerate(sorted(selected))}
    labels = np.full(tree.n_points, NOISE, dtype=np.int64)
    for p in range(tree.n_points):
        c = point_parent.get(p, tree.root)
        while c != tree.root and c not in selected:
            c = parent_of[c]
        if c in selected:
            labels[p] = label_of[c]
    return labels


def hdbscan(points: np.ndarray, min_cluster_size: int = 15, min_samples: int = 5,
            cluster_selection_epsilon: float = 0.25) -> np.ndarray:
    """Cluster labels (NOISE = -1) for the given points."""
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if n < min_cluster_size:
        return np.full(n, NOISE, dtype=np.int64)
    dist = pairwise_distances(points)
    mr = mutual_reachability(dist, min_samples)
    mst = minimum_spanning_tree(mr)
    linkage = single_linkage(mst, n)
    tree = condense_tree(linkage, n, min_cluster_size)
    stability = compute_stability(tree)
    selected = extract_clusters(tree, stability, cluster_selection_epsilon)
    return label_points(tree, selected)
