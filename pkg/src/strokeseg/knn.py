"""Exact k-nearest-neighbor classification with vote-proportion posteriors.

Neighbors are ranked by squared Euclidean distance over the full feature
vector, ties broken by lower training-row index.  An optional kd-tree
accelerates queries; with or without it the results are identical, which the
test suite checks against a brute-force scan.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import KTooLarge
from .features import TrainingSet
from .volume import NUM_CLASSES

_LEAF_SIZE = 16


@dataclass
class KdTree:
    """Array-backed kd-tree over float64 points (cycling split axes)."""

    points: np.ndarray  # (n, d) float64
    perm: np.ndarray  # point index per leaf slot
    split_dim: np.ndarray
    split_val: np.ndarray
    left: np.ndarray  # child node id, -1 at leaves
    right: np.ndarray
    start: np.ndarray  # leaf range into perm
    end: np.ndarray


def build_kdtree(points: np.ndarray, leaf_size: int = _LEAF_SIZE) -> KdTree:
    points = np.ascontiguousarray(points, dtype=np.float64)
    n, dim = points.shape
    perm = np.arange(n, dtype=np.int64)
    split_dim, split_val = [], []
    left, right, start, end = [], [], [], []

    def new_node():
        split_dim.append(-1)
        split_val.append(0.0)
        left.append(-1)
        right.append(-1)
        start.append(0)
        end.append(0)
        return len(left) - 1

    def build(lo, hi, depth):
        node = new_node()
        if hi - lo <= leaf_size:
            start[node], end[node] = lo, hi
            return node
        axis = depth % dim
        mid = (lo + hi) // 2
        seg = perm[lo:hi]
        order = np.argpartition(points[seg, axis], mid - lo)
        perm[lo:hi] = seg[order]
        split_dim[node] = axis
        split_val[node] = points[perm[mid], axis]
        left[node] = build(lo, mid, depth + 1)
        right[node] = build(mid, hi, depth + 1)
        return node

    build(0, n, 0)
    return KdTree(
        points=points,
        perm=perm,
        split_dim=np.array(split_dim, dtype=np.int64),
        split_val=np.array(split_val, dtype=np.float64),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        start=np.array(start, dtype=np.int64),
        end=np.array(end, dtype=np.int64),
    )


@njit(cache=True)
def _query_batch(
    points, perm, split_dim, split_val, left, right, start, end, queries, k
):
    """k-nearest rows for each query, ordered by (distance^2, row index)."""
    nq = queries.shape[0]
    dim = points.shape[1]
    out = np.empty((nq, k), dtype=np.int64)
    best_d = np.empty(k, dtype=np.float64)
    best_i = np.empty(k, dtype=np.int64)
    node_stack = np.empty(64, dtype=np.int64)
    dist_stack = np.empty(64, dtype=np.float64)
    for q in range(nq):
        for t in range(k):
            best_d[t] = np.inf
            best_i[t] = np.iinfo(np.int64).max
        top = 0
        node_stack[top] = 0
        dist_stack[top] = 0.0
        top += 1
        while top > 0:
            top -= 1
            node = node_stack[top]
            bound = dist_stack[top]
            if bound > best_d[k - 1]:
                continue
            while left[node] >= 0:
                axis = split_dim[node]
                delta = queries[q, axis] - split_val[node]
                if delta <= 0.0:
                    far = right[node]
                    node = left[node]
                else:
                    far = left[node]
                    node = right[node]
                far_bound = delta * delta
                if far_bound <= best_d[k - 1]:
                    node_stack[top] = far
                    dist_stack[top] = far_bound
                    top += 1
            for s in range(start[node], end[node]):
                idx = perm[s]
                d2 = 0.0
                for c in range(dim):
                    diff = queries[q, c] - points[idx, c]
                    d2 += diff * diff
                worst_d = best_d[k - 1]
                if d2 < worst_d or (d2 == worst_d and idx < best_i[k - 1]):
                    pos = k - 1
                    while pos > 0 and (
                        d2 < best_d[pos - 1]
                        or (d2 == best_d[pos - 1] and idx < best_i[pos - 1])
                    ):
                        best_d[pos] = best_d[pos - 1]
                        best_i[pos] = best_i[pos - 1]
                        pos -= 1
                    best_d[pos] = d2
                    best_i[pos] = idx
        for t in range(k):
            out[q, t] = best_i[t]
    return out


def brute_force_neighbors(points: np.ndarray, queries: np.ndarray, k: int):
    """Full-scan k-nearest rows with the same (distance, index) ordering.

    Distances accumulate dimension by dimension in float64, matching the
    kd-tree kernel's rounding exactly.
    """
    points = np.asarray(points, dtype=np.float64)
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    n, dim = points.shape
    out = np.empty((len(queries), k), dtype=np.int64)
    rows = np.arange(n)
    for q, query in enumerate(queries):
        d2 = np.zeros(n, dtype=np.float64)
        for t in range(dim):
            d2 += (points[:, t] - query[t]) ** 2
        order = np.lexsort((rows, d2))
        out[q] = order[:k]
    return out


@dataclass
class KnnModel:
    """Stored training set plus an optional kd-tree index."""

    features: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) uint8
    k: int
    tree: KdTree | None


def knn_train(ts: TrainingSet, k: int = 3, use_index: bool = True) -> KnnModel:
    n = len(ts)
    if not 1 <= k <= n:
        raise KTooLarge(f"k={k} with only {n} training rows")
    feats = np.ascontiguousarray(ts.features, dtype=np.float64)
    tree = build_kdtree(feats) if use_index else None
    return KnnModel(features=feats, labels=ts.labels.copy(), k=k, tree=tree)


def knn_neighbors(model: KnnModel, queries: np.ndarray) -> np.ndarray:
    """(nq, k) training-row indices, nearest first."""
    queries = np.ascontiguousarray(
        np.atleast_2d(np.asarray(queries, dtype=np.float64))
    )
    if model.tree is not None:
        t = model.tree
        return _query_batch(
            t.points, t.perm, t.split_dim, t.split_val,
            t.left, t.right, t.start, t.end, queries, model.k,
        )
    return brute_force_neighbors(model.features, queries, model.k)


def knn_posterior_batch(model: KnnModel, queries: np.ndarray) -> np.ndarray:
    """Vote-share posteriors, one row of 4 class probabilities per query."""
    neigh = knn_neighbors(model, queries)
    classes = model.labels[neigh]  # (nq, k)
    post = np.zeros((len(neigh), NUM_CLASSES), dtype=np.float64)
    for t in range(model.k):
        np.add.at(post, (np.arange(len(neigh)), classes[:, t]), 1.0)
    return post / model.k


def knn_posterior(model: KnnModel, feature: np.ndarray) -> np.ndarray:
    return knn_posterior_batch(model, feature)[0]


def knn_classify_batch(model: KnnModel, queries: np.ndarray) -> np.ndarray:
    """Argmax of the vote posterior; a vote tie goes to the class of the
    nearest neighbor belonging to one of the tied classes."""
    neigh = knn_neighbors(model, queries)
    classes = model.labels[neigh]
    counts = np.zeros((len(neigh), NUM_CLASSES), dtype=np.int64)
    rows = np.arange(len(neigh))
    for t in range(model.k):
        np.add.at(counts, (rows, classes[:, t]), 1)
    top = counts.max(axis=1)
    tied = counts == top[:, None]
    result = counts.argmax(axis=1).astype(np.uint8)
    ambiguous = tied.sum(axis=1) > 1
    if ambiguous.any():
        amb_rows = np.nonzero(ambiguous)[0]
        resolved = np.zeros(len(amb_rows), dtype=bool)
        for t in range(model.k):
            c = classes[amb_rows, t]
            hit = tied[amb_rows, c] & ~resolved
            result[amb_rows[hit]] = c[hit]
            resolved |= hit
            if resolved.all():
                break
    return result


def knn_classify(model: KnnModel, feature: np.ndarray) -> int:
    return int(knn_classify_batch(model, feature)[0])
