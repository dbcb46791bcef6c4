"""Decision-tree ensembles: random forests over Gini-split trees and
multi-class (SAMME) AdaBoost over depth-1 stumps.

Leaves keep class-count vectors; a leaf's posterior is the relative class
frequency of the training points routed to it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import SingleClassInput
from .features import TrainingSet
from .volume import NUM_CLASSES


@dataclass
class DecisionTree:
    """Flat array representation: feature < 0 marks a leaf."""

    feature: np.ndarray  # (nodes,) int16
    threshold: np.ndarray  # (nodes,) float64
    left: np.ndarray  # (nodes,) int32
    right: np.ndarray  # (nodes,) int32
    leaf_counts: np.ndarray  # (nodes, 4) float64 class-count (or weight) sums
    leaf_posterior: np.ndarray  # (nodes, 4) float64 normalized counts


def _gini_best_split(X, y, w, candidates, min_leaf):
    """Best (feature, threshold, score) over candidate features, or None.

    Thresholds are midpoints between sorted adjacent distinct values; a split
    is valid when both sides keep at least min_leaf points.
    """
    n = len(y)
    total_w = w.sum()
    best = None
    for f in candidates:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ys = y[order]
        ws = w[order]
        onehot = np.zeros((n, NUM_CLASSES))
        onehot[np.arange(n), ys] = ws
        cum = np.cumsum(onehot, axis=0)  # class-weight mass left of each cut
        cut_ok = xs[:-1] < xs[1:]
        pos = np.nonzero(cut_ok)[0]
        pos = pos[(pos + 1 >= min_leaf) & (n - pos - 1 >= min_leaf)]
        if len(pos) == 0:
            continue
        left_w = cum[pos].sum(axis=1)
        right_w = total_w - left_w
        left_sq = (cum[pos] ** 2).sum(axis=1)
        right_sq = ((cum[-1] - cum[pos]) ** 2).sum(axis=1)
        # weighted Gini after split, dropping the constant total weight
        score = (left_w - left_sq / left_w) + (right_w - right_sq / right_w)
        local = int(np.argmin(score))
        if best is None or score[local] < best[2]:
            thr = 0.5 * (float(xs[pos[local]]) + float(xs[pos[local] + 1]))
            best = (int(f), thr, float(score[local]))
    return best


def fit_tree(
    features: np.ndarray,
    labels: np.ndarray,
    mtry: int,
    min_leaf: int,
    rng: np.random.Generator,
    max_depth: int | None = None,
    sample_weight: np.ndarray | None = None,
) -> DecisionTree:
    """Grow one tree; splits minimize weighted Gini impurity.

    mtry features are sampled per split; when none of them admits a valid
    split of an impure node, the remaining features are also searched so
    fully-grown trees memorize distinct training points.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    n, d = X.shape
    w = (
        np.full(n, 1.0 / n)
        if sample_weight is None
        else np.asarray(sample_weight, dtype=np.float64)
    )
    mtry = max(1, min(mtry, d))

    feature, threshold, left, right, counts = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(np.zeros(NUM_CLASSES))
        return len(feature) - 1

    def grow(idx, depth):
        node = new_node()
        ys = y[idx]
        ws = w[idx]
        cnt = np.zeros(NUM_CLASSES)
        np.add.at(cnt, ys, ws)
        counts[node] = cnt
        pure = (cnt > 0).sum() <= 1
        if pure or len(idx) < 2 * min_leaf or (max_depth is not None and depth >= max_depth):
            return node
        cand = rng.choice(d, size=mtry, replace=False)
        split = _gini_best_split(X[idx], ys, ws, cand, min_leaf)
        if split is None and mtry < d:
            rest = np.setdiff1d(np.arange(d), cand)
            split = _gini_best_split(X[idx], ys, ws, rest, min_leaf)
        if split is None:
            return node
        f, thr, _ = split
        go_left = X[idx, f] < thr
        feature[node] = f
        threshold[node] = thr
        left[node] = grow(idx[go_left], depth + 1)
        right[node] = grow(idx[~go_left], depth + 1)
        return node

    grow(np.arange(n), 0)
    counts = np.array(counts)
    totals = counts.sum(axis=1, keepdims=True)
    totals[totals == 0] = 1.0
    return DecisionTree(
        feature=np.array(feature, dtype=np.int16),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int32),
        right=np.array(right, dtype=np.int32),
        leaf_counts=counts,
        leaf_posterior=counts / totals,
    )


@njit(cache=True)
def _predict_packed(X, feature, threshold, left, right, posterior, roots, weights, vote):
    n = X.shape[0]
    out = np.zeros((n, posterior.shape[1]))
    for s in range(n):
        for t in range(len(roots)):
            node = roots[t]
            while feature[node] >= 0:
                if X[s, feature[node]] < threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            if vote:
                best = 0
                for c in range(1, posterior.shape[1]):
                    if posterior[node, c] > posterior[node, best]:
                        best = c
                out[s, best] += weights[t]
            else:
                for c in range(posterior.shape[1]):
                    out[s, c] += weights[t] * posterior[node, c]
    return out


def _pack(trees):
    """Concatenate tree arrays; child ids shifted to absolute offsets."""
    roots = []
    off = 0
    feats, thrs, lefts, rights, posts = [], [], [], [], []
    for t in trees:
        roots.append(off)
        feats.append(t.feature)
        thrs.append(t.threshold)
        shift = np.where(t.left >= 0, t.left + off, -1)
        lefts.append(shift)
        rights.append(np.where(t.right >= 0, t.right + off, -1))
        posts.append(t.leaf_posterior)
        off += len(t.feature)
    return (
        np.concatenate(feats),
        np.concatenate(thrs),
        np.concatenate(lefts).astype(np.int32),
        np.concatenate(rights).astype(np.int32),
        np.ascontiguousarray(np.concatenate(posts)),
        np.array(roots, dtype=np.int64),
    )


@dataclass
class ForestModel:
    trees: list
    seed: int
    _packed: tuple = field(default=None, repr=False)

    def packed(self):
        if self._packed is None:
            self._packed = _pack(self.trees)
        return self._packed


def forest_train(
    ts: TrainingSet,
    n_trees: int = 100,
    mtry: int = 2,
    min_leaf: int = 1,
    seed: int = 0,
) -> ForestModel:
    """Bootstrap-resampled trees; reproducible from (data, params, seed)."""
    if len(ts.classes_present()) < 2:
        raise SingleClassInput("forest needs at least two classes")
    if len(ts) < 2:
        raise SingleClassInput("forest needs at least two rows")
    X = np.asarray(ts.features, dtype=np.float64)
    y = ts.labels
    n = len(y)
    trees = []
    for ss in np.random.SeedSequence(seed).spawn(n_trees):
        rng = np.random.default_rng(ss)
        rows = rng.integers(0, n, size=n)
        trees.append(fit_tree(X[rows], y[rows], mtry, min_leaf, rng))
    return ForestModel(trees=trees, seed=seed)


@dataclass
class BoostModel:
    stumps: list
    betas: np.ndarray
    _packed: tuple = field(default=None, repr=False)

    def packed(self):
        if self._packed is None:
            self._packed = _pack(self.stumps)
        return self._packed


def boost_train(ts: TrainingSet, rounds: int = 100, seed: int = 0) -> BoostModel:
    """SAMME boosting of decision stumps for the four-class problem.

    Stage weight is ln((1-err)/err) + ln(K-1); a perfect stump is kept with
    unit weight and stops the loop, an err >= 1 - 1/K stump is discarded.
    """
    if len(ts.classes_present()) < 2:
        raise SingleClassInput("boosting needs at least two classes")
    X = np.asarray(ts.features, dtype=np.float64)
    y = ts.labels.astype(np.int64)
    n, d = X.shape
    w = np.full(n, 1.0 / n)
    rng = np.random.default_rng(seed)
    stumps, betas = [], []
    for _ in range(rounds):
        stump = fit_tree(X, y, mtry=d, min_leaf=1, rng=rng, max_depth=1, sample_weight=w)
        packed = _pack([stump])
        pred = _predict_packed(
            X, *packed, np.ones(1), True
        ).argmax(axis=1)
        mis = pred != y
        err = float(w[mis].sum())
        if err <= 0.0:
            stumps.append(stump)
            betas.append(1.0)
            break
        if err >= 1.0 - 1.0 / NUM_CLASSES:
            break
        beta = float(np.log((1.0 - err) / err) + np.log(NUM_CLASSES - 1.0))
        stumps.append(stump)
        betas.append(beta)
        w = w * np.exp(beta * mis)
        w /= w.sum()
    return BoostModel(stumps=stumps, betas=np.array(betas))


def ensemble_posterior_batch(model, X: np.ndarray) -> np.ndarray:
    """Forest: mean of leaf posteriors.  Boost: normalized weighted votes.

    An empty boost model (every stump was discarded) returns uniform rows.
    """
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    if isinstance(model, ForestModel):
        t = len(model.trees)
        weights = np.full(t, 1.0 / t)
        return _predict_packed(X, *model.packed(), weights, False)
    if len(model.stumps) == 0:
        return np.full((len(X), NUM_CLASSES), 1.0 / NUM_CLASSES)
    weights = model.betas / model.betas.sum()
    return _predict_packed(X, *model.packed(), weights, True)


def ensemble_posterior(model, feature: np.ndarray) -> np.ndarray:
    return ensemble_posterior_batch(model, np.atleast_2d(feature))[0]
