"""Per-volume hyper-parameter selection.

Stratified k-fold cross-validation on the stroke training set, scored by
macro-averaged per-class F1; the grid is scanned in ascending parameter
order and ties keep the earlier (smaller) point.  Also provides the
paper-profile fixed hyper-parameters and seeded Gaussian perturbation for
the noise-sensitivity experiment.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ClassTooSmall
from .features import TrainingSet
from .knn import knn_posterior_batch, knn_train
from .svm import KernelSpec, svm_posterior_batch, svm_train_multiclass
from .trees import boost_train, ensemble_posterior_batch, forest_train
from .volume import NUM_CLASSES

CLASSIFIERS = ("knn", "lsvm", "ksvm", "pksvm", "rf", "adaboost")

DEFAULT_GRIDS = {
    "knn": {"k": [1, 3, 5, 7]},
    "lsvm": {"C": [0.1, 1.0, 10.0, 100.0]},
    "ksvm": {
        "C": [0.1, 1.0, 10.0, 100.0],
        "gamma": [0.5, 1.0, 5.0, 10.0, 50.0, 100.0],
    },
    "pksvm": {
        "C": [0.1, 1.0, 10.0, 100.0],
        "gamma1": [1.0, 5.0, 10.0, 50.0, 100.0, 200.0],
        "gamma2": [1.0, 5.0, 10.0, 50.0, 100.0],
    },
    "rf": {"n_trees": [50, 100], "min_leaf": [1, 3]},
    "adaboost": {"rounds": [50, 100]},
}

FIXED_PROFILES = {
    "knn": {"k": 3},
    "lsvm": {"C": 1.0},
    "ksvm": {"C": 1.0, "gamma": 5.0},
    "pksvm": {"C": 1.0, "gamma1": 100.0, "gamma2": 10.0},
    "rf": {"n_trees": 100, "min_leaf": 1},
    "adaboost": {"rounds": 100},
}

# scan order per classifier; ties resolve toward earlier values
PARAM_ORDER = {
    "knn": ("k",),
    "lsvm": ("C",),
    "ksvm": ("C", "gamma"),
    "pksvm": ("C", "gamma1", "gamma2"),
    "rf": ("n_trees", "min_leaf"),
    "adaboost": ("rounds",),
}

INTEGER_PARAMS = {"k", "n_trees", "min_leaf", "rounds"}


def fixed_profile(kind: str) -> dict:
    """Paper-reported fixed hyper-parameters per classifier."""
    return dict(FIXED_PROFILES[kind])


def train_classifier(kind: str, ts: TrainingSet, params: dict, seed: int = 0):
    """Train any of the supported classifiers; returns an opaque model."""
    if kind == "knn":
        return knn_train(ts, k=int(params["k"]))
    if kind == "lsvm":
        return svm_train_multiclass(ts, C=params["C"], kernel=KernelSpec("linear"))
    if kind == "ksvm":
        return svm_train_multiclass(
            ts, C=params["C"], kernel=KernelSpec("rbf", gamma=params["gamma"])
        )
    if kind == "pksvm":
        return svm_train_multiclass(
            ts,
            C=params["C"],
            kernel=KernelSpec(
                "product", gamma1=params["gamma1"], gamma2=params["gamma2"]
            ),
        )
    if kind == "rf":
        return forest_train(
            ts,
            n_trees=int(params["n_trees"]),
            min_leaf=int(params["min_leaf"]),
            seed=seed,
        )
    if kind == "adaboost":
        return boost_train(ts, rounds=int(params["rounds"]), seed=seed)
    raise ValueError(f"unknown classifier {kind!r}")


def classifier_posteriors(kind: str, model, X: np.ndarray) -> np.ndarray:
    if kind == "knn":
        return knn_posterior_batch(model, X)
    if kind in ("lsvm", "ksvm", "pksvm"):
        return svm_posterior_batch(model, X)
    return ensemble_posterior_batch(model, X)


def grid_points(grid: dict, kind: str):
    """All grid combinations in the documented ascending scan order."""
    names = [n for n in PARAM_ORDER[kind] if n in grid]
    points = [{}]
    for name in names:
        points = [
            {**p, name: v} for p in points for v in sorted(grid[name])
        ]
    return points


def stratified_folds(
    labels: np.ndarray,
    folds: int,
    seed: int,
    voxels: np.ndarray | None = None,
    groups: np.ndarray | None = None,
):
    """Fold id per row: each row validates exactly once and per-fold class
    shares stay within one of proportional.

    Rows of one stroke (same group id) are kept contiguous, and without
    group ids each class's rows are ordered spatially, so whole strokes
    land in one fold; a random split would leak every stroke into every
    fold and reward fold-memorizing hyper-parameters.
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    fold_of = np.empty(len(labels), dtype=np.int64)
    for c in np.unique(labels):
        rows = np.nonzero(labels == c)[0]
        if len(rows) < folds:
            raise ClassTooSmall(
                f"class {int(c)} has {len(rows)} rows < {folds} folds"
            )
        if groups is not None:
            gids = groups[rows]
            uniq = np.unique(gids)
            group_order = rng.permutation(uniq)
            rank = {int(g): r for r, g in enumerate(group_order)}
            order = np.argsort([rank[int(g)] for g in gids], kind="stable")
            rows = rows[order]
        elif voxels is not None:
            pos = voxels[rows]
            order = np.lexsort((pos[:, 0], pos[:, 1], pos[:, 2]))
            rows = np.roll(rows[order], int(rng.integers(len(rows))))
        else:
            rows = rng.permutation(rows)
        splits = np.array_split(rows, folds)
        order = rng.permutation(folds)
        for f, block in enumerate(splits):
            fold_of[block] = order[f]
    return fold_of


def macro_f1(truth: np.ndarray, pred: np.ndarray) -> float:
    """Mean per-class F1 over the four tissue classes (0/0 counts as 0)."""
    scores = []
    for c in range(NUM_CLASSES):
        tp = int(((pred == c) & (truth == c)).sum())
        fp = int(((pred == c) & (truth != c)).sum())
        fn = int(((pred != c) & (truth == c)).sum())
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
    return float(np.mean(scores))


@dataclass
class SelectionResult:
    classifier: str
    chosen: dict
    scores: list = field(default_factory=list)  # [{"params":..., "score":...}]
    folds: int = 3
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "classifier": self.classifier,
            "chosen": self.chosen,
            "scores": self.scores,
            "folds": self.folds,
            "seed": self.seed,
        }


def grid_search(
    ts: TrainingSet,
    kind: str,
    grid: dict | None = None,
    folds: int = 3,
    seed: int = 0,
) -> SelectionResult:
    """Pick hyper-parameters by stratified k-fold CV on the stroke set."""
    grid = grid if grid is not None else DEFAULT_GRIDS[kind]
    fold_of = stratified_folds(
        ts.labels, folds, seed, voxels=ts.source_voxels, groups=ts.groups
    )
    points = grid_points(grid, kind)

    fold_sets = []
    for f in range(folds):
        val = fold_of == f
        fold_sets.append(
            (
                TrainingSet(
                    features=ts.features[~val],
                    labels=ts.labels[~val],
                    source_voxels=ts.source_voxels[~val],
                ),
                ts.features[val].astype(np.float64),
                ts.labels[val],
            )
        )

    best_score = -np.inf
    best_params = None
    scores = []
    for params in points:
        preds, truths = [], []
        for f, (train_set, val_x, val_y) in enumerate(fold_sets):
            model = train_classifier(kind, train_set, params, seed=seed + f)
            post = classifier_posteriors(kind, model, val_x)
            preds.append(post.argmax(axis=1))
            truths.append(val_y)
        score = macro_f1(np.concatenate(truths), np.concatenate(preds))
        scores.append({"params": dict(params), "score": score})
        if score > best_score:
            best_score = score
            best_params = dict(params)
    return SelectionResult(
        classifier=kind,
        chosen=best_params,
        scores=scores,
        folds=folds,
        seed=seed,
    )


def perturb_hyperparams(params: dict, noise_pct: float, seed: int = 0) -> dict:
    """Gaussian-perturb each positive hyper-parameter by a percentage of its
    own value, floored at a thousandth of it; integer-typed parameters are
    rounded back and kept >= 1.  Deterministic in (params, noise_pct, seed).
    """
    if noise_pct < 0:
        raise ValueError("noise_pct must be >= 0")
    rng = np.random.default_rng(seed)
    out = {}
    for name in sorted(params):
        x = params[name]
        noisy = x + rng.normal(0.0, noise_pct / 100.0 * x) if noise_pct > 0 else x
        noisy = max(noisy, x * 1e-3)
        if name in INTEGER_PARAMS:
            noisy = max(1, int(round(noisy)))
        out[name] = noisy
    return out
