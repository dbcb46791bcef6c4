"""Feature construction: per-modality min-max normalization, 6-D voxel
features (three normalized intensities plus normalized grid position),
stroke ingestion and class-balanced subsampling of the training set.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConflictingLabels,
    EmptyMask,
    StrokeOutsideMask,
    TargetTooSmall,
)
from .volume import NUM_CLASSES, BrainMask, MultiModalVolume

STROKES_VERSION = 1


@dataclass(frozen=True)
class StrokeSet:
    """Sparse user-labeled voxels.

    voxels holds (i, j, k) rows; labels the matching class codes; stroke_ids
    groups voxels painted by the same stroke (cross-validation keeps a
    stroke's voxels together).  Consistent duplicates are collapsed on
    construction, conflicting ones rejected.  provenance optionally records
    where each stroke was painted.
    """

    voxels: np.ndarray  # (n, 3) int32, columns i, j, k
    labels: np.ndarray  # (n,) uint8
    stroke_ids: np.ndarray | None = None  # (n,) int32
    provenance: tuple = ()

    def __post_init__(self):
        voxels = np.asarray(self.voxels, dtype=np.int32).reshape(-1, 3)
        labels = np.asarray(self.labels, dtype=np.uint8).reshape(-1)
        if len(voxels) != len(labels):
            raise ConflictingLabels("voxel/label count mismatch")
        if self.stroke_ids is None:
            ids = np.zeros(len(labels), dtype=np.int32)
        else:
            ids = np.asarray(self.stroke_ids, dtype=np.int32).reshape(-1)
            if len(ids) != len(labels):
                raise ConflictingLabels("voxel/stroke-id count mismatch")
        voxels, labels, ids = _dedup(voxels, labels, ids)
        object.__setattr__(self, "voxels", voxels)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "stroke_ids", ids)

    def __len__(self) -> int:
        return len(self.labels)

    def classes_present(self) -> set[int]:
        return set(int(c) for c in np.unique(self.labels))

    def merge(self, other: "StrokeSet") -> "StrokeSet":
        """Union of two stroke sets; conflicting labels raise."""
        offset = int(self.stroke_ids.max()) + 1 if len(self) else 0
        return StrokeSet(
            voxels=np.concatenate([self.voxels, other.voxels]),
            labels=np.concatenate([self.labels, other.labels]),
            stroke_ids=np.concatenate(
                [self.stroke_ids, other.stroke_ids + offset]
            ),
            provenance=self.provenance + other.provenance,
        )

    def to_dict(self) -> dict:
        strokes = [
            {"i": int(i), "j": int(j), "k": int(k), "label": int(c), "stroke": int(s)}
            for (i, j, k), c, s in zip(self.voxels, self.labels, self.stroke_ids)
        ]
        return {"version": STROKES_VERSION, "strokes": strokes}

    @classmethod
    def from_dict(cls, payload: dict) -> "StrokeSet":
        strokes = payload.get("strokes", [])
        voxels = np.array(
            [[s["i"], s["j"], s["k"]] for s in strokes], dtype=np.int32
        ).reshape(-1, 3)
        labels = np.array([s["label"] for s in strokes], dtype=np.uint8)
        ids = np.array(
            [s.get("stroke", 0) for s in strokes], dtype=np.int32
        )
        return cls(voxels=voxels, labels=labels, stroke_ids=ids)


def _dedup(voxels: np.ndarray, labels: np.ndarray, ids: np.ndarray):
    """Collapse duplicate voxels, keeping first occurrence order; a voxel
    appearing with two different labels is a conflict."""
    if len(voxels) == 0:
        return voxels, labels, ids
    seen: dict[tuple[int, int, int], int] = {}
    keep = []
    for row, ((i, j, k), c) in enumerate(zip(voxels, labels)):
        key = (int(i), int(j), int(k))
        prev = seen.get(key)
        if prev is None:
            seen[key] = int(c)
            keep.append(row)
        elif prev != int(c):
            raise ConflictingLabels(
                f"voxel {key} labeled both {prev} and {int(c)}"
            )
    idx = np.array(keep, dtype=np.intp)
    return voxels[idx], labels[idx], ids[idx]


def save_strokes(strokes: StrokeSet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(strokes.to_dict(), fh)


def load_strokes(path) -> StrokeSet:
    with open(path, "r", encoding="utf-8") as fh:
        return StrokeSet.from_dict(json.load(fh))


@dataclass(frozen=True)
class FeatureMap:
    """Feature rows for every in-mask voxel plus both directions of the
    voxel <-> row mapping."""

    features: np.ndarray  # (n, 6) or (n, 3) float32, all values in [0, 1]
    voxels: np.ndarray  # (n, 3) int32, row r -> (i, j, k)
    node_ids: np.ndarray = field(repr=False)  # (D, H, W) int32, -1 outside mask

    @property
    def count(self) -> int:
        return len(self.features)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def store_bytes(self) -> int:
        """Size of the float32 feature store."""
        return self.features.shape[0] * self.features.shape[1] * 4

    def rows_for_voxels(self, voxels: np.ndarray) -> np.ndarray:
        """Map (n, 3) voxel indices to feature rows; out-of-mask raises."""
        voxels = np.asarray(voxels, dtype=np.int64).reshape(-1, 3)
        d, h, w = self.node_ids.shape
        i, j, k = voxels[:, 0], voxels[:, 1], voxels[:, 2]
        in_dims = (i >= 0) & (i < w) & (j >= 0) & (j < h) & (k >= 0) & (k < d)
        if not in_dims.all():
            bad = voxels[~in_dims][0]
            raise StrokeOutsideMask(f"voxel {tuple(bad)} outside volume dims")
        rows = self.node_ids[k, j, i]
        if (rows < 0).any():
            bad = voxels[rows < 0][0]
            raise StrokeOutsideMask(f"voxel {tuple(bad)} outside brain mask")
        return rows.astype(np.int64)


def normalize_modalities(vol: MultiModalVolume, mask: BrainMask) -> np.ndarray:
    """Min-max normalize each modality over in-mask voxels.

    Out-of-mask voxels are set to 0; a constant modality maps to all zeros.
    """
    if mask.count == 0:
        raise EmptyMask("cannot normalize with an empty brain mask")
    inside = mask.inside
    out = np.zeros_like(vol.data, dtype=np.float32)
    for m in range(vol.num_modalities):
        chan = vol.data[m]
        vals = chan[inside]
        lo = float(vals.min())
        hi = float(vals.max())
        if hi > lo:
            out[m][inside] = (vals - lo) / np.float32(hi - lo)
    return out


def featurize(
    normalized: np.ndarray, mask: BrainMask, with_spatial: bool = True
) -> FeatureMap:
    """Build one feature row per in-mask voxel from a normalized table.

    Rows are ordered by flat (k, j, i) scan order.  Spatial components are
    i/(W-1), j/(H-1), k/(D-1), or 0 where the extent is 1.
    """
    d, h, w = mask.inside.shape
    kk, jj, ii = np.nonzero(mask.inside)
    n = len(ii)
    m = normalized.shape[0]
    dim = m + 3 if with_spatial else m
    feats = np.empty((n, dim), dtype=np.float32)
    for c in range(m):
        feats[:, c] = normalized[c][kk, jj, ii]
    if with_spatial:
        feats[:, m] = ii / np.float32(w - 1) if w > 1 else 0.0
        feats[:, m + 1] = jj / np.float32(h - 1) if h > 1 else 0.0
        feats[:, m + 2] = kk / np.float32(d - 1) if d > 1 else 0.0
    voxels = np.stack([ii, jj, kk], axis=1).astype(np.int32)
    node_ids = np.full((d, h, w), -1, dtype=np.int32)
    node_ids[kk, jj, ii] = np.arange(n, dtype=np.int32)
    return FeatureMap(features=feats, voxels=voxels, node_ids=node_ids)


@dataclass(frozen=True)
class TrainingSet:
    """Labeled feature rows extracted at stroke voxels."""

    features: np.ndarray  # (n, dim) float32
    labels: np.ndarray  # (n,) uint8
    source_voxels: np.ndarray  # (n, 3) int32
    groups: np.ndarray | None = None  # (n,) int32 stroke ids

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def classes_present(self) -> set[int]:
        return set(int(c) for c in np.unique(self.labels))


def build_training_set(fm: FeatureMap, strokes: StrokeSet) -> TrainingSet:
    """One training row per (deduplicated) stroke entry, labels verbatim."""
    rows = fm.rows_for_voxels(strokes.voxels)
    return TrainingSet(
        features=fm.features[rows],
        labels=strokes.labels.copy(),
        source_voxels=strokes.voxels.copy(),
        groups=strokes.stroke_ids.copy(),
    )


def _largest_remainder(exact: np.ndarray, total: int) -> np.ndarray:
    """Integer quotas summing to total, proportional to exact shares."""
    floors = np.floor(exact).astype(np.int64)
    rem = int(total - floors.sum())
    if rem > 0:
        # stable argsort; ties resolved by position order
        order = np.argsort(-(exact - floors), kind="stable")
        floors[order[:rem]] += 1
    return floors


def subsample_balanced(
    ts: TrainingSet, target_n: int, seed: int = 0
) -> TrainingSet:
    """Down-sample a training set, preserving the healthy vs non-healthy
    split and, inside the non-healthy subset, the per-class proportions.

    Quotas use largest-remainder rounding; every represented class keeps at
    least two rows (or all it has).  Sampling is without replacement and
    deterministic for a given seed.  When len(ts) <= target_n the set is
    returned unchanged.
    """
    if target_n < 2 * NUM_CLASSES:
        raise TargetTooSmall(f"target_n {target_n} < {2 * NUM_CLASSES}")
    n = len(ts)
    if n <= target_n:
        return ts

    labels = ts.labels
    healthy_idx = np.nonzero(labels == 0)[0]
    unhealthy_idx = np.nonzero(labels != 0)[0]
    shares = np.array(
        [len(healthy_idx), len(unhealthy_idx)], dtype=np.float64
    ) * (target_n / n)
    q_healthy, q_unhealthy = _largest_remainder(shares, target_n)

    quotas = np.zeros(NUM_CLASSES, dtype=np.int64)
    quotas[0] = q_healthy
    present = [c for c in range(1, NUM_CLASSES) if (labels == c).any()]
    if present and q_unhealthy > 0:
        counts = np.array([(labels == c).sum() for c in present], dtype=np.float64)
        sub = _largest_remainder(
            counts * (q_unhealthy / counts.sum()), int(q_unhealthy)
        )
        for c, q in zip(present, sub):
            quotas[c] = q

    # keep at least two rows per represented class, paid for by the slackest
    available = np.array([(labels == c).sum() for c in range(NUM_CLASSES)])
    minimum = np.minimum(2, available)
    for c in range(NUM_CLASSES):
        while quotas[c] < minimum[c]:
            donors = [
                x
                for x in range(NUM_CLASSES)
                if x != c and quotas[x] > minimum[x]
            ]
            donor = max(donors, key=lambda x: (quotas[x] - minimum[x], -x))
            quotas[donor] -= 1
            quotas[c] += 1

    rng = np.random.default_rng(seed)
    chosen = []
    for c in range(NUM_CLASSES):
        if quotas[c] == 0:
            continue
        pool = np.nonzero(labels == c)[0]
        chosen.append(rng.choice(pool, size=int(quotas[c]), replace=False))
    idx = np.sort(np.concatenate(chosen))
    return TrainingSet(
        features=ts.features[idx],
        labels=ts.labels[idx],
        source_voxels=ts.source_voxels[idx],
        groups=None if ts.groups is None else ts.groups[idx],
    )
