"""BRATS-style evaluation: region binarization and overlap metrics.

Regions: complete = {edema, non-enhancing, enhancing}, core =
{non-enhancing, enhancing}, enhancing = {enhancing}.  Counts are restricted
to the brain mask so air voxels cannot inflate specificity.
"""

from __future__ import annotations

import numpy as np

from .errors import DimsMismatch
from .volume import BrainMask, LabelVolume

REGIONS = {
    "complete": (1, 2, 3),
    "core": (2, 3),
    "enhancing": (3,),
}


def region_binarize(
    lv: LabelVolume, region: str, mask: BrainMask | None = None
) -> np.ndarray:
    """Boolean volume: label in the region's member set and inside the mask."""
    members = REGIONS[region]
    binary = np.isin(lv.labels, members)
    if mask is not None:
        if mask.dims != lv.dims:
            raise DimsMismatch(f"mask {mask.dims} vs labels {lv.dims}")
        binary &= mask.inside
    return binary


def compute_metrics(
    pred: np.ndarray, truth: np.ndarray, mask: BrainMask | None = None
) -> tuple[float, float, float]:
    """(dice, sensitivity, specificity) between two binary volumes.

    Empty-denominator convention: 1.0 when both sides are empty, 0.0 when
    only the denominator side is.
    """
    pred = np.asarray(pred, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if pred.shape != truth.shape:
        raise DimsMismatch(f"pred {pred.shape} vs truth {truth.shape}")
    if mask is not None:
        if mask.inside.shape != pred.shape:
            raise DimsMismatch(f"mask {mask.inside.shape} vs pred {pred.shape}")
        pred = pred[mask.inside]
        truth = truth[mask.inside]

    p1 = int(pred.sum())
    t1 = int(truth.sum())
    overlap = int((pred & truth).sum())
    n = pred.size
    t0 = n - t1
    true_neg = int((~pred & ~truth).sum())

    if p1 + t1 == 0:
        dice = 1.0
    else:
        dice = 2.0 * overlap / (p1 + t1)

    if t1 == 0:
        sensitivity = 1.0 if p1 == 0 else 0.0
    else:
        sensitivity = overlap / t1

    if t0 == 0:
        specificity = 1.0 if p1 == n else 0.0
    else:
        specificity = true_neg / t0

    return dice, sensitivity, specificity


def evaluate_regions(
    pred: LabelVolume, truth: LabelVolume, mask: BrainMask | None = None
) -> dict:
    """Metrics for the three evaluation regions, as a JSON-ready dict."""
    if pred.dims != truth.dims:
        raise DimsMismatch(f"pred {pred.dims} vs truth {truth.dims}")
    report = {}
    for region in REGIONS:
        d, sen, spe = compute_metrics(
            region_binarize(pred, region, mask),
            region_binarize(truth, region, mask),
            mask,
        )
        report[region] = {
            "dice": d,
            "sensitivity": sen,
            "specificity": spe,
        }
    return report
