"""End-to-end segmentation: strokes -> features -> hyper-parameter
selection -> classifier -> optional CRF -> label volume, with stage timings
and an analytic feature-store size, plus the training-size and
hyper-parameter-noise experiment drivers.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .crf import CrfParams, alpha_expansion, build_crf_problem
from .errors import ProductKernelNeedsSpatial, StrokesMissingClass
from .features import (
    FeatureMap,
    StrokeSet,
    TrainingSet,
    build_training_set,
    featurize,
    normalize_modalities,
    subsample_balanced,
)
from .metrics import evaluate_regions
from .selection import (
    CLASSIFIERS,
    SelectionResult,
    classifier_posteriors,
    fixed_profile,
    grid_search,
    train_classifier,
)
from .volume import (
    BrainMask,
    LabelVolume,
    MultiModalVolume,
    NUM_CLASSES,
    compute_brain_mask,
)

PREDICT_CHUNK = 65536


@dataclass(frozen=True)
class PipelineConfig:
    classifier: str = "pksvm"
    use_crf: bool = True
    use_spatial_features: bool = True
    hyper_mode: str = "grid"  # grid | fixed | explicit
    hyper_values: dict | None = None
    grid: dict | None = None  # optional per-classifier grid override
    subsample_n: int = 1000
    subsample_seed: int = 0
    crf: CrfParams = field(default_factory=CrfParams)
    mask_threshold: float = 0.0
    folds: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.classifier not in CLASSIFIERS:
            raise ValueError(f"unknown classifier {self.classifier!r}")
        if self.hyper_mode not in ("grid", "fixed", "explicit"):
            raise ValueError(f"unknown hyper mode {self.hyper_mode!r}")
        if self.hyper_mode == "explicit" and not self.hyper_values:
            raise ValueError("explicit hyper mode needs hyper_values")

    def to_dict(self) -> dict:
        payload = {
            "classifier": self.classifier,
            "use_crf": self.use_crf,
            "use_spatial_features": self.use_spatial_features,
            "hyper": {"mode": self.hyper_mode},
            "subsample": {
                "target_n": self.subsample_n,
                "seed": self.subsample_seed,
            },
            "crf": {
                "lambda": self.crf.lam,
                "sigma2": self.crf.sigma2,
                "connectivity": self.crf.connectivity,
                "epsilon": self.crf.epsilon,
            },
            "mask_threshold": self.mask_threshold,
            "folds": self.folds,
            "seed": self.seed,
        }
        if self.hyper_values is not None:
            payload["hyper"]["values"] = dict(self.hyper_values)
        if self.grid is not None:
            payload["grid"] = self.grid
        return payload

    @classmethod
    def from_dict(cls, payload: dict) -> "PipelineConfig":
        hyper = payload.get("hyper", {})
        sub = payload.get("subsample", {})
        crf_in = payload.get("crf", {})
        crf = CrfParams(
            lam=crf_in.get("lambda", CrfParams.lam),
            sigma2=crf_in.get("sigma2", CrfParams.sigma2),
            connectivity=crf_in.get("connectivity", CrfParams.connectivity),
            epsilon=crf_in.get("epsilon", CrfParams.epsilon),
        )
        return cls(
            classifier=payload.get("classifier", "pksvm"),
            use_crf=payload.get("use_crf", True),
            use_spatial_features=payload.get("use_spatial_features", True),
            hyper_mode=hyper.get("mode", "grid"),
            hyper_values=hyper.get("values"),
            grid=payload.get("grid"),
            subsample_n=sub.get("target_n", 1000),
            subsample_seed=sub.get("seed", 0),
            crf=crf,
            mask_threshold=payload.get("mask_threshold", 0.0),
            folds=payload.get("folds", 3),
            seed=payload.get("seed", 0),
        )


@dataclass
class SegmentationReport:
    labels: LabelVolume
    timings: dict  # stage -> seconds
    feature_store_bytes: int
    hyperparams: dict
    config: PipelineConfig
    selection: SelectionResult | None = None
    classifier_converged: bool = True

    @property
    def total_seconds(self) -> float:
        return float(sum(self.timings.values()))

    def to_dict(self) -> dict:
        out = {
            "dims": list(self.labels.dims),
            "timings": {k: float(v) for k, v in self.timings.items()},
            "total_seconds": self.total_seconds,
            "feature_store_bytes": int(self.feature_store_bytes),
            "hyperparams": self.hyperparams,
            "classifier_converged": self.classifier_converged,
            "config": self.config.to_dict(),
        }
        if self.selection is not None:
            out["selection"] = self.selection.to_dict()
        return out


def prepare_features(
    vol: MultiModalVolume, config: PipelineConfig
) -> tuple[BrainMask, FeatureMap]:
    mask = compute_brain_mask(vol, config.mask_threshold)
    normalized = normalize_modalities(vol, mask)
    fm = featurize(normalized, mask, with_spatial=config.use_spatial_features)
    return mask, fm


def resolve_hyperparams(
    ts: TrainingSet, config: PipelineConfig
) -> tuple[dict, SelectionResult | None]:
    if config.hyper_mode == "fixed":
        return fixed_profile(config.classifier), None
    if config.hyper_mode == "explicit":
        return dict(config.hyper_values), None
    result = grid_search(
        ts,
        config.classifier,
        grid=config.grid,
        folds=config.folds,
        seed=config.seed,
    )
    return result.chosen, result


def assemble_labels(
    dims, fm: FeatureMap, in_mask_labels: np.ndarray
) -> LabelVolume:
    """Scatter per-node labels into a full volume; outside stays healthy."""
    w, h, d = dims
    grid = np.zeros((d, h, w), dtype=np.uint8)
    i, j, k = fm.voxels[:, 0], fm.voxels[:, 1], fm.voxels[:, 2]
    grid[k, j, i] = in_mask_labels
    return LabelVolume(dims=dims, labels=grid)


def predict_posteriors(kind: str, model, features: np.ndarray) -> np.ndarray:
    """Chunked posterior prediction over the whole feature store."""
    out = np.empty((len(features), NUM_CLASSES), dtype=np.float64)
    for lo in range(0, len(features), PREDICT_CHUNK):
        hi = min(lo + PREDICT_CHUNK, len(features))
        out[lo:hi] = classifier_posteriors(
            kind, model, features[lo:hi].astype(np.float64)
        )
    return out


def segment_volume(
    vol: MultiModalVolume,
    strokes: StrokeSet,
    config: PipelineConfig,
    progress_cb=None,
) -> SegmentationReport:
    """Run the full interactive-segmentation pipeline on one volume."""
    if config.classifier == "pksvm" and not config.use_spatial_features:
        raise ProductKernelNeedsSpatial(
            "the product kernel splits modality and spatial sub-vectors"
        )

    def report_progress(stage, frac):
        if progress_cb is not None:
            progress_cb(stage, frac)

    timings = {}
    t0 = time.perf_counter()
    mask, fm = prepare_features(vol, config)
    ts = build_training_set(fm, strokes)
    missing = set(range(NUM_CLASSES)) - ts.classes_present()
    if missing:
        raise StrokesMissingClass(
            f"strokes missing classes {sorted(missing)}"
        )
    ts = subsample_balanced(ts, config.subsample_n, seed=config.subsample_seed)
    timings["featurize"] = time.perf_counter() - t0
    report_progress("featurize", 0.15)

    t0 = time.perf_counter()
    params, selection = resolve_hyperparams(ts, config)
    timings["select"] = time.perf_counter() - t0
    report_progress("select", 0.45)

    t0 = time.perf_counter()
    model = train_classifier(config.classifier, ts, params, seed=config.seed)
    timings["train"] = time.perf_counter() - t0
    report_progress("train", 0.55)

    t0 = time.perf_counter()
    posteriors = predict_posteriors(config.classifier, model, fm.features)
    pred = posteriors.argmax(axis=1).astype(np.uint8)
    timings["predict"] = time.perf_counter() - t0
    report_progress("predict", 0.8)

    t0 = time.perf_counter()
    if config.use_crf:
        problem = build_crf_problem(
            posteriors, fm.features, fm.node_ids, config.crf
        )
        pred = alpha_expansion(problem, pred)
    timings["crf"] = time.perf_counter() - t0
    report_progress("crf", 1.0)

    converged = getattr(model, "converged", True)
    return SegmentationReport(
        labels=assemble_labels(vol.dims, fm, pred),
        timings=timings,
        feature_store_bytes=fm.store_bytes(),
        hyperparams=params,
        config=config,
        selection=selection,
        classifier_converged=bool(converged),
    )


@dataclass
class PhantomCase:
    """One experiment input: a volume, its strokes, and its ground truth."""

    volume: MultiModalVolume
    strokes: StrokeSet
    truth: LabelVolume


def _case_dice(case: PhantomCase, config: PipelineConfig):
    report = segment_volume(case.volume, case.strokes, config)
    mask = compute_brain_mask(case.volume, config.mask_threshold)
    metrics = evaluate_regions(report.labels, case.truth, mask)
    return metrics, report


def experiment_subsample_curve(
    cases: list[PhantomCase],
    sizes: list[int],
    config: PipelineConfig,
    seed: int = 0,
) -> list[dict]:
    """Mean complete-region Dice, wall-clock and feature-store bytes per
    training-set size cap."""
    if sorted(sizes) != list(sizes):
        raise ValueError("sizes must be ascending")
    rows = []
    for n in sizes:
        dices, seconds, store = [], [], []
        for idx, case in enumerate(cases):
            cfg = replace(
                config, subsample_n=n, subsample_seed=seed + idx, seed=seed + idx
            )
            metrics, report = _case_dice(case, cfg)
            dices.append(metrics["complete"]["dice"])
            seconds.append(report.total_seconds)
            store.append(report.feature_store_bytes)
        rows.append(
            {
                "n": int(n),
                "mean_dice": float(np.mean(dices)),
                "mean_seconds": float(np.mean(seconds)),
                "feature_store_bytes": int(np.mean(store)),
            }
        )
    return rows


def experiment_hyper_noise(
    cases: list[PhantomCase],
    noise_pcts: list[float],
    config: PipelineConfig,
    seed: int = 0,
) -> list[dict]:
    """Mean complete-region Dice after perturbing the resolved
    hyper-parameters by each noise percentage."""
    from .selection import perturb_hyperparams

    resolved = []
    for idx, case in enumerate(cases):
        mask, fm = prepare_features(case.volume, config)
        ts = build_training_set(fm, case.strokes)
        ts = subsample_balanced(ts, config.subsample_n, seed=config.subsample_seed)
        cfg = replace(config, seed=seed + idx)
        params, _ = resolve_hyperparams(ts, cfg)
        resolved.append(params)

    rows = []
    for p_idx, pct in enumerate(noise_pcts):
        dices = []
        for idx, case in enumerate(cases):
            noisy = perturb_hyperparams(
                resolved[idx], pct, seed=seed * 10_000 + p_idx * 100 + idx
            )
            cfg = replace(
                config,
                hyper_mode="explicit",
                hyper_values=noisy,
                seed=seed + idx,
            )
            metrics, _ = _case_dice(case, cfg)
            dices.append(metrics["complete"]["dice"])
        rows.append({"noise_pct": float(pct), "mean_dice": float(np.mean(dices))})
    return rows
