"""Seeded synthetic multi-modal brain phantoms with ground truth and
simulated user strokes.

A phantom is an ellipsoidal brain (zero background) holding a tumor of
nested ellipsoids: edema containing an enhancing rim containing a
non-enhancing core.  Intensities are per-tissue means plus Gaussian noise.
The default table gives each modality a different class ordering (edema
brightest in the FLAIR-like channel, enhancing in the T1C-like one) and
keeps healthy close to non-enhancing, so intensity-only classifiers leave
scattered errors that spatial features and the CRF visibly repair.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ClassAbsent, InvalidGeometry
from .features import StrokeSet
from .volume import (
    AXES,
    BrainMask,
    LabelVolume,
    MultiModalVolume,
    NUM_CLASSES,
)

# rows: healthy, edema, non-enhancing, enhancing; columns: T1C, T2, FLAIR.
# Healthy and edema sit a few noise sigmas apart so per-voxel noise leaves
# scattered errors; the other pairs are widely separated.
DEFAULT_INTENSITY_TABLE = np.array(
    [
        [420.0, 300.0, 560.0],
        [540.0, 360.0, 700.0],
        [100.0, 800.0, 200.0],
        [900.0, 550.0, 400.0],
    ]
)


@dataclass(frozen=True)
class Distractor:
    """Healthy-labeled structure whose intensity mimics a tumor class,
    standing in for the lookalike anatomy of real brains."""

    center_frac: tuple[float, float, float]
    radii: tuple[float, float, float]
    intensity: tuple[float, ...]  # per-modality means


DEFAULT_DISTRACTORS = (
    # edema-lookalike, far side of the brain from the tumor
    Distractor(
        center_frac=(0.36, 0.40, 0.42),
        radii=(10.0, 9.0, 8.0),
        intensity=(540.0, 360.0, 700.0),
    ),
    # non-enhancing-lookalike
    Distractor(
        center_frac=(0.42, 0.64, 0.38),
        radii=(8.0, 7.0, 9.0),
        intensity=(100.0, 800.0, 200.0),
    ),
)


@dataclass(frozen=True)
class PhantomSpec:
    dims: tuple[int, int, int] = (96, 96, 96)
    modalities: tuple[str, ...] = ("T1C", "T2", "FLAIR")
    intensity_table: np.ndarray = field(
        default_factory=lambda: DEFAULT_INTENSITY_TABLE.copy()
    )
    noise_sigma: float = 0.02  # fraction of each modality's mean range
    brain_axes_frac: tuple[float, float, float] = (0.42, 0.42, 0.42)
    tumor_center_frac: tuple[float, float, float] = (0.60, 0.57, 0.54)
    edema_radii: tuple[float, float, float] = (20.0, 18.0, 19.0)
    rim_radii: tuple[float, float, float] = (13.0, 12.0, 12.0)
    core_radii: tuple[float, float, float] = (8.0, 7.0, 7.0)
    distractors: tuple[Distractor, ...] = DEFAULT_DISTRACTORS
    partial_volume_blur: int = 2  # 6-neighbor mean passes over the mean image
    center_jitter: float = 3.0  # voxels, per seed
    radii_jitter: float = 0.08  # fractional, per seed

    def __post_init__(self):
        table = np.asarray(self.intensity_table, dtype=np.float64)
        if table.shape != (NUM_CLASSES, len(self.modalities)):
            raise InvalidGeometry(
                f"intensity table shape {table.shape} != "
                f"({NUM_CLASSES}, {len(self.modalities)})"
            )
        object.__setattr__(self, "intensity_table", table)
        if self.noise_sigma < 0:
            raise InvalidGeometry("noise_sigma must be >= 0")
        for small, big, names in (
            (self.rim_radii, self.edema_radii, "rim within edema"),
            (self.core_radii, self.rim_radii, "core within rim"),
        ):
            if not all(s < b for s, b in zip(small, big)):
                raise InvalidGeometry(f"radii not strictly nested: {names}")


@dataclass(frozen=True)
class StrokeBudget:
    """Stroke simulation parameters.

    Tumor classes get slices_per_class disk strokes of brush_radius.  The
    healthy class gets its own (larger) budget: real annotators sweep broad
    background regions, and the healthy anchors must cover the brain for
    position features to be informative.
    """

    slices_per_class: int = 2
    brush_radius: int = 2
    axis_policy: str = "mixed"  # axial | sagittal | coronal | mixed
    dabs_per_slice: int = 6
    healthy_slices: int = 9
    healthy_brush_radius: int = 1
    healthy_dabs_per_slice: int = 8

    def __post_init__(self):
        if self.slices_per_class < 1 or self.healthy_slices < 1:
            raise InvalidGeometry("slices per class must be >= 1")
        if self.axis_policy not in AXES + ("mixed",):
            raise InvalidGeometry(f"unknown axis policy {self.axis_policy!r}")

    def for_class(self, cls: int) -> tuple[int, int, int]:
        if cls == 0:
            return (
                self.healthy_slices,
                self.healthy_brush_radius,
                self.healthy_dabs_per_slice,
            )
        return self.slices_per_class, self.brush_radius, self.dabs_per_slice


def _ellipsoid(dims, center, radii):
    """Boolean (D, H, W) volume of an axis-aligned ellipsoid."""
    w, h, d = dims
    kk, jj, ii = np.meshgrid(
        np.arange(d), np.arange(h), np.arange(w), indexing="ij"
    )
    ci, cj, ck = center
    ri, rj, rk = radii
    return (
        ((ii - ci) / ri) ** 2 + ((jj - cj) / rj) ** 2 + ((kk - ck) / rk) ** 2
    ) <= 1.0


def generate_phantom(spec: PhantomSpec, seed: int = 0):
    """Deterministic (volume, ground-truth labels) pair for a seed."""
    rng = np.random.default_rng(seed)
    w, h, d = spec.dims
    m = len(spec.modalities)

    brain_center = (w / 2.0, h / 2.0, d / 2.0)
    brain_radii = tuple(f * e for f, e in zip(spec.brain_axes_frac, spec.dims))
    brain = _ellipsoid(spec.dims, brain_center, brain_radii)

    jitter = rng.uniform(-spec.center_jitter, spec.center_jitter, size=3)
    tumor_center = tuple(
        f * e + j for f, e, j in zip(spec.tumor_center_frac, spec.dims, jitter)
    )
    factors = rng.uniform(1 - spec.radii_jitter, 1 + spec.radii_jitter, size=3)
    edema_r = np.asarray(spec.edema_radii) * factors[0]
    rim_r = np.minimum(np.asarray(spec.rim_radii) * factors[1], 0.92 * edema_r)
    core_r = np.minimum(np.asarray(spec.core_radii) * factors[2], 0.88 * rim_r)

    labels = np.zeros((d, h, w), dtype=np.uint8)
    edema = _ellipsoid(spec.dims, tumor_center, edema_r) & brain
    rim = _ellipsoid(spec.dims, tumor_center, rim_r) & brain
    core = _ellipsoid(spec.dims, tumor_center, core_r) & brain
    labels[edema] = 1
    labels[rim] = 3
    labels[core] = 2

    ranges = spec.intensity_table.max(axis=0) - spec.intensity_table.min(axis=0)
    means = [spec.intensity_table[labels, c] for c in range(m)]
    for dis in spec.distractors:
        center = tuple(f * e for f, e in zip(dis.center_frac, spec.dims))
        blob = _ellipsoid(spec.dims, center, dis.radii) & brain & (labels == 0)
        for c in range(m):
            means[c][blob] = dis.intensity[c]

    data = np.zeros((m, d, h, w), dtype=np.float32)
    noise = rng.standard_normal(size=(m, d, h, w))
    for c in range(m):
        mean_img = means[c]
        for _ in range(spec.partial_volume_blur):
            mean_img = _box_smooth(mean_img)
        chan = mean_img + spec.noise_sigma * ranges[c] * noise[c]
        chan[~brain] = 0.0
        data[c] = chan.astype(np.float32)

    vol = MultiModalVolume(
        dims=spec.dims, modalities=tuple(spec.modalities), data=data
    )
    return vol, LabelVolume(dims=spec.dims, labels=labels)


def jitter_intensity_table(
    table: np.ndarray, fraction: float, seed: int
) -> np.ndarray:
    """Per-entry Gaussian jitter scaled by each modality's mean range."""
    rng = np.random.default_rng(seed)
    table = np.asarray(table, dtype=np.float64)
    ranges = table.max(axis=0) - table.min(axis=0)
    return table + rng.standard_normal(table.shape) * (fraction * ranges)


_DISK_CACHE: dict[int, np.ndarray] = {}


def _disk_offsets(radius: int) -> np.ndarray:
    """2-D offsets strictly inside the radius (count stays below pi*r^2)."""
    if radius not in _DISK_CACHE:
        r = int(radius)
        span = np.arange(-r, r + 1)
        aa, bb = np.meshgrid(span, span, indexing="ij")
        keep = aa**2 + bb**2 < r * r
        _DISK_CACHE[radius] = np.stack([aa[keep], bb[keep]], axis=1)
    return _DISK_CACHE[radius]


def _eligible_centers(region2d: np.ndarray, radius: int) -> np.ndarray:
    """Pixels whose whole disk lies inside the 2-D region (erosion)."""
    if radius <= 1:
        return region2d
    eroded = region2d.copy()
    ha, wa = region2d.shape
    for da, db in _disk_offsets(radius):
        shifted = np.zeros_like(region2d)
        src_a = slice(max(da, 0), ha + min(da, 0))
        src_b = slice(max(db, 0), wa + min(db, 0))
        dst_a = slice(max(-da, 0), ha + min(-da, 0))
        dst_b = slice(max(-db, 0), wa + min(-db, 0))
        shifted[dst_a, dst_b] = region2d[src_a, src_b]
        eroded &= shifted
        if not eroded.any():
            break
    return eroded


def _box_smooth(img: np.ndarray) -> np.ndarray:
    """Mean of each voxel with its 6 neighbors (edge voxels keep fewer),
    imitating the scanner's partial-volume softening of region borders."""
    acc = img.copy()
    cnt = np.ones_like(img)
    for axis in range(3):
        for shift in (1, -1):
            acc += np.roll(img, shift, axis=axis)
            cnt += 1.0
    # np.roll wraps; undo the wrapped faces by re-counting them out
    for axis, shift in ((0, 1), (0, -1), (1, 1), (1, -1), (2, 1), (2, -1)):
        sl = [slice(None)] * 3
        sl[axis] = 0 if shift == 1 else -1
        rolled = np.roll(img, shift, axis=axis)
        acc[tuple(sl)] -= rolled[tuple(sl)]
        cnt[tuple(sl)] -= 1.0
    return acc / cnt


def _dilate(mask: np.ndarray, steps: int) -> np.ndarray:
    """Iterated 6-neighborhood binary dilation."""
    out = mask.copy()
    for _ in range(steps):
        grown = out.copy()
        grown[1:] |= out[:-1]
        grown[:-1] |= out[1:]
        grown[:, 1:] |= out[:, :-1]
        grown[:, :-1] |= out[:, 1:]
        grown[:, :, 1:] |= out[:, :, :-1]
        grown[:, :, :-1] |= out[:, :, 1:]
        out = grown
    return out


def _region_slice(region, axis, index):
    if axis == "axial":
        return region[index]
    if axis == "coronal":
        return region[:, index, :]
    return region[:, :, index]


def _slice_pixel_to_voxel(axis, index, a, b):
    """Map 2-D slice coordinates (row a, column b) back to (i, j, k)."""
    if axis == "axial":
        return b, a, index
    if axis == "coronal":
        return b, index, a
    return index, b, a  # sagittal: rows k, cols j


def _shift_min(arr: np.ndarray, axis: int, step: int, fill) -> np.ndarray:
    out = np.full_like(arr, fill)
    src = [slice(None)] * 3
    dst = [slice(None)] * 3
    src[axis] = slice(step, None) if step > 0 else slice(None, step)
    dst[axis] = slice(None, -step) if step > 0 else slice(-step, None)
    out[tuple(dst)] = arr[tuple(src)]
    return out


def connected_components(mask: np.ndarray, max_iter: int = 400):
    """6-connected components of a boolean volume, largest first."""
    big = np.iinfo(np.int64).max
    lbl = np.where(
        mask, np.arange(mask.size, dtype=np.int64).reshape(mask.shape), big
    )
    for _ in range(max_iter):
        nxt = lbl.copy()
        for axis in range(3):
            for step in (1, -1):
                np.minimum(nxt, _shift_min(lbl, axis, step, big), out=nxt)
        nxt[~mask] = big
        if np.array_equal(nxt, lbl):
            break
        lbl = nxt
    comps = []
    for root in np.unique(lbl[mask]):
        comps.append(lbl == root)
    comps.sort(key=lambda c: -int(c.sum()))
    return comps


def suspicious_healthy_region(
    volume: MultiModalVolume, gt: LabelVolume, inside: np.ndarray
) -> np.ndarray:
    """Healthy in-mask voxels whose intensity is a strong outlier against
    the healthy bulk (robust per-modality z over 6), e.g. lookalike anatomy.
    """
    healthy = (gt.labels == 0) & inside
    if not healthy.any():
        return healthy
    worst = np.zeros(healthy.sum())
    for c in range(volume.num_modalities):
        vals = volume.data[c][healthy].astype(np.float64)
        med = np.median(vals)
        mad = np.median(np.abs(vals - med)) * 1.4826 + 1e-9
        worst = np.maximum(worst, np.abs(vals - med) / mad)
    out = np.zeros_like(healthy)
    out[healthy] = worst > 6.0
    return out


def generate_strokes(
    gt: LabelVolume,
    budget: StrokeBudget,
    seed: int = 0,
    mask: BrainMask | None = None,
    volume: MultiModalVolume | None = None,
) -> StrokeSet:
    """Simulated careful-user strokes: per class, disks painted fully inside
    that class's region on a few seeded slices.

    Healthy strokes are restricted to the brain mask when one is given, and
    are split between the band just outside the tumor, intensity-outlier
    healthy regions (when the volume is supplied), and the rest of the
    brain; annotators mark exactly the areas a classifier could confuse.
    """
    rng = np.random.default_rng(seed)
    inside = mask.inside if mask is not None else np.ones_like(gt.labels, bool)
    voxels, labels, stroke_ids, provenance = [], [], [], []

    tumor = gt.labels != 0
    near_band = _dilate(tumor, 12) & ~_dilate(tumor, 2)

    # the healthy pocket farthest from the tumor; anchoring it tells the
    # classifier (and the stroke-set cross-validation) what the far field
    # looks like
    d, h, w = gt.labels.shape
    kk, jj, ii = np.nonzero(tumor)
    centroid = (ii.mean() / w, jj.mean() / h, kk.mean() / d)
    gk, gj, gi = np.meshgrid(
        np.arange(d) / d, np.arange(h) / h, np.arange(w) / w, indexing="ij"
    )
    tumor_dist = np.sqrt(
        (gi - centroid[0]) ** 2 + (gj - centroid[1]) ** 2 + (gk - centroid[2]) ** 2
    )

    for cls in range(NUM_CLASSES):
        region = (gt.labels == cls) & inside
        if not region.any():
            raise ClassAbsent(f"class {cls} missing from ground truth")
        n_slices, brush_radius, dabs = budget.for_class(cls)

        targets = [region] * n_slices
        if cls == 0:
            special = []
            near = region & near_band
            if near.any():
                special += [near] * (n_slices // 3)
            if volume is not None:
                susp = region & suspicious_healthy_region(volume, gt, inside)
                if susp.any():
                    # one stroke per suspicious structure, round-robin
                    comps = [
                        c for c in connected_components(susp) if c.sum() >= 8
                    ] or [susp]
                    special += [
                        comps[t % len(comps)] for t in range(n_slices // 3)
                    ]
            cutoff = np.quantile(tumor_dist[region], 0.88)
            remote = region & (tumor_dist >= cutoff)
            if remote.any():
                special += [remote] * 2
            targets = (special + [region] * n_slices)[:n_slices]

        axes_order = (
            list(AXES)
            if budget.axis_policy == "mixed"
            else [budget.axis_policy]
        )
        painted = 0
        used = set()
        for target in targets:
            placed = False
            for attempt in range(60):
                focus_region = target if attempt < 30 else region
                if budget.axis_policy != "mixed":
                    axis = axes_order[0]
                elif cls != 0:
                    # tumor classes cycle through orthogonal views
                    axis = axes_order[(painted + attempt) % len(axes_order)]
                else:
                    axis = axes_order[int(rng.integers(len(axes_order)))]
                extent = region.shape[
                    {"axial": 0, "coronal": 1, "sagittal": 2}[axis]
                ]
                present = [
                    s
                    for s in range(extent)
                    if (axis, s) not in used
                    and _region_slice(focus_region, axis, s).any()
                ]
                if not present:
                    continue
                index = int(present[int(rng.integers(len(present)))])
                plane = _region_slice(region, axis, index)
                focus = _region_slice(focus_region, axis, index)
                for radius in range(brush_radius, 0, -1):
                    eligible = _eligible_centers(plane, radius) & focus
                    centers = np.argwhere(eligible)
                    if len(centers):
                        # rough selection: tumor dabs split between the
                        # region's interior and its (blur-ambiguous) rim
                        pools = [centers]
                        if cls != 0:
                            rim = eligible & ~_eligible_centers(plane, radius + 3)
                            rim_centers = np.argwhere(rim)
                            if len(rim_centers):
                                pools = [rim_centers, centers]
                        picks = [
                            pools[t % len(pools)][
                                int(rng.integers(len(pools[t % len(pools)])))
                            ]
                            for t in range(min(dabs, len(centers)))
                        ]
                        for ca, cb in picks:
                            for da, db in _disk_offsets(radius):
                                i, j, k = _slice_pixel_to_voxel(
                                    axis, index, int(ca + da), int(cb + db)
                                )
                                voxels.append((i, j, k))
                                labels.append(cls)
                                stroke_ids.append(len(provenance))
                        provenance.append(
                            {
                                "label": cls,
                                "axis": axis,
                                "slice": index,
                                "radius": radius,
                                "dabs": len(picks),
                            }
                        )
                        used.add((axis, index))
                        painted += 1
                        placed = True
                        break
                if placed:
                    break
        if painted == 0:
            raise ClassAbsent(f"could not place any stroke for class {cls}")

    return StrokeSet(
        voxels=np.array(voxels, dtype=np.int32),
        labels=np.array(labels, dtype=np.uint8),
        stroke_ids=np.array(stroke_ids, dtype=np.int32),
        provenance=tuple(provenance),
    )
