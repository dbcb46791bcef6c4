"""Phantom generation and stroke simulation."""

import numpy as np
import pytest

from strokeseg import errors
from strokeseg.phantom import (
    DEFAULT_INTENSITY_TABLE,
    PhantomSpec,
    StrokeBudget,
    generate_phantom,
    generate_strokes,
)
from strokeseg.volume import compute_brain_mask


def small_spec(**kw):
    base = dict(
        dims=(48, 48, 48),
        edema_radii=(10.0, 9.0, 9.5),
        rim_radii=(6.5, 6.0, 6.0),
        core_radii=(4.0, 3.5, 3.5),
        center_jitter=1.5,
    )
    base.update(kw)
    if "distractors" not in base:
        from strokeseg.phantom import Distractor

        base["distractors"] = (
            Distractor(
                center_frac=(0.36, 0.40, 0.42),
                radii=(5.0, 4.5, 4.0),
                intensity=tuple(DEFAULT_INTENSITY_TABLE[1]),
            ),
            Distractor(
                center_frac=(0.42, 0.64, 0.38),
                radii=(4.0, 3.5, 4.5),
                intensity=tuple(DEFAULT_INTENSITY_TABLE[2]),
            ),
        )
    return PhantomSpec(**base)


class TestGeneratePhantom:
    def test_deterministic(self):
        spec = small_spec()
        v1, g1 = generate_phantom(spec, seed=7)
        v2, g2 = generate_phantom(spec, seed=7)
        np.testing.assert_array_equal(v1.data, v2.data)
        np.testing.assert_array_equal(g1.labels, g2.labels)
        v3, _ = generate_phantom(spec, seed=8)
        assert not np.array_equal(v1.data, v3.data)

    def test_background_exactly_zero(self):
        vol, gt = generate_phantom(small_spec(), seed=0)
        mask = compute_brain_mask(vol, 0.0)
        outside = ~mask.inside
        assert (vol.data[:, outside] == 0).all()
        assert (gt.labels[outside] == 0).all()

    def test_all_classes_present(self):
        _, gt = generate_phantom(small_spec(), seed=1)
        assert set(np.unique(gt.labels)) == {0, 1, 2, 3}

    def test_nesting_topology(self):
        spec = small_spec()
        for seed in range(4):
            _, gt = generate_phantom(spec, seed=seed)
            # walking out from any enhancing or core voxel hits edema label:
            # dilating the core+rim region by one voxel stays inside tumor
            tumor = gt.labels != 0
            inner = np.isin(gt.labels, (2, 3))
            grown = inner.copy()
            grown[1:] |= inner[:-1]
            grown[:-1] |= inner[1:]
            grown[:, 1:] |= inner[:, :-1]
            grown[:, :-1] |= inner[:, 1:]
            grown[:, :, 1:] |= inner[:, :, :-1]
            grown[:, :, :-1] |= inner[:, :, 1:]
            assert (tumor[grown]).all()
            # core strictly inside the rim shell
            core = gt.labels == 2
            assert core.sum() > 0 and (gt.labels == 3).sum() > core.sum() * 0.5

    def test_per_class_sample_means(self):
        # statistics check on a distractor-free, blur-free phantom
        spec = small_spec(distractors=(), partial_volume_blur=0)
        vol, gt = generate_phantom(spec, seed=3)
        table = spec.intensity_table
        ranges = table.max(axis=0) - table.min(axis=0)
        for cls in range(4):
            sel = gt.labels == cls
            if cls == 0:
                sel &= compute_brain_mask(vol, 0.0).inside
            n = sel.sum()
            for m in range(3):
                sigma = spec.noise_sigma * ranges[m]
                bound = 3 * sigma / np.sqrt(n)
                assert abs(vol.data[m][sel].mean() - table[cls, m]) < bound

    def test_invalid_geometry(self):
        with pytest.raises(errors.InvalidGeometry):
            small_spec(rim_radii=(11.0, 10.0, 10.0))  # rim outside edema
        with pytest.raises(errors.InvalidGeometry):
            small_spec(noise_sigma=-0.1)


class TestGenerateStrokes:
    def setup_method(self):
        self.spec = small_spec()
        self.vol, self.gt = generate_phantom(self.spec, seed=0)
        self.mask = compute_brain_mask(self.vol, 0.0)

    def test_labels_agree_with_ground_truth(self):
        strokes = generate_strokes(
            self.gt, StrokeBudget(), seed=5, mask=self.mask, volume=self.vol
        )
        i, j, k = strokes.voxels.T
        np.testing.assert_array_equal(self.gt.labels[k, j, i], strokes.labels)
        assert self.mask.inside[k, j, i].all()

    def test_all_classes_covered(self):
        strokes = generate_strokes(
            self.gt, StrokeBudget(), seed=6, mask=self.mask, volume=self.vol
        )
        assert strokes.classes_present() == {0, 1, 2, 3}

    def test_voxel_count_bound(self):
        budget = StrokeBudget()
        strokes = generate_strokes(
            self.gt, budget, seed=7, mask=self.mask, volume=self.vol
        )
        for cls in range(4):
            n_slices, radius, dabs = budget.for_class(cls)
            count = int((strokes.labels == cls).sum())
            assert count <= n_slices * dabs * np.pi * max(radius, 1) ** 2

    def test_deterministic(self):
        a = generate_strokes(self.gt, StrokeBudget(), seed=8, mask=self.mask)
        b = generate_strokes(self.gt, StrokeBudget(), seed=8, mask=self.mask)
        np.testing.assert_array_equal(a.voxels, b.voxels)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_class_absent(self):
        labels = self.gt.labels.copy()
        labels[labels == 3] = 1  # erase the enhancing rim
        from strokeseg.volume import LabelVolume

        gt2 = LabelVolume(self.gt.dims, labels)
        with pytest.raises(errors.ClassAbsent):
            generate_strokes(gt2, StrokeBudget(), seed=9, mask=self.mask)

    def test_pathological_fraction_recorded(self):
        # near the paper's regime; recorded as a sanity band, not a pin
        strokes = generate_strokes(
            self.gt, StrokeBudget(), seed=10, mask=self.mask, volume=self.vol
        )
        path_voxels = int(((self.gt.labels != 0) & self.mask.inside).sum())
        frac = (strokes.labels != 0).sum() / path_voxels
        assert 0.001 < frac < 0.2
