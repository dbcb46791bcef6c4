"""kNN classifier: posteriors, tie rules, kd-tree vs brute-force exactness."""

import numpy as np
import pytest

from strokeseg import errors
from strokeseg.features import TrainingSet
from strokeseg.knn import (
    brute_force_neighbors,
    knn_classify,
    knn_classify_batch,
    knn_neighbors,
    knn_posterior,
    knn_posterior_batch,
    knn_train,
)


def make_ts(points, labels):
    points = np.asarray(points, dtype=np.float32)
    if points.ndim == 1:
        points = points[:, None]
    if points.shape[1] < 6:
        pad = np.zeros((len(points), 6 - points.shape[1]), dtype=np.float32)
        points = np.hstack([points, pad])
    return TrainingSet(
        features=points,
        labels=np.asarray(labels, dtype=np.uint8),
        source_voxels=np.zeros((len(points), 3), dtype=np.int32),
    )


def random_ts(n, seed, d=6):
    rng = np.random.default_rng(seed)
    return TrainingSet(
        features=rng.random((n, d)).astype(np.float32),
        labels=rng.integers(0, 4, n).astype(np.uint8),
        source_voxels=np.zeros((n, 3), dtype=np.int32),
    )


def slow_reference_neighbors(X, q, k):
    """Independent oracle: exhaustive scan sorted by (distance, row)."""
    d2 = [(float(np.dot(X[i] - q, X[i] - q)), i) for i in range(len(X))]
    d2.sort()
    return [i for _, i in d2[:k]]


class TestPosterior:
    def test_all_edema_neighbors(self):
        ts = make_ts([0.1, 0.11, 0.12, 0.9], [1, 1, 1, 0])
        model = knn_train(ts, k=3)
        post = knn_posterior(model, np.array([0.1, 0, 0, 0, 0, 0]))
        np.testing.assert_allclose(post, [0, 1, 0, 0])

    def test_two_thirds_one_third(self):
        ts = make_ts([0.1, 0.12, 0.14, 0.9], [0, 0, 1, 3])
        model = knn_train(ts, k=3)
        post = knn_posterior(model, np.array([0.1, 0, 0, 0, 0, 0]))
        np.testing.assert_allclose(post, [2 / 3, 1 / 3, 0, 0])

    def test_posterior_is_vote_multiple_and_sums_to_one(self):
        ts = random_ts(60, seed=1)
        model = knn_train(ts, k=5)
        rng = np.random.default_rng(2)
        post = knn_posterior_batch(model, rng.random((40, 6)))
        np.testing.assert_allclose(post.sum(axis=1), 1.0, atol=1e-9)
        np.testing.assert_allclose(np.round(post * 5), post * 5, atol=1e-12)

    def test_k_too_large(self):
        ts = random_ts(2, seed=0)
        with pytest.raises(errors.KTooLarge):
            knn_train(ts, k=3)


class TestExactness:
    def test_index_matches_brute_force_50_queries(self):
        ts = random_ts(200, seed=3)
        indexed = knn_train(ts, k=3, use_index=True)
        plain = knn_train(ts, k=3, use_index=False)
        rng = np.random.default_rng(4)
        queries = rng.random((50, 6))
        np.testing.assert_array_equal(
            knn_neighbors(indexed, queries), knn_neighbors(plain, queries)
        )

    def test_matches_independent_scan(self):
        ts = random_ts(120, seed=5)
        model = knn_train(ts, k=4)
        X = model.features
        rng = np.random.default_rng(6)
        for q in rng.random((25, 6)):
            got = knn_neighbors(model, q)[0]
            assert list(got) == slow_reference_neighbors(X, q, 4)

    def test_duplicate_points_tie_broken_by_row(self):
        # three identical points; the two lowest rows must win
        ts = make_ts([0.5, 0.5, 0.5, 0.9], [2, 1, 3, 0])
        model = knn_train(ts, k=2)
        got = knn_neighbors(model, np.array([0.5, 0, 0, 0, 0, 0]))[0]
        assert list(got) == [0, 1]
        brute = brute_force_neighbors(model.features, np.array([[0.5, 0, 0, 0, 0, 0]]), 2)
        assert list(brute[0]) == [0, 1]

    def test_permutation_invariance_without_ties(self):
        ts = random_ts(80, seed=7)
        rng = np.random.default_rng(8)
        perm = rng.permutation(80)
        ts_perm = TrainingSet(
            features=ts.features[perm],
            labels=ts.labels[perm],
            source_voxels=ts.source_voxels[perm],
        )
        queries = rng.random((30, 6))
        p1 = knn_posterior_batch(knn_train(ts, k=3), queries)
        p2 = knn_posterior_batch(knn_train(ts_perm, k=3), queries)
        np.testing.assert_allclose(p1, p2, atol=1e-12)


class TestClassify:
    def test_argmax_of_posterior(self):
        ts = make_ts([0.1, 0.11, 0.12, 0.9], [1, 1, 1, 0])
        model = knn_train(ts, k=3)
        assert knn_classify(model, np.array([0.1, 0, 0, 0, 0, 0])) == 1

    def test_vote_tie_goes_to_nearest_tied_class(self):
        # k=4: votes 2-2 healthy/edema, single nearest is edema
        ts = make_ts([0.10, 0.12, 0.13, 0.14], [1, 0, 0, 1])
        model = knn_train(ts, k=4)
        assert knn_classify(model, np.array([0.1, 0, 0, 0, 0, 0])) == 1
        # mirrored: nearest is healthy
        ts2 = make_ts([0.10, 0.12, 0.13, 0.14], [0, 1, 1, 0])
        model2 = knn_train(ts2, k=4)
        assert knn_classify(model2, np.array([0.1, 0, 0, 0, 0, 0])) == 0

    def test_classify_consistent_with_posterior_argmax(self):
        ts = random_ts(150, seed=9)
        model = knn_train(ts, k=3)
        rng = np.random.default_rng(10)
        queries = rng.random((100, 6))
        post = knn_posterior_batch(model, queries)
        cls = knn_classify_batch(model, queries)
        top = post.max(axis=1)
        unique = (post == top[:, None]).sum(axis=1) == 1
        np.testing.assert_array_equal(cls[unique], post.argmax(axis=1)[unique])
