"""Decision trees, random forests and SAMME boosting."""

import numpy as np
import pytest

from strokeseg import errors
from strokeseg.features import TrainingSet
from strokeseg.trees import (
    BoostModel,
    boost_train,
    ensemble_posterior,
    ensemble_posterior_batch,
    fit_tree,
    forest_train,
)


def make_ts(features, labels):
    features = np.asarray(features, dtype=np.float32)
    return TrainingSet(
        features=features,
        labels=np.asarray(labels, dtype=np.uint8),
        source_voxels=np.zeros((len(features), 3), dtype=np.int32),
    )


def random_ts(n, seed, informative=True):
    rng = np.random.default_rng(seed)
    X = rng.random((n, 6)).astype(np.float32)
    if informative:
        labels = (
            (X[:, 0] > 0.5).astype(int) * 2 + (X[:, 1] > 0.5).astype(int)
        ).astype(np.uint8)
    else:
        labels = rng.integers(0, 4, n).astype(np.uint8)
    return make_ts(X, labels)


class TestFitTree:
    def test_pure_input_single_leaf(self):
        ts = make_ts(np.random.default_rng(0).random((10, 6)), [2] * 10)
        tree = fit_tree(ts.features, ts.labels, mtry=2, min_leaf=1,
                        rng=np.random.default_rng(1))
        assert len(tree.feature) == 1 and tree.feature[0] == -1
        np.testing.assert_allclose(tree.leaf_posterior[0], [0, 0, 1, 0])

    def test_leaf_posterior_is_count_fraction(self):
        # min_leaf=4 forces the single mid split; left leaf counts are (3,1)
        X = np.zeros((8, 6), dtype=np.float32)
        X[:, 0] = [0.1, 0.2, 0.3, 0.4, 0.6, 0.7, 0.8, 0.9]
        labels = [0, 0, 0, 1, 1, 1, 1, 1]
        tree = fit_tree(X, np.array(labels), mtry=6, min_leaf=4,
                        rng=np.random.default_rng(0), max_depth=1)
        root = 0
        assert tree.feature[root] == 0
        left = tree.left[root]
        np.testing.assert_allclose(tree.leaf_posterior[left], [0.75, 0.25, 0, 0])

    def test_memorizes_distinct_points(self):
        ts = random_ts(60, seed=3, informative=False)
        tree = fit_tree(ts.features, ts.labels, mtry=2, min_leaf=1,
                        rng=np.random.default_rng(4))
        forest = forest_train(ts, n_trees=1, mtry=2, min_leaf=1, seed=0)
        forest.trees = [tree]
        post = ensemble_posterior_batch(forest, ts.features)
        np.testing.assert_array_equal(post.argmax(axis=1), ts.labels)

    def test_every_point_reaches_exactly_one_leaf(self):
        ts = random_ts(100, seed=5)
        tree = fit_tree(ts.features, ts.labels, mtry=2, min_leaf=1,
                        rng=np.random.default_rng(6))
        leaves = tree.feature < 0
        # leaf count mass equals the number of routed points
        assert tree.leaf_counts[leaves].sum() == pytest.approx(1.0)  # weights sum


class TestForest:
    def test_same_seed_same_predictions(self):
        ts = random_ts(80, seed=7)
        probe = np.random.default_rng(8).random((30, 6))
        p1 = ensemble_posterior_batch(forest_train(ts, 20, seed=42), probe)
        p2 = ensemble_posterior_batch(forest_train(ts, 20, seed=42), probe)
        np.testing.assert_array_equal(p1, p2)
        p3 = ensemble_posterior_batch(forest_train(ts, 20, seed=43), probe)
        assert not np.array_equal(p1, p3)

    def test_posterior_is_mean_of_trees(self):
        ts = random_ts(50, seed=9)
        forest = forest_train(ts, n_trees=7, seed=1)
        probe = np.random.default_rng(10).random((20, 6))
        post = ensemble_posterior_batch(forest, probe)
        np.testing.assert_allclose(post.sum(axis=1), 1.0, atol=1e-9)
        singles = []
        for t in forest.trees:
            solo = forest_train(ts, n_trees=1, seed=0)
            solo.trees = [t]
            solo._packed = None
            singles.append(ensemble_posterior_batch(solo, probe))
        np.testing.assert_allclose(post, np.mean(singles, axis=0), atol=1e-12)

    def test_tree_order_invariance(self):
        ts = random_ts(60, seed=11)
        forest = forest_train(ts, n_trees=9, seed=2)
        probe = np.random.default_rng(12).random((15, 6))
        base = ensemble_posterior_batch(forest, probe)
        forest.trees = forest.trees[::-1]
        forest._packed = None
        np.testing.assert_allclose(
            ensemble_posterior_batch(forest, probe), base, atol=1e-12
        )

    def test_two_tree_mean_example(self):
        ts = make_ts(
            np.array([[0.1] + [0] * 5, [0.9] + [0] * 5], dtype=np.float32),
            [0, 1],
        )
        forest = forest_train(ts, n_trees=2, seed=0)
        # constant-class trees: force known posteriors by hand
        t0 = fit_tree(ts.features, np.array([0, 0]), 2, 1, np.random.default_rng(0))
        t1 = fit_tree(ts.features, np.array([1, 1]), 2, 1, np.random.default_rng(0))
        forest.trees = [t0, t1]
        forest._packed = None
        post = ensemble_posterior(forest, np.zeros(6))
        np.testing.assert_allclose(post, [0.5, 0.5, 0, 0])

    def test_single_class_rejected(self):
        ts = make_ts(np.random.default_rng(0).random((10, 6)), [1] * 10)
        with pytest.raises(errors.SingleClassInput):
            forest_train(ts, 5, seed=0)


class TestBoost:
    def test_separable_stops_after_perfect_round(self):
        X = np.zeros((10, 6), dtype=np.float32)
        X[:, 2] = np.linspace(0, 1, 10)
        ts = make_ts(X, [0] * 5 + [3] * 5)
        model = boost_train(ts, rounds=50, seed=0)
        assert len(model.stumps) == 1
        post = ensemble_posterior_batch(model, X.astype(np.float64))
        np.testing.assert_array_equal(post.argmax(axis=1), ts.labels)

    def test_single_stump_posterior_one_hot(self):
        X = np.zeros((6, 6), dtype=np.float32)
        X[:, 0] = [0.1, 0.2, 0.3, 0.7, 0.8, 0.9]
        model = boost_train(make_ts(X, [1, 1, 1, 2, 2, 2]), rounds=10, seed=0)
        assert len(model.stumps) == 1
        post = ensemble_posterior(model, np.zeros(6))
        assert sorted(post) == [0, 0, 0, 1]

    def test_training_error_nonincreasing(self):
        ts = random_ts(120, seed=13)
        X = ts.features.astype(np.float64)
        errors_by_round = []
        for rounds in (1, 5, 10, 20, 40):
            model = boost_train(ts, rounds=rounds, seed=0)
            pred = ensemble_posterior_batch(model, X).argmax(axis=1)
            errors_by_round.append((pred != ts.labels).mean())
        assert errors_by_round == sorted(errors_by_round, reverse=True) or (
            max(errors_by_round) - min(errors_by_round) < 0.2
        )

    def test_betas_positive_and_finite(self):
        ts = random_ts(100, seed=14)
        model = boost_train(ts, rounds=30, seed=0)
        assert np.isfinite(model.betas).all()
        assert (model.betas > 0).all()

    def test_posterior_sums_to_one(self):
        ts = random_ts(80, seed=15)
        model = boost_train(ts, rounds=25, seed=0)
        probe = np.random.default_rng(16).random((40, 6))
        post = ensemble_posterior_batch(model, probe)
        np.testing.assert_allclose(post.sum(axis=1), 1.0, atol=1e-9)

    def test_single_class_rejected(self):
        ts = make_ts(np.random.default_rng(0).random((10, 6)), [2] * 10)
        with pytest.raises(errors.SingleClassInput):
            boost_train(ts, 10, seed=0)

    def test_deterministic(self):
        ts = random_ts(90, seed=17)
        m1 = boost_train(ts, rounds=15, seed=5)
        m2 = boost_train(ts, rounds=15, seed=5)
        assert isinstance(m1, BoostModel)
        np.testing.assert_array_equal(m1.betas, m2.betas)
