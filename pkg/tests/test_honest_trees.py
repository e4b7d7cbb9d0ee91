"""
Unit tests for greedy trees, honest estimation and honest forests
"""

import pytest
import numpy as np

from src.core.errors import InvalidInputError, InsufficientDataError
from src.core.honest_trees import (
    Dataset, TreeStructure, ForestParams, HonestTree, HonestForest,
    SSE_HONEST, SSE_REFIT,
    best_split, grow_tree, estimate_leaves, predict, predict_many, tree_sse, refit_sse,
    train_forest, forest_predict, forest_predict_many
)
from src.core.random_streams import make_stream


def exhaustive_split(X, y, features, min_node_size, tol=1e-9):
    """Brute force over every (feature, midpoint) pair; ties go to lowest feature then smallest value"""
    m = len(y)
    parent = float(((y - y.mean()) ** 2).sum())
    candidates = []
    for f in sorted(features):
        values = np.unique(X[:, f])
        for lo, hi in zip(values[:-1], values[1:]):
            t = 0.5 * (lo + hi)
            left, right = y[X[:, f] <= t], y[X[:, f] > t]
            if len(left) < min_node_size or len(right) < min_node_size:
                continue
            sse = ((left - left.mean()) ** 2).sum() + ((right - right.mean()) ** 2).sum()
            candidates.append((f, t, parent - sse))
    if m < 2 or not candidates:
        return None
    top = max(c[2] for c in candidates)
    if top <= tol * max(parent, 1.0):
        return None
    return next(c for c in candidates if c[2] >= top - tol * max(parent, 1.0))


def single_split_tree(value_left, value_right, p=2, threshold=0.5):
    structure = TreeStructure.from_splits([(0, 0, threshold)], p)
    return HonestTree(structure, np.array([value_left, value_right]), np.array([1, 1]),
                      np.array([0]), np.array([1]))


class TestDataset:

    def test_valid_dataset(self):
        data = Dataset.from_arrays(np.zeros((3, 2)), [1.0, 2.0, 3.0])
        assert data.n == 3 and data.p == 2
        assert data.row_ids.tolist() == [0, 1, 2]

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidInputError):
            Dataset.from_arrays([[1.0], [np.nan]], [0.0, 1.0])

    def test_rejects_duplicate_ids(self):
        with pytest.raises(InvalidInputError):
            Dataset(np.zeros((2, 1)), [0.0, 1.0], [5, 5])

    def test_subset_keeps_identities(self):
        data = Dataset(np.arange(8.0).reshape(4, 2), [1.0, 2.0, 3.0, 4.0], [10, 11, 12, 13])
        part = data.subset([3, 1])
        assert part.row_ids.tolist() == [13, 11]
        assert part.response.tolist() == [4.0, 2.0]


class TestTreeStructure:

    def test_from_splits_layout(self):
        structure = TreeStructure.from_splits([(0, 1, 0.5), (2, 0, 0.25)], 3)
        assert structure.leaf_count == 3
        assert structure.n_nodes == 5
        assert structure.left[0] == 1 and structure.right[0] == 2

    def test_rejects_splitting_a_split_node(self):
        with pytest.raises(InvalidInputError):
            TreeStructure.from_splits([(0, 0, 0.5), (0, 1, 0.5)], 2)

    def test_rejects_feature_out_of_range(self):
        with pytest.raises(InvalidInputError):
            TreeStructure.from_splits([(0, 3, 0.5)], 2)

    def test_apply_matches_route(self):
        structure = TreeStructure.from_splits([(0, 0, 0.5), (1, 1, 0.3), (2, 1, 0.7)], 2)
        X = np.random.default_rng(0).uniform(size=(200, 2))
        routed = np.array([structure.route(x) for x in X])
        assert np.array_equal(structure.apply(X), routed)
        assert set(routed.tolist()) == {0, 1, 2, 3}

    def test_dict_round_trip(self):
        structure = TreeStructure.from_splits([(0, 0, 0.5), (2, 1, 0.125)], 2)
        restored = TreeStructure.from_dict(structure.to_dict())
        X = np.random.default_rng(1).uniform(size=(50, 2))
        assert np.array_equal(restored.apply(X), structure.apply(X))


class TestBestSplit:

    def test_two_clusters(self):
        data = Dataset.from_arrays([[0.1], [0.2], [0.8], [0.9]], [0.0, 0.0, 10.0, 10.0])
        split = best_split(data, [0, 1, 2, 3], [0], 1)
        assert split.feature == 0
        assert split.value == pytest.approx(0.5)
        assert split.loss_reduction == pytest.approx(100.0)

    def test_constant_response(self):
        data = Dataset.from_arrays(np.random.default_rng(0).uniform(size=(10, 2)), np.full(10, 3.0))
        assert best_split(data, range(10), [0, 1], 1) is None

    def test_children_too_small(self):
        data = Dataset.from_arrays([[0.1], [0.9]], [0.0, 1.0])
        assert best_split(data, [0, 1], [0], 2) is None

    def test_tie_prefers_lowest_feature(self):
        X = np.array([[0.1, 0.1], [0.2, 0.2], [0.8, 0.8], [0.9, 0.9]])
        data = Dataset.from_arrays(X, [0.0, 0.0, 1.0, 1.0])
        assert best_split(data, range(4), [1, 0], 1).feature == 0

    def test_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(2024)
        for instance in range(500):
            m = int(rng.integers(2, 201))
            p = int(rng.integers(1, 6))
            # Integer-valued features on some instances exercise duplicate values
            if instance % 3 == 0:
                X = rng.integers(0, 6, size=(m, p)).astype(float)
            else:
                X = rng.uniform(size=(m, p))
            y = rng.normal(size=m) + 3.0 * (X[:, 0] > np.median(X[:, 0]))
            min_node = int(rng.integers(1, 6))
            features = sorted(rng.choice(p, size=int(rng.integers(1, p + 1)), replace=False).tolist())

            data = Dataset.from_arrays(X, y)
            found = best_split(data, range(m), features, min_node)
            expected = exhaustive_split(X, y, features, min_node)
            if expected is None:
                assert found is None, f"instance {instance}: found {found}, oracle found none"
                continue
            assert found is not None, f"instance {instance}: oracle found {expected}"
            assert found.loss_reduction == pytest.approx(expected[2], rel=1e-9, abs=1e-9)
            assert (found.feature, found.value) == pytest.approx((expected[0], expected[1])), \
                f"instance {instance}: {found} vs oracle {expected}"


class TestGrowTree:

    @pytest.fixture
    def step_data(self):
        rng = np.random.default_rng(5)
        x1 = np.concatenate([rng.uniform(0.0, 0.3, 20), rng.uniform(0.7, 1.0, 20)])
        X = np.column_stack([x1, rng.uniform(size=40), rng.uniform(size=40)])
        return Dataset.from_arrays(X, (x1 > 0.5).astype(float))

    def test_constant_response_single_leaf(self):
        data = Dataset.from_arrays(np.random.default_rng(0).uniform(size=(30, 2)), np.ones(30))
        params = ForestParams(n_trees=1, min_node_size=1, mtry=2, max_leaves=10)
        assert grow_tree(data, np.arange(30), params, make_stream(0)).leaf_count == 1

    def test_recovers_step(self, step_data):
        params = ForestParams(n_trees=1, min_node_size=1, mtry=3, max_leaves=10)
        structure = grow_tree(step_data, np.arange(40), params, make_stream(0))
        gap_lo = step_data.features[:20, 0].max()
        gap_hi = step_data.features[20:, 0].min()
        assert structure.feature[0] == 0
        assert gap_lo < structure.threshold[0] < gap_hi
        assert structure.leaf_count == 2

    def test_min_node_size_equal_to_rows(self, step_data):
        params = ForestParams(n_trees=1, min_node_size=40, mtry=3, max_leaves=10)
        assert grow_tree(step_data, np.arange(40), params, make_stream(0)).leaf_count == 1

    def test_leaf_cap(self):
        rng = np.random.default_rng(8)
        data = Dataset.from_arrays(rng.uniform(size=(200, 3)), rng.normal(size=200))
        params = ForestParams(n_trees=1, min_node_size=1, mtry=3, max_leaves=6)
        assert grow_tree(data, np.arange(200), params, make_stream(0)).leaf_count <= 6


class TestEstimateLeaves:

    def test_single_leaf_mean(self):
        data = Dataset.from_arrays(np.zeros((3, 1)), [1.0, 2.0, 3.0])
        values, counts = estimate_leaves(TreeStructure.single_leaf(1), data)
        assert values.tolist() == [2.0] and counts.tolist() == [3]

    def test_empty_leaf_uses_parent(self):
        data = Dataset.from_arrays([[0.8], [0.9]], [4.0, 6.0])
        values, counts = estimate_leaves(TreeStructure.from_splits([(0, 0, 0.5)], 1), data)
        assert values.tolist() == [5.0, 5.0]
        assert counts.tolist() == [0, 2]

    def test_empty_leaf_uses_nearest_ancestor(self):
        # Root on x1 at 0.5, right child on x1 at 0.75; only the far-left leaf has data
        structure = TreeStructure.from_splits([(0, 0, 0.5), (2, 0, 0.75)], 1)
        data = Dataset.from_arrays([[0.1], [0.2], [0.6]], [1.0, 3.0, 8.0])
        values, counts = estimate_leaves(structure, data)
        # leaves: (x<=0.5), (0.5<x<=0.75), (x>0.75); the last is empty and takes node 2's mean
        assert values.tolist() == [2.0, 8.0, 8.0]
        assert counts.tolist() == [2, 1, 0]

    def test_two_leaves(self):
        data = Dataset.from_arrays([[0.1], [0.2], [0.9]], [0.0, 0.0, 10.0])
        values, counts = estimate_leaves(TreeStructure.from_splits([(0, 0, 0.5)], 1), data)
        assert values.tolist() == [0.0, 10.0]
        assert counts.tolist() == [2, 1]

    def test_no_rows(self):
        data = Dataset.from_arrays([[0.1]], [1.0])
        with pytest.raises(InsufficientDataError):
            estimate_leaves(TreeStructure.single_leaf(1), data, rows=[])


class TestPredictAndSse:

    def test_single_leaf(self):
        tree = HonestTree(TreeStructure.single_leaf(2), np.array([7.0]), np.array([1]), np.array([0]), np.array([1]))
        assert predict(tree, np.array([0.3, -4.0])) == 7.0

    def test_split_and_boundary(self):
        tree = single_split_tree(1.0, 9.0)
        assert predict(tree, np.array([0.2, 0.0])) == 1.0
        assert predict(tree, np.array([0.5, 0.0])) == 1.0
        assert predict(tree, np.array([0.51, 0.0])) == 9.0

    def test_non_finite_query(self):
        with pytest.raises(InvalidInputError):
            predict(single_split_tree(1.0, 9.0), np.array([np.inf, 0.0]))

    def test_sse_examples(self):
        tree = HonestTree(TreeStructure.single_leaf(1), np.array([1.0]), np.array([2]), np.array([0]), np.array([1]))
        assert tree_sse(tree, Dataset.from_arrays([[0.0], [1.0]], [0.0, 2.0])) == 2.0
        perfect = single_split_tree(1.0, 9.0, p=1)
        assert tree_sse(perfect, Dataset.from_arrays([[0.1], [0.9]], [1.0, 9.0])) == 0.0

    def test_sse_matches_loop_oracle(self):
        rng = np.random.default_rng(12)
        data = Dataset.from_arrays(rng.uniform(size=(12, 2)), rng.normal(size=12))
        structure = TreeStructure.from_splits([(0, 0, 0.5), (1, 1, 0.4), (2, 1, 0.6)], 2)
        values, counts = estimate_leaves(structure, data, rows=range(6))
        tree = HonestTree(structure, values, counts, np.arange(6, 12), np.arange(6))
        oracle = 0.0
        for i in range(data.n):
            residual = data.response[i] - predict(tree, data.features[i])
            oracle += residual * residual
        assert tree_sse(tree, data) == pytest.approx(oracle, abs=1e-12)

    def test_refit_sse_examples(self):
        data = Dataset.from_arrays([[0.0], [1.0]], [0.0, 2.0])
        assert refit_sse(TreeStructure.single_leaf(1), data) == 2.0
        split = TreeStructure.from_splits([(0, 0, 0.5)], 1)
        assert refit_sse(split, data) == 0.0

    def test_refit_sse_matches_loop_oracle(self):
        rng = np.random.default_rng(13)
        data = Dataset.from_arrays(rng.uniform(size=(30, 2)), rng.normal(size=30))
        structure = TreeStructure.from_splits([(0, 0, 0.5), (1, 1, 0.4), (2, 1, 0.6)], 2)
        leaves = structure.apply(data.features)
        oracle = 0.0
        for j in np.unique(leaves):
            members = data.response[leaves == j]
            oracle += float(((members - members.mean()) ** 2).sum())
        assert refit_sse(structure, data) == pytest.approx(oracle, abs=1e-12)

    def test_predict_many_matches_predict(self):
        tree = single_split_tree(1.0, 9.0)
        X = np.random.default_rng(3).uniform(size=(20, 2))
        assert predict_many(tree, X).tolist() == [predict(tree, x) for x in X]


class TestForest:

    @pytest.fixture
    def data(self):
        rng = np.random.default_rng(77)
        X = rng.uniform(size=(100, 3))
        return Dataset.from_arrays(X, np.sin(4 * X[:, 0]) + 0.1 * rng.normal(size=100))

    @pytest.fixture
    def params(self):
        return ForestParams(n_trees=10, min_node_size=3)

    def test_subsample_sizes_and_disjointness(self, data, params):
        forest = train_forest(data, params, make_stream(0))
        assert forest.n_trees == 10
        for tree in forest.trees:
            assert tree.grow_rows.size == 25 and tree.estimate_rows.size == 25
            assert np.intersect1d(tree.grow_rows, tree.estimate_rows).size == 0
            assert np.all(np.isfinite(tree.leaf_values))
            assert tree.sse >= 0.0

    def test_deterministic(self, data, params):
        a = train_forest(data, params, make_stream(4))
        b = train_forest(data, params, make_stream(4), n_jobs=2)
        for ta, tb in zip(a.trees, b.trees):
            assert np.array_equal(ta.structure.feature, tb.structure.feature)
            assert np.array_equal(ta.structure.threshold, tb.structure.threshold, equal_nan=True)
            assert np.array_equal(ta.leaf_values, tb.leaf_values)
            assert ta.sse == tb.sse

    def test_too_few_rows(self, params):
        data = Dataset.from_arrays(np.zeros((7, 1)), np.arange(7.0))
        with pytest.raises(InsufficientDataError):
            train_forest(data, params, make_stream(0))

    def test_resolved_defaults(self, data, params):
        forest = train_forest(data, params, make_stream(0))
        assert forest.params.mtry == 2
        assert forest.params.max_leaves == 11
        assert all(tree.leaf_count <= 11 for tree in forest.trees)

    def test_full_data_means_do_not_increase_sse(self, data, params):
        forest = train_forest(data, params, make_stream(1))
        for tree in forest.trees:
            values, _ = estimate_leaves(tree.structure, data)
            projected = HonestTree(tree.structure, values, tree.leaf_counts, tree.grow_rows, tree.estimate_rows)
            assert tree_sse(projected, data) <= tree_sse(tree, data) + 1e-9
            assert tree.sse == pytest.approx(tree_sse(projected, data), rel=1e-12)

    def test_sse_method(self, data, params):
        honest = train_forest(data, ForestParams(n_trees=10, min_node_size=3, sse=SSE_HONEST), make_stream(1))
        assert honest.params.sse == SSE_HONEST
        assert all(tree.sse == tree_sse(tree, data) for tree in honest.trees)
        refit = train_forest(data, params, make_stream(1))
        assert refit.params.sse == SSE_REFIT
        assert all(tree.sse == refit_sse(tree.structure, data) for tree in refit.trees)

    def test_unknown_sse_method(self):
        with pytest.raises(InvalidInputError):
            ForestParams(sse="bootstrap")

    def test_forest_predict_average(self):
        data = Dataset.from_arrays([[0.1], [0.9]], [2.0, 4.0])
        t1 = HonestTree(TreeStructure.single_leaf(1), np.array([2.0]), np.array([1]), np.array([0]), np.array([1]))
        t2 = HonestTree(TreeStructure.single_leaf(1), np.array([4.0]), np.array([1]), np.array([0]), np.array([1]))
        assert forest_predict(HonestForest([t1], data, ForestParams(n_trees=1)), np.array([0.5])) == 2.0
        assert forest_predict(HonestForest([t1, t2], data, ForestParams(n_trees=2)), np.array([0.5])) == 3.0

    def test_constant_response(self, params):
        rng = np.random.default_rng(6)
        data = Dataset.from_arrays(rng.uniform(size=(40, 2)), np.full(40, 2.5))
        forest = train_forest(data, params, make_stream(0))
        assert np.allclose(forest_predict_many(forest, rng.uniform(size=(10, 2))), 2.5)


class TestForestParams:

    def test_resolve_defaults(self):
        resolved = ForestParams().resolve(200, 50)
        assert resolved.mtry == 8
        assert resolved.max_leaves == 21

    def test_leaf_cap_keeps_residual_dof(self):
        assert ForestParams().resolve(8, 1).max_leaves == 1
        assert ForestParams(max_leaves=100).resolve(20, 1).max_leaves == 16

    @pytest.mark.parametrize("kwargs", [{"n_trees": 0}, {"min_node_size": 0}, {"mtry": 0}])
    def test_invalid(self, kwargs):
        with pytest.raises(InvalidInputError):
            ForestParams(**kwargs)

    def test_mtry_above_p(self):
        with pytest.raises(InvalidInputError):
            ForestParams(mtry=4).resolve(100, 3)
