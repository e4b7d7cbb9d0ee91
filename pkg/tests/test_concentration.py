"""
Unit tests for the minimal-tree concentration harness
"""

import pytest
import numpy as np

from src.core.errors import InvalidInputError
from src.core.honest_trees import Dataset, estimate_leaves
from src.experiments.concentration import (
    and_candidate_family, candidate_log_weights, theorem1_concentration, ConcentrationTrace,
    KIND_MINIMAL, KIND_SPURIOUS, KIND_WRONG, MINIMAL_LEAVES
)
from src.experiments.sim_functions import evaluate_function


class TestCandidateFamily:

    @pytest.fixture
    def family(self):
        return and_candidate_family()

    def test_family_sizes(self, family):
        kinds = [c.kind for c in family]
        assert kinds.count(KIND_MINIMAL) == 24
        assert kinds.count(KIND_SPURIOUS) == 3
        assert kinds.count(KIND_WRONG) == 3

    def test_minimal_trees_have_five_leaves(self, family):
        for candidate in family:
            if candidate.kind == KIND_MINIMAL:
                assert candidate.structure.leaf_count == MINIMAL_LEAVES, candidate.label

    def test_spurious_trees_are_larger(self, family):
        for candidate in family:
            if candidate.kind == KIND_SPURIOUS:
                assert candidate.structure.leaf_count > MINIMAL_LEAVES, candidate.label

    def test_minimal_trees_reproduce_and(self, family):
        X = np.random.default_rng(0).uniform(size=(500, 6))
        y = evaluate_function("and", X)
        data = Dataset.from_arrays(X, y)
        for candidate in family:
            if candidate.kind != KIND_MINIMAL:
                continue
            values, _ = estimate_leaves(candidate.structure, data)
            fitted = values[candidate.structure.apply(X)]
            np.testing.assert_allclose(fitted, y, err_msg=candidate.label)

    def test_needs_six_features(self):
        with pytest.raises(InvalidInputError):
            and_candidate_family(p=5)

    def test_log_weights_finite(self, family):
        rng = np.random.default_rng(1)
        X = rng.uniform(size=(200, 6))
        y = evaluate_function("and", X) + rng.normal(size=200)
        lw = candidate_log_weights(family, Dataset.from_arrays(X, y))
        assert lw.shape == (30,)
        assert np.all(np.isfinite(lw))


class TestConcentration:

    def test_masses_are_probabilities(self):
        trace = theorem1_concentration([100, 500], seed=0)
        assert trace.sample_sizes == [100, 500]
        assert len(trace.masses) == 2 and len(trace.heaviest) == 2
        assert all(0.0 <= m <= 1.0 for m in trace.masses)
        assert trace.family == {KIND_MINIMAL: 24, KIND_SPURIOUS: 3, KIND_WRONG: 3}

    def test_deterministic(self):
        assert theorem1_concentration([100, 1000], seed=4).masses == theorem1_concentration([100, 1000], seed=4).masses

    def test_large_n_concentrates(self):
        hits = sum(theorem1_concentration([5000], seed=s).masses[0] > 0.95 for s in range(5))
        assert hits >= 4, f"mass > 0.95 at n=5000 for only {hits} of 5 seeds"

    def test_mass_grows_with_n(self):
        grew = 0
        for seed in range(10):
            masses = theorem1_concentration([100, 5000], seed=seed).masses
            grew += masses[1] >= masses[0]
        assert grew >= 7, f"mass grew from n=100 to n=5000 for only {grew} of 10 seeds"

    @pytest.mark.parametrize("sizes", [[], [500, 100], [100, 100], [10, 100]])
    def test_invalid_sizes(self, sizes):
        with pytest.raises(InvalidInputError):
            theorem1_concentration(sizes, seed=0)

    def test_invalid_sigma(self):
        with pytest.raises(InvalidInputError):
            theorem1_concentration([100], seed=0, sigma=0.0)

    def test_trace_rejects_bad_mass(self):
        with pytest.raises(InvalidInputError):
            ConcentrationTrace(sample_sizes=[100], masses=[1.5], seed=0)
