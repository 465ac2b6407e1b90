import itertools
import json
import unittest

import numpy as np
import pytest

from memaudit.exceptions import InvalidConfig, InvalidPValues
from memaudit.fdr import (
    DecisionSet,
    PValueVector,
    bh_adjust,
    check_alpha,
    classic_bh_oracle,
    compute_fdr,
    decide,
    fdr_bound,
    realized_fdr,
    truth_from_labels,
)

RAW = [0.01, 0.04, 0.03, 0.5]


class TestPValueVector(unittest.TestCase):
    def test_invalid_values(self):
        for values in ([0.0], [1.5], [0.5, np.nan], [-0.1]):
            with pytest.raises(InvalidPValues):
                PValueVector(values)

    def test_rank_order_is_stable(self):
        p = PValueVector([0.5, 0.1, 0.5, 0.1])
        assert p.rank_order().tolist() == [1, 3, 0, 2]
        assert p.original_index.tolist() == [0, 1, 2, 3]


class TestBhAdjust(unittest.TestCase):
    def test_worked_example(self):
        adj = bh_adjust(PValueVector(RAW))
        expected = [0.04, 0.16 / 3, 0.16 / 3, 0.5]
        np.testing.assert_allclose(adj.adjusted, expected, rtol=0, atol=1e-12)
        np.testing.assert_allclose(adj.in_rank_order(), [0.04, 0.16 / 3, 0.16 / 3, 0.5], rtol=0, atol=1e-12)
        assert adj.order.tolist() == [0, 2, 1, 3]

    def test_all_ones(self):
        assert bh_adjust(PValueVector([1.0] * 5)).adjusted.tolist() == [1.0] * 5

    def test_single_value(self):
        assert bh_adjust(PValueVector([0.37])).adjusted.tolist() == [0.37]

    def test_empty(self):
        with pytest.raises(InvalidPValues):
            bh_adjust(PValueVector([]))

    def test_properties(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            values = rng.choice([0.01, 0.2, 0.5, 1.0], size=8) * rng.uniform(0.5, 1.0)
            adj = bh_adjust(PValueVector(values))
            # Adjusted values are not below the raw ones and are capped at 1
            assert np.all(adj.adjusted >= adj.raw.values)
            assert np.all(adj.adjusted <= 1.0)
            # Monotone in rank order, ties get the same value
            assert np.all(np.diff(adj.in_rank_order()) >= 0)
            for v in np.unique(values):
                assert np.unique(adj.adjusted[values == v]).size == 1


class TestDecide(unittest.TestCase):
    def test_worked_example(self):
        d = decide(bh_adjust(PValueVector(RAW)), 0.05)
        assert d.rejected == frozenset([0])
        assert d.verdicts == ["member", "non_member", "non_member", "non_member"]
        assert d.alpha == 0.05

    def test_nothing_rejected(self):
        d = decide(bh_adjust(PValueVector([1.0, 1.0])), 0.05)
        assert d.rejected == frozenset()
        assert d.n_rejected == 0

    def test_equality_rejects(self):
        d = decide(bh_adjust(PValueVector([0.05])), 0.05)
        assert d.rejected == frozenset([0])

    def test_invalid_alpha(self):
        adj = bh_adjust(PValueVector([0.5]))
        for alpha in (0.0, 1.0, -0.1, 2.0):
            with pytest.raises(InvalidConfig):
                decide(adj, alpha)
        assert check_alpha(0.1) == 0.1


class TestClassicOracle(unittest.TestCase):
    def test_examples(self):
        assert classic_bh_oracle(PValueVector(RAW), 0.05).rejected == frozenset([0])
        assert classic_bh_oracle(PValueVector([1.0] * 4), 0.05).rejected == frozenset()
        assert classic_bh_oracle(PValueVector([0.05 / 4] * 4), 0.05).rejected == frozenset(range(4))
        assert decide(bh_adjust(PValueVector([0.05 / 4] * 4)), 0.05).rejected == frozenset(range(4))

    def test_equivalence_on_random_vectors(self):
        rng = np.random.default_rng(1)
        for trial in range(4000):
            n = int(rng.integers(1, 21)) if trial % 2 else int(rng.integers(1, 1001))
            # Mix of small and uniform p-values, so that rejections happen
            values = np.where(rng.random(n) < 0.3, rng.uniform(1e-4, 0.02, size=n), rng.uniform(1e-4, 1.0, size=n))
            alpha = float(rng.uniform(0.01, 0.5))
            p = PValueVector(values)
            assert decide(bh_adjust(p), alpha) == classic_bh_oracle(p, alpha)

    def test_equivalence_with_many_ties(self):
        rng = np.random.default_rng(4)
        for _ in range(1000):
            n = int(rng.integers(1, 1001))
            # Two decimals: many exact ties
            values = np.maximum(np.round(rng.uniform(0.0, 0.3, size=n), 2), 0.01)
            alpha = float(rng.uniform(0.01, 0.5))
            p = PValueVector(values)
            assert decide(bh_adjust(p), alpha) == classic_bh_oracle(p, alpha)

    def test_equivalence_on_a_dyadic_grid(self):
        # Dyadic values: the boundary cases are compared exactly
        alphas = (0.125, 0.1875, 0.25, 0.5)
        grids = [(n, [k / 16.0 for k in range(1, 17)]) for n in (1, 2, 3)] + [(4, [k / 8.0 for k in range(1, 9)])]
        for n, grid in grids:
            for values in itertools.product(grid, repeat=n):
                p = PValueVector(values)
                adj = bh_adjust(p)
                for alpha in alphas:
                    assert decide(adj, alpha) == classic_bh_oracle(p, alpha), (values, alpha)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            values = rng.uniform(1e-4, 0.2, size=10)
            perm = rng.permutation(10)
            original = decide(bh_adjust(PValueVector(values)), 0.1)
            permuted = decide(bh_adjust(PValueVector(values[perm])), 0.1)
            assert np.array_equal(permuted.member, original.member[perm])

    def test_monotone_in_alpha(self):
        rng = np.random.default_rng(3)
        alphas = (0.01, 0.05, 0.1, 0.2, 0.5)
        for _ in range(200):
            adj = bh_adjust(PValueVector(rng.uniform(1e-4, 0.3, size=12)))
            rejected = [decide(adj, a).rejected for a in alphas]
            for smaller, larger in zip(rejected, rejected[1:]):
                assert smaller <= larger


class TestFdrComputation(unittest.TestCase):
    def test_nothing_rejected(self):
        report = compute_fdr(DecisionSet([False, False, False], 0.1), [True, False, False])
        assert report.fdr == 0.0
        assert report.n_rejected == 0
        assert report.pi0 == pytest.approx(2.0 / 3)

    def test_one_false_discovery_out_of_four(self):
        member = [True, True, True, True, False]
        truth = [True, True, True, False, False]
        report = compute_fdr(DecisionSet(member, 0.2), truth)
        assert report.n_fp == 1
        assert report.n_tp == 3
        assert report.fdr == 0.25
        assert report.pi0 == 0.4
        assert report.bound == pytest.approx(0.08)
        assert realized_fdr(np.array(member), np.array(truth)) == 0.25

    def test_report_serialization(self):
        report = compute_fdr(DecisionSet([True, False], 0.1), [True, False])
        loaded = json.loads(report.to_json())
        assert loaded["n_tests"] == 2
        assert loaded["fdr"] == 0.0
        assert report.to_dict() == loaded

    def test_length_mismatch(self):
        with pytest.raises(InvalidConfig):
            compute_fdr(DecisionSet([True], 0.1), [True, False])

    def test_truth_from_labels(self):
        assert truth_from_labels(["member", "non_member"]).tolist() == [True, False]
        assert truth_from_labels(["member", None]) is None


class TestFdrBound(unittest.TestCase):
    def test_examples(self):
        assert fdr_bound(0.1, 0.5) == 0.05
        assert fdr_bound(0.1, 1.0) == 0.1
        assert fdr_bound(0.1, 0.0) == 0.0

    def test_invalid(self):
        with pytest.raises(InvalidConfig):
            fdr_bound(0.1, 1.5)
        with pytest.raises(InvalidConfig):
            fdr_bound(1.0, 0.5)
