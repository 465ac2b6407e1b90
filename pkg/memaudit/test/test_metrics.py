import csv
import os
import shutil
import tempfile
import unittest

import numpy as np
import pytest

from memaudit.exceptions import UndefinedMetric
from memaudit.metrics import auroc, compute_metrics, decision_accuracy, roc_points, tpr_at_fpr, write_roc_csv

VALUES = [0.1, 0.2, 0.3, 0.4]
TRUTH = [True, False, True, False]


class TestAuroc(unittest.TestCase):
    def test_perfect_separation(self):
        assert auroc([0.0, 1.0, 2.0, 3.0], [True, True, False, False]) == 1.0
        assert auroc([0.0, 1.0, 2.0, 3.0], [False, False, True, True]) == 0.0

    def test_ties_count_half(self):
        assert auroc([1.0, 1.0, 1.0, 1.0], TRUTH) == 0.5

    def test_pair_counting(self):
        # Members 0.1 and 0.3, non-members 0.2 and 0.4: 3 of the 4 pairs are ordered
        assert auroc(VALUES, TRUTH) == 0.75

    def test_random_scores(self):
        rng = np.random.default_rng(0)
        values = rng.normal(size=4000)
        truth = rng.random(4000) < 0.5
        assert abs(auroc(values, truth) - 0.5) < 0.04

    def test_invariant_to_monotone_transforms(self):
        rng = np.random.default_rng(1)
        values = rng.normal(size=200)
        truth = rng.random(200) < 0.3
        assert auroc(np.exp(values), truth) == pytest.approx(auroc(values, truth))
        assert auroc(3 * values - 1, truth) == pytest.approx(auroc(values, truth))

    def test_undefined(self):
        with pytest.raises(UndefinedMetric):
            auroc([0.1, 0.2], [True, True])
        with pytest.raises(UndefinedMetric):
            auroc([0.1, 0.2], [True])
        with pytest.raises(UndefinedMetric):
            auroc([0.1, np.nan], [True, False])


class TestRoc(unittest.TestCase):
    def test_points(self):
        points = roc_points(VALUES, TRUTH)
        assert points == [
            (float("-inf"), 0.0, 0.0),
            (0.1, 0.0, 0.5),
            (0.2, 0.5, 0.5),
            (0.3, 0.5, 1.0),
            (0.4, 1.0, 1.0),
        ]
        assert tpr_at_fpr(points, 0.001) == 0.5
        assert tpr_at_fpr(points, 0.5) == 1.0

    def test_write_csv(self):
        tmp_dir = tempfile.mkdtemp()
        try:
            path = os.path.join(tmp_dir, "roc.csv")
            write_roc_csv(roc_points(VALUES, TRUTH), path)
            with open(path) as f:
                rows = list(csv.reader(f))
            assert rows[0] == ["threshold", "fpr", "tpr"]
            assert len(rows) == 6
            assert float(rows[2][0]) == 0.1
            assert rows[2][1:] == ["0.0", "0.5"]
        finally:
            shutil.rmtree(tmp_dir)


class TestComputeMetrics(unittest.TestCase):
    def test_best_threshold(self):
        report = compute_metrics(VALUES, TRUTH)
        assert report.accuracy == 0.75
        assert report.threshold == 0.1
        assert report.auroc == 0.75
        assert report.tpr_at_fpr == {0.001: 0.5, 0.01: 0.5, 0.1: 0.5}

    def test_given_threshold(self):
        report = compute_metrics(VALUES, TRUTH, threshold=0.25)
        assert report.accuracy == 0.5
        assert report.threshold == 0.25
        assert report.to_dict()["tpr_at_fpr"]["0.01"] == 0.5

    def test_decision_accuracy(self):
        assert decision_accuracy([True, False, False], [True, True, False]) == pytest.approx(2.0 / 3)
        with pytest.raises(UndefinedMetric):
            decision_accuracy([], [])
        with pytest.raises(UndefinedMetric):
            decision_accuracy([True], [True, False])
