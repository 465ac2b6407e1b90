import os
import shutil
import tempfile
import unittest

import numpy as np
import pytest

from memaudit.conformal import (
    CalibrationScores,
    batch_pvalues,
    build_calibration,
    conformal_pvalue,
    conformity_score,
    conformity_scores,
    load_calibration,
    save_calibration,
)
from memaudit.exceptions import CalibrationNotFrozen, InvalidConfig, InvalidScore


class TestConformityScore(unittest.TestCase):
    def test_examples(self):
        assert conformity_score(0.8, lam=0.0) == pytest.approx(0.8)
        assert conformity_score(0.5, lam=1.0) == pytest.approx(0.0, abs=1e-12)
        assert conformity_score(0.8, lam=0.5) == pytest.approx(1.093147, abs=1e-6)

    def test_extremes_are_clamped(self):
        top = conformity_score(1.0, lam=1.0)
        bottom = conformity_score(0.0, lam=1.0)
        assert np.isfinite(top) and np.isfinite(bottom)
        assert top == pytest.approx(-bottom)
        assert top == pytest.approx(np.log((1 - 1e-7) / 1e-7))

    def test_monotone_in_probability(self):
        probs = np.linspace(0.0, 1.0, 101)
        for lam in (0.0, 0.25, 0.5, 1.0):
            scores = conformity_scores(probs, lam)
            assert np.all(np.diff(scores) > 0)

    def test_invalid_inputs(self):
        with pytest.raises(InvalidScore):
            conformity_score(1.5)
        with pytest.raises(InvalidScore):
            conformity_score(-0.1)
        with pytest.raises(InvalidScore):
            conformity_score(float("nan"))
        with pytest.raises(InvalidConfig):
            conformity_score(0.5, lam=1.5)


class TestCalibrationScores(unittest.TestCase):
    def test_build_sorts_and_keeps_duplicates(self):
        calib = build_calibration([0.7, 0.1, 0.4, 0.1])
        assert calib.frozen
        assert len(calib) == 4
        assert calib.scores.tolist() == [0.1, 0.1, 0.4, 0.7]

    def test_build_errors(self):
        with pytest.raises(InvalidScore):
            build_calibration([])
        with pytest.raises(InvalidScore):
            build_calibration([0.1, float("inf")])

    def test_incremental_usage(self):
        calib = CalibrationScores()
        calib.add(0.7)
        calib.extend([0.1, 0.4])
        assert not calib.frozen
        with pytest.raises(CalibrationNotFrozen):
            calib.pvalue(0.5)
        with pytest.raises(CalibrationNotFrozen):
            calib.scores

        calib.freeze()
        assert calib.freeze() is calib
        assert calib.pvalue(0.5) == 0.75
        with pytest.raises(InvalidConfig):
            calib.add(0.2)
        with pytest.raises(ValueError):
            calib.scores[0] = 3.0


class TestPValues(unittest.TestCase):
    def test_examples(self):
        calib = build_calibration([0.1, 0.4, 0.7, 0.9])
        assert conformal_pvalue(calib, 0.5) == pytest.approx(0.6)
        assert conformal_pvalue(calib, -5.0) == pytest.approx(1.0 / 5)
        assert conformal_pvalue(calib, 0.9) == 1.0
        assert conformal_pvalue(calib, 12.0) == 1.0

    def test_ties_count_in_numerator(self):
        calib = build_calibration([1.0, 1.0, 1.0])
        assert conformal_pvalue(calib, 1.0) == 1.0
        assert conformal_pvalue(calib, 0.999) == 0.25

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            n = int(rng.integers(1, 30))
            # Small integer grid so that ties are frequent
            calibration = rng.integers(-5, 6, size=n).astype(float)
            score = float(rng.integers(-6, 7))
            expected = (1 + sum(1 for c in calibration if c <= score)) / (1 + n)
            assert conformal_pvalue(build_calibration(calibration), score) == pytest.approx(expected)

    def test_monotone_and_on_the_grid(self):
        rng = np.random.default_rng(1)
        calib = build_calibration(rng.normal(size=50))
        scores = np.sort(rng.normal(scale=2.0, size=200))
        pvalues = batch_pvalues(calib, scores)

        assert np.all(np.diff(pvalues) >= 0)
        assert np.all(pvalues >= 1.0 / 51) and np.all(pvalues <= 1.0)
        np.testing.assert_allclose(pvalues * 51, np.round(pvalues * 51))

    def test_batch_preserves_order(self):
        calib = build_calibration([0.1, 0.4, 0.7, 0.9])
        np.testing.assert_allclose(batch_pvalues(calib, [1.0, 0.5, 0.0]), [1.0, 0.6, 0.2])
        assert batch_pvalues(calib, []).size == 0
        with pytest.raises(InvalidScore):
            batch_pvalues(calib, [np.nan])

    def test_superuniform_for_exchangeable_scores(self):
        rng = np.random.default_rng(2)
        n_trials = 4000
        pvalues = np.empty(n_trials)
        for trial in range(n_trials):
            scores = rng.standard_normal(20)
            pvalues[trial] = conformal_pvalue(build_calibration(scores[:19]), scores[19])

        for alpha in (0.05, 0.1, 0.25, 0.5):
            rate = np.mean(pvalues <= alpha)
            stderr = np.sqrt(alpha * (1 - alpha) / n_trials)
            assert rate <= alpha + 3 * stderr


class TestCalibrationFiles(unittest.TestCase):
    def setUp(self):
        self.tmp_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp_dir)

    def test_save_load(self):
        calib = build_calibration(np.random.default_rng(3).normal(size=25))
        path = os.path.join(self.tmp_dir, "calibration.txt")
        save_calibration(calib, path, lam=0.25)

        loaded, lam, epsilon = load_calibration(path)
        assert loaded.scores.tolist() == calib.scores.tolist()
        assert lam == 0.25
        assert epsilon == 1e-7

    def test_not_a_calibration_file(self):
        path = os.path.join(self.tmp_dir, "calibration.txt")
        with open(path, "w") as f:
            f.write("0.1\n0.2\n")
        with pytest.raises(InvalidConfig):
            load_calibration(path)

    def test_malformed_header(self):
        path = os.path.join(self.tmp_dir, "calibration.txt")
        with open(path, "w") as f:
            f.write("# memaudit-calibration version=1\n0.1\n")
        with pytest.raises(InvalidConfig):
            load_calibration(path)

    def test_header_token_without_value(self):
        path = os.path.join(self.tmp_dir, "calibration.txt")
        with open(path, "w") as f:
            f.write("# memaudit-calibration version=1 lambda=0.5 epsilon=1e-07 junk\n0.1\n")
        with pytest.raises(InvalidConfig):
            load_calibration(path)

    def test_corrupt_score_line(self):
        path = os.path.join(self.tmp_dir, "calibration.txt")
        with open(path, "w") as f:
            f.write("# memaudit-calibration version=1 lambda=0.5 epsilon=1e-07\n0.1\nzero point two\n")
        with pytest.raises(InvalidConfig) as exc_info:
            load_calibration(path)
        assert "line 3" in str(exc_info.value)
