import os
import shutil
import tempfile
import unittest

import numpy as np
import pytest

from memaudit.conformal import batch_pvalues, build_calibration
from memaudit.exceptions import ContractViolation
from memaudit.fdr import PValueVector, bh_adjust, decide
from memaudit.files import ScoreFile, import_scores, read_report, read_samples_csv
from memaudit.metrics import compute_metrics
from memaudit.rows import ScoreRecord
from memaudit.synthetic import SyntheticSpec, generate_synthetic
from memaudit.wrapper import wrap_external

from .helpers import sample_data_path


def _score_file(calibration, test, orientation="higher_is_non_member"):
    records = [ScoreRecord("c{i}".format(i=i), s, "calibration") for i, s in enumerate(calibration)]
    records.extend(ScoreRecord("t{i}".format(i=i), s, "test") for i, s in enumerate(test))
    return ScoreFile(records, orientation)


class TestWrapExternal(unittest.TestCase):
    def test_single_test_sample(self):
        result = wrap_external(import_scores(sample_data_path("wrapper_example.csv")), 0.5)
        assert result.sample_ids == ["x"]
        assert result.pvalues.values[0] == pytest.approx(0.6)
        assert result.adjusted.adjusted[0] == pytest.approx(0.6)
        assert result.decisions.rejected == frozenset()
        assert result.truth is None
        assert result.report is None

    def test_all_above_calibration(self):
        result = wrap_external(_score_file([0.1, 0.2, 0.3], [0.5, 0.9, 4.0]), 0.2)
        assert result.pvalues.values.tolist() == [1.0, 1.0, 1.0]
        assert result.decisions.n_rejected == 0

    def test_with_truth(self):
        result = wrap_external(import_scores(sample_data_path("scores.csv")), 0.5)
        assert result.sample_ids == ["t1", "t2"]
        assert result.pvalues.values.tolist() == [0.25, 1.0]
        assert result.adjusted.adjusted.tolist() == [0.5, 1.0]
        assert result.decisions.verdicts == ["member", "non_member"]
        assert result.report.fdr == 0.0
        assert result.report.n_tp == 1

    def test_higher_is_member(self):
        # Normalized scores: calibration [-1, -3], test [-2]
        scores = _score_file([1.0, 3.0], [2.0], orientation="higher_is_member")
        result = wrap_external(scores, 0.5)
        assert result.pvalues.values[0] == pytest.approx(2.0 / 3)

    def test_contract_violations(self):
        with pytest.raises(ContractViolation):
            wrap_external(import_scores(sample_data_path("no_calibration.csv")), 0.1)
        with pytest.raises(ContractViolation):
            wrap_external(_score_file([0.1, 0.2], []), 0.1)

    def test_equals_manual_composition(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            calibration = rng.normal(size=50)
            test = rng.normal(-1.0, 1.0, size=30)
            result = wrap_external(_score_file(calibration, test), 0.2)

            p = PValueVector(batch_pvalues(build_calibration(calibration), test))
            expected = decide(bh_adjust(p), 0.2)
            assert result.decisions == expected
            assert result.pvalues.values.tolist() == p.values.tolist()

    def test_preserves_score_order(self):
        rng = np.random.default_rng(1)
        # Integers plus one half: no ties between scores
        calibration = rng.integers(0, 100, size=40) + 0.5
        test = rng.permutation(np.arange(100)) + 0.25
        p = wrap_external(_score_file(calibration, test), 0.1).pvalues.values
        order = np.argsort(test)
        assert np.all(np.diff(p[order]) >= 0)

    def test_fdr_on_synthetic_confidence_scores(self):
        spec = SyntheticSpec(n_calibration=200, n_test=100, pi0=0.5, member_shift=2.0, seed=3)
        alphas = (0.05, 0.1, 0.2, 0.3)
        n_trials = 200
        fdr = np.empty((n_trials, len(alphas)))
        for trial in range(n_trials):
            data = generate_synthetic(spec, trial).to_score_file()
            for i, alpha in enumerate(alphas):
                fdr[trial, i] = wrap_external(data, alpha).report.fdr
        stderr = fdr.std(axis=0, ddof=1) / np.sqrt(n_trials)
        assert np.all(fdr.mean(axis=0) <= np.array(alphas) + 3 * stderr)


class TestWrapExport(unittest.TestCase):
    def setUp(self):
        self.tmp_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp_dir)

    def test_export(self):
        result = wrap_external(import_scores(sample_data_path("scores.csv")), 0.5)
        report_path, rows_path = result.export(os.path.join(self.tmp_dir, "report.json"))
        assert read_report(report_path)["n_rejected"] == 1
        rows = read_samples_csv(rows_path)
        assert [(r.sample_id, r.verdict, r.truth) for r in rows] == [
            ("t1", "member", "member"),
            ("t2", "non_member", "non_member"),
        ]


class TestWrapRanking(unittest.TestCase):
    def setUp(self):
        self.tmp_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp_dir)

    def test_pvalues_keep_the_auroc_of_the_scores(self):
        rng = np.random.default_rng(5)
        test = rng.permutation(60).astype(float)
        truth = rng.random(60) < test / 60
        truth[np.argmax(test)] = True
        truth[np.argmin(test)] = False
        # A distinct calibration score between any two test scores: p-values are strictly increasing in the score
        calibration = np.arange(-1, 60) + 0.5

        path = os.path.join(self.tmp_dir, "labelled.csv")
        with open(path, "w") as f:
            f.write("# orientation=higher_is_member\nsample_id,score,role,truth\n")
            for i, s in enumerate(calibration):
                f.write("c{i},{s!r},calibration,non_member\n".format(i=i, s=float(s)))
            for i, (s, t) in enumerate(zip(test, truth)):
                f.write("t{i},{s!r},test,{t}\n".format(i=i, s=float(s), t="member" if t else "non_member"))

        score_file = import_scores(path)
        result = wrap_external(score_file, 0.1)
        on_scores = compute_metrics(score_file.test_scores(), result.truth)
        on_pvalues = compute_metrics(result.pvalues.values, result.truth)

        assert 0.5 < on_scores.auroc < 1.0
        assert abs(on_pvalues.auroc - on_scores.auroc) <= 1e-9
