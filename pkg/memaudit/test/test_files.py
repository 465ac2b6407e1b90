import os
import shutil
import tempfile
import unittest
from unittest.mock import patch

import numpy as np
import pytest

from memaudit.exceptions import ContractViolation, ScoreFileError, ScoreFileParseError
from memaudit.fdr import DecisionSet, PValueVector, bh_adjust, compute_fdr, decide
from memaudit.files import (
    ScoreFile,
    export_report,
    import_scores,
    read_report,
    read_samples_csv,
    samples_path,
    write_scores,
)
from memaudit.rows import ScoreRecord

from .helpers import sample_data_path


class TestImportScores(unittest.TestCase):
    def test_csv(self):
        scores = import_scores(sample_data_path("scores.csv"))
        assert len(scores) == 5
        assert scores.orientation == "higher_is_non_member"
        assert [r.sample_id for r in scores.calibration_records] == ["c1", "c2", "c3"]
        assert [r.sample_id for r in scores.test_records] == ["t1", "t2"]
        assert scores.calibration_scores().tolist() == [0.1, 0.4, 0.7]
        assert scores.test_scores().tolist() == [-0.5, 0.8]
        assert scores.calibration_records[2].truth is None
        assert scores.test_has_truth
        assert scores.records[3].line_number == 6

    def test_jsonl(self):
        csv_scores = import_scores(sample_data_path("scores.csv"))
        jsonl_scores = import_scores(sample_data_path("scores.jsonl"))
        assert jsonl_scores.records == csv_scores.records
        assert jsonl_scores.orientation == csv_scores.orientation

    def test_higher_is_member(self):
        scores = import_scores(sample_data_path("scores_higher_is_member.csv"))
        assert [r.raw_score for r in scores] == [1.0, 2.0]
        assert scores.normalized_scores.tolist() == [-1.0, -2.0]
        assert not scores.test_has_truth

    def test_malformed_score(self):
        with pytest.raises(ScoreFileParseError) as exc_info:
            import_scores(sample_data_path("malformed_score.csv"))
        assert exc_info.value.line_number == 7
        assert "line 7" in str(exc_info.value)

    def test_missing_orientation(self):
        with pytest.raises(ContractViolation):
            import_scores(sample_data_path("missing_orientation.csv"))

    def test_missing_column(self):
        with pytest.raises(ScoreFileParseError) as exc_info:
            import_scores(sample_data_path("missing_column.csv"))
        assert exc_info.value.line_number == 2
        assert "score" in str(exc_info.value)

    def test_calibration_member(self):
        with pytest.raises(ContractViolation) as exc_info:
            import_scores(sample_data_path("calibration_member.csv"))
        assert "line 4" in str(exc_info.value)

    def test_unknown_format_and_missing_file(self):
        with pytest.raises(ScoreFileError):
            import_scores(sample_data_path("scores.csv"), format="xlsx")
        with pytest.raises(ScoreFileError):
            import_scores(sample_data_path("nope.csv"))


class TestScoreFileEdits(unittest.TestCase):
    def setUp(self):
        self.tmp_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp_dir)

    def _write(self, name, content):
        path = os.path.join(self.tmp_dir, name)
        with open(path, "w") as f:
            f.write(content)
        return path

    def test_duplicate_ids(self):
        path = self._write("dup.csv", "# orientation=higher_is_member\nsample_id,score,role\na,1,test\na,2,test\n")
        with pytest.raises(ScoreFileParseError) as exc_info:
            import_scores(path)
        assert exc_info.value.line_number == 4

    def test_wrong_field_count(self):
        path = self._write("bad.csv", "# orientation=higher_is_member\nsample_id,score,role\na,1,test,member\n")
        with pytest.raises(ScoreFileParseError) as exc_info:
            import_scores(path)
        assert exc_info.value.line_number == 3

    def test_unknown_orientation(self):
        path = self._write("bad.jsonl", '{"orientation": "sideways"}\n')
        with pytest.raises(ContractViolation):
            import_scores(path)

    def test_write_and_read_back(self):
        original = import_scores(sample_data_path("scores.csv"))
        for fmt in ("csv", "jsonl"):
            path = os.path.join(self.tmp_dir, "copy." + fmt)
            write_scores(original, path, fmt)
            assert import_scores(path).records == original.records

    def test_ids_with_delimiters_and_quotes(self):
        content = (
            "# orientation=higher_is_non_member\n"
            "sample_id,score,role\n"
            '"img_3,crop",0.1,calibration\n'
            '"a""b",0.2,test\n'
        )
        path = self._write("quoted.csv", content)
        original = import_scores(path)
        assert [r.sample_id for r in original] == ["img_3,crop", 'a"b']

        copy_path = os.path.join(self.tmp_dir, "copy.csv")
        write_scores(original, copy_path)
        assert import_scores(copy_path).records == original.records

    def test_write_without_truth(self):
        original = import_scores(sample_data_path("scores_higher_is_member.csv"))
        path = os.path.join(self.tmp_dir, "copy.csv")
        write_scores(original, path)
        with open(path) as f:
            assert f.readlines()[1] == "sample_id,score,role\n"
        assert import_scores(path).orientation == "higher_is_member"


class TestExportReport(unittest.TestCase):
    def setUp(self):
        self.tmp_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp_dir)

    def test_samples_path(self):
        assert samples_path("out/report.json") == "out/report.samples.csv"

    def test_export(self):
        pvalues = PValueVector([1.0 / 3, 0.01, 0.2])
        adjusted = bh_adjust(pvalues)
        decisions = decide(adjusted, 0.1)
        truth = [False, True, True]
        report = compute_fdr(decisions, truth)
        path = os.path.join(self.tmp_dir, "report.json")

        report_path, rows_path = export_report(
            report, decisions, path, adjusted=adjusted, sample_ids=["a", "b", "c"], truth=truth
        )
        assert report_path == path
        assert rows_path == os.path.join(self.tmp_dir, "report.samples.csv")

        content = read_report(path)
        assert content == report.to_dict()

        rows = read_samples_csv(rows_path)
        assert [r.sample_id for r in rows] == ["a", "b", "c"]
        assert [r.p_value for r in rows] == pvalues.values.tolist()
        assert [r.p_adjusted for r in rows] == adjusted.adjusted.tolist()
        assert [r.verdict for r in rows] == decisions.verdicts
        assert [r.truth for r in rows] == ["non_member", "member", "member"]

    def test_export_ids_with_delimiters_and_quotes(self):
        adjusted = bh_adjust(PValueVector([0.01, 0.5]))
        decisions = decide(adjusted, 0.1)
        ids = ["img_3,crop", 'a"b']
        _, rows_path = export_report(
            None, decisions, os.path.join(self.tmp_dir, "report.json"), adjusted=adjusted, sample_ids=ids
        )

        rows = read_samples_csv(rows_path)
        assert [r.sample_id for r in rows] == ids
        assert [r.verdict for r in rows] == ["member", "non_member"]

    def test_export_without_truth(self):
        adjusted = bh_adjust(PValueVector([0.5, 0.01]))
        decisions = decide(adjusted, 0.1)
        path = os.path.join(self.tmp_dir, "report.json")
        _, rows_path = export_report(None, decisions, path, adjusted=adjusted)

        content = read_report(path)
        assert content["fdr"] is None
        assert content["n_rejected"] == 1
        assert content["n_tests"] == 2
        rows = read_samples_csv(rows_path)
        assert [r.sample_id for r in rows] == ["0", "1"]
        assert rows[0].truth is None

    def test_empty_decision_set(self):
        decisions = DecisionSet(np.zeros(0, dtype=bool), 0.1)
        path = os.path.join(self.tmp_dir, "report.json")
        _, rows_path = export_report(None, decisions, path)
        content = read_report(path)
        assert content["n_rejected"] == 0
        assert content["n_tests"] == 0
        assert read_samples_csv(rows_path) == []

    def test_missing_adjusted_values(self):
        with pytest.raises(ScoreFileError):
            export_report(None, DecisionSet([True], 0.1), os.path.join(self.tmp_dir, "report.json"))


class TestDataFrame(unittest.TestCase):
    def test_to_dataframe(self):
        pytest.importorskip("pandas")
        df = import_scores(sample_data_path("scores_higher_is_member.csv")).to_dataframe()
        assert list(df["sample_id"]) == ["a", "b"]
        assert list(df["normalized_score"]) == [-1.0, -2.0]

    @patch("memaudit.vendor._has_pandas", False)
    def test_pandas_missing(self):
        scores = ScoreFile([ScoreRecord("a", 1.0, "test")], "higher_is_non_member")
        with pytest.raises(ImportError):
            scores.to_dataframe()
