import unittest

import pytest

from memaudit.exceptions import ContractViolation, ScoreFileParseError
from memaudit.rows import ScoreRecord, csv_line_to_fields


class TestScoreRecord(unittest.TestCase):
    def test_orientation(self):
        assert ScoreRecord("a", 0.3, "test").score == 0.3
        record = ScoreRecord("a", 0.3, "test", orientation="higher_is_member")
        assert record.score == -0.3
        assert record.raw_score == 0.3
        assert record.to_dict() == {"sample_id": "a", "score": 0.3, "role": "test", "truth": None}

    def test_equality(self):
        assert ScoreRecord("a", 1.0, "test", "member") == ScoreRecord("a", 1.0, "test", "member")
        assert ScoreRecord("a", 1.0, "test") != ScoreRecord("a", 1.0, "calibration")
        assert len({ScoreRecord("a", 1.0, "test"), ScoreRecord("a", 1.0, "test")}) == 1

    def test_invalid_records(self):
        with pytest.raises(ScoreFileParseError):
            ScoreRecord("", 0.1, "test")
        with pytest.raises(ScoreFileParseError):
            ScoreRecord("a", float("nan"), "test")
        with pytest.raises(ScoreFileParseError):
            ScoreRecord("a", 0.1, "validation")
        with pytest.raises(ScoreFileParseError) as exc_info:
            ScoreRecord("a", 0.1, "test", truth="maybe", line_number=12)
        assert exc_info.value.line_number == 12
        assert str(exc_info.value).startswith("line 12: ")

    def test_calibration_member(self):
        with pytest.raises(ContractViolation) as exc_info:
            ScoreRecord("c", 0.1, "calibration", truth="member", line_number=4)
        assert "line 4" in str(exc_info.value)

    def test_make_from_fields(self):
        fields = {"sample_id": "x", "score": "1e-3", "role": "test", "truth": ""}
        record = ScoreRecord.make_from_fields(fields, "higher_is_non_member", 3)
        assert record.raw_score == 0.001
        assert record.truth is None
        assert record.line_number == 3

        with pytest.raises(ScoreFileParseError) as exc_info:
            ScoreRecord.make_from_fields(dict(fields, score="n/a"), "higher_is_non_member", 5)
        assert "malformed score" in str(exc_info.value)
        with pytest.raises(ScoreFileParseError) as exc_info:
            ScoreRecord.make_from_fields(dict(fields, role=""), "higher_is_non_member", 5)
        assert "role" in str(exc_info.value)

    def test_score_too_large_for_a_float(self):
        # JSON Lines scores reach make_from_fields unconverted
        fields = {"sample_id": "x", "score": 10 ** 400, "role": "test", "truth": None}
        with pytest.raises(ScoreFileParseError) as exc_info:
            ScoreRecord.make_from_fields(fields, "higher_is_non_member", 9)  # type: ignore
        assert "line 9" in str(exc_info.value)


class TestCsvLine(unittest.TestCase):
    def test_fields(self):
        assert csv_line_to_fields("a, 0.1 ,test\n") == ["a", "0.1", "test"]
        assert csv_line_to_fields('"a,b",0.1,test\r\n') == ["a,b", "0.1", "test"]
        assert csv_line_to_fields("a;0.1;test", delimiter=";") == ["a", "0.1", "test"]
