"""Score files (wrapper mode input) and report files (output)."""

import csv
import io
import json
import os
from typing import Any, Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

import memaudit.vendor
from memaudit.exceptions import ContractViolation, ScoreFileError, ScoreFileParseError
from memaudit.fdr import VERDICT_MEMBER, VERDICT_NON_MEMBER, AdjustedPValues, DecisionSet, FdrReport
from memaudit.rows import CSV_COLUMNS, ORIENTATIONS, REQUIRED_COLUMNS, ScoreRecord, csv_line_to_fields

FORMATS = ("csv", "jsonl")

_ORIENTATION_PREFIX = "# orientation="
SAMPLES_COLUMNS = ("sample_id", "p_value", "p_adjusted", "verdict", "truth")


class ScoreFile(object):
    """A set of externally computed membership scores.

    :param records: the :class:`memaudit.rows.ScoreRecord` instances, in file order.
    :param orientation: `higher_is_non_member` or `higher_is_member`, as declared by the file.

    Usage::

        from memaudit.files import import_scores

        scores = import_scores('scores.csv')
        scores.calibration_scores()  # => normalized scores of the calibration records
        scores.test_records          # => list of ScoreRecord
    """

    def __init__(self, records: Sequence[ScoreRecord], orientation: str, path: Optional[str] = None) -> None:
        if orientation not in ORIENTATIONS:
            raise ContractViolation("Unknown orientation '{o}'".format(o=orientation))

        #: All the records, in file order.
        self.records = list(records)  # type: List[ScoreRecord]
        #: Orientation declared by the file.
        self.orientation = orientation  # type: str
        #: Path of the source file, if any.
        self.path = path  # type: Optional[str]

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[ScoreRecord]:
        return iter(self.records)

    def __str__(self) -> str:
        return "ScoreFile({c} calibration, {t} test, {o})".format(
            c=len(self.calibration_records), t=len(self.test_records), o=self.orientation
        )

    @property
    def calibration_records(self) -> List[ScoreRecord]:
        return [r for r in self.records if r.role == "calibration"]

    @property
    def test_records(self) -> List[ScoreRecord]:
        return [r for r in self.records if r.role == "test"]

    @property
    def normalized_scores(self) -> np.ndarray:
        """All scores (file order), higher = more non-member-like."""
        return np.array([r.score for r in self.records], dtype=float)

    def calibration_scores(self) -> np.ndarray:
        return np.array([r.score for r in self.calibration_records], dtype=float)

    def test_scores(self) -> np.ndarray:
        return np.array([r.score for r in self.test_records], dtype=float)

    @property
    def test_has_truth(self) -> bool:
        """`True` if every test record carries a truth label."""
        tests = self.test_records
        return bool(tests) and all(r.truth is not None for r in tests)

    def to_dataframe(self) -> Any:
        """Return the records as a pandas DataFrame (with the normalized score as an extra column).

        :raises: ImportError if pandas is not installed.
        """
        if not memaudit.vendor._has_pandas:
            raise ImportError("Pandas is missing.")

        from pandas import DataFrame

        rows = []
        for r in self.records:
            row = r.to_dict()
            row["normalized_score"] = r.score
            rows.append(row)
        return DataFrame(rows, columns=list(CSV_COLUMNS) + ["normalized_score"])


def import_scores(path: str, format: Optional[str] = None) -> ScoreFile:
    """Read a score file.

    :param format: `csv` or `jsonl`. Guessed from the file extension when `None` (`.jsonl` means JSON lines).

    :raises: :class:`memaudit.exceptions.ScoreFileParseError` (with the line number when known).
    :raises: :class:`memaudit.exceptions.ContractViolation` if the orientation is missing, or for a calibration
        record labeled member.
    """
    if format is None:
        format = "jsonl" if path.lower().endswith(".jsonl") else "csv"
    if format not in FORMATS:
        raise ScoreFileError("Unknown score file format '{f}'".format(f=format))

    try:
        with io.open(path, "r", encoding="utf-8", newline="") as f:
            lines = f.readlines()
    except OSError as exc:
        raise ScoreFileError("Cannot read {p}: {e}".format(p=path, e=exc))
    except UnicodeDecodeError as exc:
        raise ScoreFileParseError("not UTF-8 text ({e})".format(e=exc))

    if format == "csv":
        orientation, records = _parse_csv(lines)
    else:
        orientation, records = _parse_jsonl(lines)
    _check_unique_ids(records)
    return ScoreFile(records, orientation, path=path)


def write_scores(score_file: ScoreFile, path: str, format: str = "csv") -> None:
    """Write a score file readable by :func:`import_scores` (raw scores and declared orientation preserved)."""
    with io.open(path, "w", encoding="utf-8", newline="") as f:
        if format == "jsonl":
            f.write(json.dumps({"orientation": score_file.orientation}) + "\n")
            for r in score_file.records:
                record = r.to_dict()
                if record["truth"] is None:
                    del record["truth"]
                f.write(json.dumps(record) + "\n")
            return

        with_truth = any(r.truth is not None for r in score_file.records)
        columns = CSV_COLUMNS if with_truth else REQUIRED_COLUMNS
        f.write("{prefix}{o}\n".format(prefix=_ORIENTATION_PREFIX, o=score_file.orientation))
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for r in score_file.records:
            fields = [r.sample_id, repr(r.raw_score), r.role]
            if with_truth:
                fields.append(r.truth or "")
            writer.writerow(fields)


class SampleRow(NamedTuple):
    sample_id: str
    p_value: float
    p_adjusted: float
    verdict: str
    truth: Optional[str]


def samples_path(report_path: str) -> str:
    """Path of the per-sample CSV written next to a report: `report.json` -> `report.samples.csv`."""
    root, _ = os.path.splitext(report_path)
    return root + ".samples.csv"


def export_report(
    report: Optional[FdrReport],
    decisions: DecisionSet,
    path: str,
    adjusted: Optional[AdjustedPValues] = None,
    sample_ids: Optional[Sequence[str]] = None,
    truth: Optional[Sequence[bool]] = None,
) -> Tuple[str, str]:
    """Write a JSON report to `path` and the per-sample verdicts next to it (see :func:`samples_path`).

    The JSON object has the fields of :class:`memaudit.fdr.FdrReport`; without `report` (unknown ground truth)
    `n_fp`, `n_tp`, `fdr`, `pi0` and `bound` are null. Per-sample floats are written with `repr`, so reading
    them back with :func:`read_samples_csv` is bit-exact.

    :param adjusted: the adjusted p-values behind `decisions` (required unless `decisions` is empty).
    :param sample_ids: defaults to the positions in the test set.
    :returns: the paths of the report and of the per-sample CSV.
    """
    n = len(decisions)
    if adjusted is None and n > 0:
        raise ScoreFileError("The adjusted p-values are needed to export per-sample verdicts")
    if sample_ids is None:
        sample_ids = [str(i) for i in range(n)]
    if len(sample_ids) != n:
        raise ScoreFileError("{s} sample ids for {n} decisions".format(s=len(sample_ids), n=n))

    if report is not None:
        content = report.to_dict()  # type: Dict[str, Any]
    else:
        content = {key: None for key in ("n_fp", "n_tp", "fdr", "pi0", "bound")}
        content.update({"alpha": decisions.alpha, "n_rejected": decisions.n_rejected, "n_tests": n})

    with io.open(path, "w", encoding="utf-8") as f:
        json.dump(content, f, indent=2, sort_keys=True)
        f.write("\n")

    rows_path = samples_path(path)
    with io.open(rows_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(SAMPLES_COLUMNS)
        for i in range(n):
            truth_str = ""
            if truth is not None:
                truth_str = VERDICT_MEMBER if truth[i] else VERDICT_NON_MEMBER
            writer.writerow(
                [
                    str(sample_ids[i]),
                    repr(float(adjusted.raw.values[i])),  # type: ignore
                    repr(float(adjusted.adjusted[i])),  # type: ignore
                    decisions.verdicts[i],
                    truth_str,
                ]
            )

    return path, rows_path


def read_report(path: str) -> Dict[str, Any]:
    with io.open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def read_samples_csv(path: str) -> List[SampleRow]:
    """Read a per-sample CSV written by :func:`export_report`.

    :raises: :class:`memaudit.exceptions.ScoreFileParseError`
    """
    rows = []
    with io.open(path, "r", encoding="utf-8", newline="") as f:
        header = csv_line_to_fields(f.readline())
        if tuple(header) != SAMPLES_COLUMNS:
            raise ScoreFileParseError("unexpected header {h}".format(h=header), 1)
        for line_number, line in enumerate(f, start=2):
            if not line.strip():
                continue
            fields = csv_line_to_fields(line)
            if len(fields) != len(SAMPLES_COLUMNS):
                raise ScoreFileParseError("expected {n} fields".format(n=len(SAMPLES_COLUMNS)), line_number)
            try:
                p_value, p_adjusted = float(fields[1]), float(fields[2])
            except ValueError:
                raise ScoreFileParseError("malformed p-value", line_number)
            rows.append(SampleRow(fields[0], p_value, p_adjusted, fields[3], fields[4] or None))
    return rows


def _parse_csv(lines: List[str]) -> Tuple[str, List[ScoreRecord]]:
    if not lines or not lines[0].startswith(_ORIENTATION_PREFIX):
        raise ContractViolation("line 1: missing '{p}<orientation>' declaration".format(p=_ORIENTATION_PREFIX))
    orientation = lines[0][len(_ORIENTATION_PREFIX):].strip()
    if orientation not in ORIENTATIONS:
        raise ContractViolation(
            "line 1: unknown orientation '{o}' (expected one of {c})".format(o=orientation, c=", ".join(ORIENTATIONS))
        )

    if len(lines) < 2:
        raise ScoreFileParseError("missing header", 2)
    header = csv_line_to_fields(lines[1])
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    if missing:
        raise ScoreFileParseError("missing column(s): {m}".format(m=", ".join(missing)), 2)
    if tuple(header) not in (REQUIRED_COLUMNS, CSV_COLUMNS):
        raise ScoreFileParseError(
            "header must be {c} (truth is optional), got {h}".format(c=",".join(CSV_COLUMNS), h=",".join(header)), 2
        )

    records = []
    for line_number, line in enumerate(lines[2:], start=3):
        if not line.strip() or line.startswith("#"):
            continue
        fields = csv_line_to_fields(line)
        if len(fields) != len(header):
            raise ScoreFileParseError(
                "expected {e} fields, found {f}".format(e=len(header), f=len(fields)), line_number
            )
        records.append(ScoreRecord.make_from_fields(dict(zip(header, fields)), orientation, line_number))
    return orientation, records


def _parse_jsonl(lines: List[str]) -> Tuple[str, List[ScoreRecord]]:
    if not lines:
        raise ContractViolation("line 1: missing orientation object")
    try:
        first = json.loads(lines[0])
    except ValueError:
        raise ScoreFileParseError("invalid JSON", 1)
    if not isinstance(first, dict) or "orientation" not in first:
        raise ContractViolation("line 1: missing orientation object")
    orientation = first["orientation"]
    if orientation not in ORIENTATIONS:
        raise ContractViolation("line 1: unknown orientation '{o}'".format(o=orientation))

    records = []
    for line_number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except ValueError:
            raise ScoreFileParseError("invalid JSON", line_number)
        if not isinstance(obj, dict):
            raise ScoreFileParseError("a JSON object is expected", line_number)
        unknown = set(obj) - set(CSV_COLUMNS)
        if unknown:
            raise ScoreFileParseError("unknown field(s): {u}".format(u=", ".join(sorted(unknown))), line_number)
        fields = {
            key: (None if obj.get(key) is None else str(obj[key]) if key != "score" else obj[key])
            for key in CSV_COLUMNS
        }
        if isinstance(fields["score"], bool):
            raise ScoreFileParseError("malformed score", line_number)
        records.append(ScoreRecord.make_from_fields(fields, orientation, line_number))
    return orientation, records


def _check_unique_ids(records: Sequence[ScoreRecord]) -> None:
    seen = set()
    for r in records:
        if r.sample_id in seen:
            raise ScoreFileParseError("duplicate sample_id '{s}'".format(s=r.sample_id), r.line_number)
        seen.add(r.sample_id)
