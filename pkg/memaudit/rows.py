"""Objects that represent records (rows/lines) coming from score files."""

import csv
import math
from typing import Dict, List, Optional

from typing_extensions import Literal

from memaudit.exceptions import ContractViolation, ScoreFileParseError

Role = Literal["calibration", "test"]
ROLES = ("calibration", "test")

Truth = Literal["member", "non_member"]
TRUTHS = ("member", "non_member")

Orientation = Literal["higher_is_non_member", "higher_is_member"]
ORIENTATIONS = ("higher_is_non_member", "higher_is_member")

#: Columns of the CSV format, in order (`truth` may be omitted).
CSV_COLUMNS = ("sample_id", "score", "role", "truth")
REQUIRED_COLUMNS = ("sample_id", "score", "role")


class ScoreRecord(object):
    """One externally computed membership score.

    :param sample_id: identifier of the sample, unique in its file.
    :param raw_score: the score as written in the file.
    :param role: `calibration` (a certified non-member) or `test`.
    :param truth: `member`, `non_member` or `None` when unknown.
    :param orientation: how the file orients its scores; :attr:`score` is normalized from it.
    :param line_number: line (starting at 1) of the record in its file, if read from a file.

    :raises: :class:`memaudit.exceptions.ScoreFileParseError` for invalid values.
    :raises: :class:`memaudit.exceptions.ContractViolation` for a calibration record labeled `member`.
    """

    def __init__(
        self,
        sample_id: str,
        raw_score: float,
        role: str,
        truth: Optional[str] = None,
        orientation: str = "higher_is_non_member",
        line_number: Optional[int] = None,
    ) -> None:
        if sample_id == "":
            raise ScoreFileParseError("empty sample_id", line_number)
        if not math.isfinite(raw_score):
            raise ScoreFileParseError("non-finite score for sample {s}".format(s=sample_id), line_number)
        if role not in ROLES:
            raise ScoreFileParseError(
                "invalid role '{r}' (expected one of {c})".format(r=role, c=", ".join(ROLES)), line_number
            )
        if truth is not None and truth not in TRUTHS:
            raise ScoreFileParseError(
                "invalid truth '{t}' (expected one of {c})".format(t=truth, c=", ".join(TRUTHS)), line_number
            )
        if role == "calibration" and truth == "member":
            msg = "calibration record {s} is labeled member".format(s=sample_id)
            if line_number is not None:
                msg = "line {n}: {m}".format(n=line_number, m=msg)
            raise ContractViolation(msg)
        if orientation not in ORIENTATIONS:
            raise ScoreFileParseError("invalid orientation '{o}'".format(o=orientation), line_number)

        #: Identifier of the sample.
        self.sample_id = sample_id  # type: str
        #: The score exactly as found in the file.
        self.raw_score = float(raw_score)  # type: float
        #: `calibration` or `test`.
        self.role = role  # type: str
        #: `member`, `non_member` or `None`.
        self.truth = truth  # type: Optional[str]
        #: Line of the record in its source file (or `None`).
        self.line_number = line_number  # type: Optional[int]
        #: The score oriented so that higher always means more non-member-like.
        self.score = -self.raw_score if orientation == "higher_is_member" else self.raw_score  # type: float

    def __repr__(self) -> str:
        return "ScoreRecord(sample_id={s!r}, raw_score={r!r}, role={ro!r}, truth={t!r})".format(
            s=self.sample_id, r=self.raw_score, ro=self.role, t=self.truth
        )

    def __key(self):
        return (self.sample_id, self.raw_score, self.role, self.truth, self.score)

    def __eq__(self, other):
        if not isinstance(other, ScoreRecord):
            return NotImplemented
        return self.__key() == other.__key()

    def __ne__(self, other):
        return not self.__eq__(other)

    def __hash__(self):
        return hash(self.__key())

    def to_dict(self) -> Dict[str, object]:
        """The record fields, as written to score files (raw score, original orientation)."""
        return {"sample_id": self.sample_id, "score": self.raw_score, "role": self.role, "truth": self.truth}

    @classmethod
    def make_from_fields(
        cls, fields: Dict[str, Optional[str]], orientation: str, line_number: Optional[int] = None
    ) -> "ScoreRecord":
        """Build a record from the string fields of a file line.

        :raises: :class:`memaudit.exceptions.ScoreFileParseError`
        """
        for column in REQUIRED_COLUMNS:
            if fields.get(column) in (None, ""):
                raise ScoreFileParseError("missing value for '{c}'".format(c=column), line_number)
        try:
            raw_score = float(fields["score"])  # type: ignore
        except (TypeError, ValueError, OverflowError):
            raise ScoreFileParseError("malformed score '{v}'".format(v=fields["score"]), line_number)
        truth = fields.get("truth") or None
        return cls(
            str(fields["sample_id"]),
            raw_score,
            str(fields["role"]),
            truth=truth,
            orientation=orientation,
            line_number=line_number,
        )


def csv_line_to_fields(csv_line: str, delimiter: str = ",") -> List[str]:
    """Split a line from a CSV file.

    Return a list of fields, stripped of surrounding whitespace. Fields may be enclosed in double quotes.
    """
    csv_line = csv_line.rstrip("\r\n")
    for row in csv.reader([csv_line], delimiter=delimiter, quotechar='"'):
        return [field.strip() for field in row]
    return []
