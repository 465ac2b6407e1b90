"""Non-member conformity scores and split-conformal non-member p-values.

A test sample is scored with :func:`conformity_score` (higher = more typical of non-members), then ranked
against a frozen multiset of non-member calibration scores (:class:`CalibrationScores`). The resulting
p-value is

    p = (1 + #{c in calibration : c <= s}) / (1 + |calibration|)

and satisfies ``P(p <= alpha) <= alpha`` for a non-member whose score is exchangeable with the calibration
scores.
"""

import io
import math
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from memaudit.exceptions import CalibrationNotFrozen, InvalidConfig, InvalidScore

#: Default weight of the logit term in :func:`conformity_score`.
DEFAULT_LAMBDA = 0.5
#: Probabilities are clamped to [EPSILON, 1 - EPSILON] before the logit transform.
EPSILON = 1e-7

CALIBRATION_FORMAT_VERSION = 1
_CALIBRATION_HEADER_PREFIX = "# memaudit-calibration"


def check_lambda(lam: float) -> float:
    """Return `lam` as a float, or raise :class:`memaudit.exceptions.InvalidConfig` if it's not in [0, 1]."""
    lam = float(lam)
    if not (0.0 <= lam <= 1.0):
        raise InvalidConfig("lambda must be in [0, 1], got {lam}".format(lam=lam))
    return lam


def conformity_score(f_bc: float, lam: float = DEFAULT_LAMBDA, epsilon: float = EPSILON) -> float:
    """Return the non-member conformity score of a membership-classifier output.

    ``lam * log(f / (1 - f)) + (1 - lam) * f`` where `f` is `f_bc` (the classifier's non-member probability)
    clamped to [epsilon, 1 - epsilon].

    :raises: :class:`memaudit.exceptions.InvalidScore` if `f_bc` is non-finite or outside [0, 1].
    :raises: :class:`memaudit.exceptions.InvalidConfig` if `lam` is outside [0, 1].
    """
    return float(conformity_scores(np.array([f_bc], dtype=float), lam, epsilon)[0])


def conformity_scores(f_bc: Sequence[float], lam: float = DEFAULT_LAMBDA, epsilon: float = EPSILON) -> np.ndarray:
    """Vectorized :func:`conformity_score`."""
    lam = check_lambda(lam)
    f_bc = np.asarray(f_bc, dtype=float)
    if not np.all(np.isfinite(f_bc)):
        raise InvalidScore("Membership probabilities must be finite")
    if np.any(f_bc < 0) or np.any(f_bc > 1):
        raise InvalidScore("Membership probabilities must be in [0, 1]")

    clamped = np.clip(f_bc, epsilon, 1.0 - epsilon)
    logit = np.log(clamped / (1.0 - clamped))
    return lam * logit + (1.0 - lam) * clamped


class CalibrationScores(object):
    """A multiset of non-member conformity scores, ranked against by :meth:`pvalue`.

    Scores can be added until :meth:`freeze` is called; the set is then sorted once and becomes
    immutable (so any number of concurrent queries is safe). P-values can only be computed on a
    frozen set.

    Usage::

        calib = CalibrationScores()
        calib.extend([0.7, 0.1, 0.4])
        calib.freeze()
        calib.pvalue(0.5)  # => 0.75

    Most of the time, :func:`build_calibration` is more convenient.
    """

    def __init__(self, scores: Optional[Iterable[float]] = None) -> None:
        self._pending = []  # type: list
        self._sorted = None  # type: Optional[np.ndarray]
        if scores is not None:
            self.extend(scores)

    def __len__(self) -> int:
        if self._sorted is not None:
            return self._sorted.size
        return len(self._pending)

    def __repr__(self) -> str:
        return "CalibrationScores(size={n}, frozen={f})".format(n=len(self), f=self.frozen)

    @property
    def frozen(self) -> bool:
        """`True` once :meth:`freeze` has been called."""
        return self._sorted is not None

    @property
    def scores(self) -> np.ndarray:
        """The sorted (non-decreasing) scores, as a read-only array.

        :raises: :class:`memaudit.exceptions.CalibrationNotFrozen`
        """
        self._check_frozen()
        return self._sorted

    def add(self, score: float) -> None:
        """Add a single score (before freezing)."""
        self.extend([score])

    def extend(self, scores: Iterable[float]) -> None:
        """Add several scores (before freezing).

        :raises: :class:`memaudit.exceptions.InvalidScore` for non-finite scores.
        :raises: :class:`memaudit.exceptions.InvalidConfig` if the set is already frozen.
        """
        if self.frozen:
            raise InvalidConfig("Cannot add scores to a frozen calibration set")
        values = np.asarray(list(scores), dtype=float).ravel()
        if not np.all(np.isfinite(values)):
            raise InvalidScore("Calibration scores must be finite")
        self._pending.extend(values.tolist())

    def freeze(self) -> "CalibrationScores":
        """Sort the scores and make the set immutable. Freezing twice is a no-op.

        :raises: :class:`memaudit.exceptions.InvalidScore` if the set is empty.
        """
        if self.frozen:
            return self
        if not self._pending:
            raise InvalidScore("A calibration set needs at least one score")
        self._sorted = np.sort(np.array(self._pending, dtype=float), kind="stable")
        self._sorted.setflags(write=False)
        self._pending = []
        return self

    def count_at_most(self, scores: Sequence[float]) -> np.ndarray:
        """For each score `s`, the number of calibration scores `<= s` (binary search)."""
        self._check_frozen()
        return np.searchsorted(self._sorted, np.asarray(scores, dtype=float), side="right")

    def pvalue(self, score: float) -> float:
        """Shortcut for :func:`conformal_pvalue`."""
        return conformal_pvalue(self, score)

    def pvalues(self, scores: Sequence[float]) -> np.ndarray:
        """Shortcut for :func:`batch_pvalues`."""
        return batch_pvalues(self, scores)

    def _check_frozen(self) -> None:
        if not self.frozen:
            raise CalibrationNotFrozen("The calibration set must be frozen first")


def build_calibration(raw_scores: Iterable[float]) -> CalibrationScores:
    """Return a frozen, sorted calibration set made of `raw_scores` (duplicates preserved).

    :raises: :class:`memaudit.exceptions.InvalidScore` if `raw_scores` is empty or contains non-finite values.
    """
    return CalibrationScores(raw_scores).freeze()


def conformal_pvalue(calib: CalibrationScores, score: float) -> float:
    """Return the non-member p-value of a test conformity score.

    ``(1 + #{c in calib : c <= score}) / (1 + |calib|)``: ties count towards the numerator, and the
    test score itself is part of the ranked multiset.

    :raises: :class:`memaudit.exceptions.CalibrationNotFrozen`
    :raises: :class:`memaudit.exceptions.InvalidScore` if `score` is non-finite.
    """
    return float(batch_pvalues(calib, [score])[0])


def batch_pvalues(calib: CalibrationScores, scores: Sequence[float]) -> np.ndarray:
    """Element-wise :func:`conformal_pvalue`; order is preserved and an empty input gives an empty array."""
    scores = np.asarray(scores, dtype=float).ravel()
    if not np.all(np.isfinite(scores)):
        raise InvalidScore("Test conformity scores must be finite")
    counts = calib.count_at_most(scores)
    return (1.0 + counts) / (1.0 + len(calib))


def save_calibration(
    calib: CalibrationScores, path: str, lam: float = DEFAULT_LAMBDA, epsilon: float = EPSILON
) -> None:
    """Write a frozen calibration set to `path` (header line, then one score per line; see doc/formats.rst)."""
    with io.open(path, "w", encoding="utf-8") as f:
        f.write(
            "{prefix} version={v} lambda={lam!r} epsilon={eps!r}\n".format(
                prefix=_CALIBRATION_HEADER_PREFIX, v=CALIBRATION_FORMAT_VERSION, lam=float(lam), eps=float(epsilon)
            )
        )
        for s in calib.scores:
            f.write(repr(float(s)) + "\n")


def load_calibration(path: str) -> Tuple[CalibrationScores, float, float]:
    """Read a file written by :func:`save_calibration`.

    :returns: (frozen calibration set, lambda, epsilon)
    :raises: :class:`memaudit.exceptions.InvalidConfig` if the header is missing or malformed.
    """
    with io.open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        if not header.startswith(_CALIBRATION_HEADER_PREFIX):
            raise InvalidConfig("{p} is not a calibration file".format(p=path))
        try:
            fields = dict(item.split("=", 1) for item in header[len(_CALIBRATION_HEADER_PREFIX):].split())
            if int(fields["version"]) != CALIBRATION_FORMAT_VERSION:
                raise InvalidConfig("Unsupported calibration format version: {v}".format(v=fields["version"]))
            lam = float(fields["lambda"])
            epsilon = float(fields["epsilon"])
        except (KeyError, ValueError):
            raise InvalidConfig("Malformed calibration header: {h}".format(h=header))

        scores = []  # type: List[float]
        for line_number, line in enumerate(f, start=2):
            if not line.strip():
                continue
            try:
                scores.append(float(line))
            except ValueError:
                raise InvalidConfig("{p}, line {n}: malformed score".format(p=path, n=line_number))

    if not all(math.isfinite(s) for s in scores):
        raise InvalidConfig("{p} contains non-finite scores".format(p=path))

    return build_calibration(scores), lam, epsilon
