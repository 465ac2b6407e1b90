"""Adjusted p-values and membership decisions with false discovery rate (FDR) control.

Each test sample carries the null hypothesis "this sample is a non-member". Samples are declared members when
their step-up adjusted p-value is at most `alpha`; the expected proportion of non-members among the declared
members is then at most ``alpha * pi0``.
"""

import json
from dataclasses import asdict, dataclass
from typing import Dict, FrozenSet, List, Optional, Sequence

import numpy as np

from memaudit.exceptions import InvalidConfig, InvalidPValues

VERDICT_MEMBER = "member"
VERDICT_NON_MEMBER = "non_member"


def check_alpha(alpha: float) -> float:
    """Return `alpha` as a float, or raise :class:`memaudit.exceptions.InvalidConfig` unless 0 < alpha < 1."""
    alpha = float(alpha)
    if not (0.0 < alpha < 1.0):
        raise InvalidConfig("The significance level must be in (0, 1), got {a}".format(a=alpha))
    return alpha


class PValueVector(object):
    """Non-member p-values of a test set, one per sample (sample `i` is at original index `i`).

    :raises: :class:`memaudit.exceptions.InvalidPValues` if a value is outside (0, 1].
    """

    def __init__(self, values: Sequence[float]) -> None:
        values = np.array(values, dtype=float).ravel()
        if not np.all(np.isfinite(values)) or np.any(values <= 0) or np.any(values > 1):
            raise InvalidPValues("P-values must be in (0, 1]")
        values.setflags(write=False)
        #: The p-values, by original index.
        self.values = values  # type: np.ndarray

    def __len__(self) -> int:
        return self.values.size

    def __repr__(self) -> str:
        return "PValueVector({v})".format(v=self.values.tolist())

    @property
    def original_index(self) -> np.ndarray:
        return np.arange(self.values.size)

    def rank_order(self) -> np.ndarray:
        """Original indices sorted by ascending p-value; ties keep their original index order."""
        return np.argsort(self.values, kind="stable")


class AdjustedPValues(object):
    """Step-up adjusted p-values, aligned to the original indices of the raw :class:`PValueVector`."""

    def __init__(self, raw: PValueVector, adjusted: np.ndarray, order: np.ndarray) -> None:
        adjusted = np.asarray(adjusted, dtype=float)
        adjusted.setflags(write=False)
        #: The raw p-values these were computed from.
        self.raw = raw  # type: PValueVector
        #: Adjusted p-values, by original index.
        self.adjusted = adjusted  # type: np.ndarray
        #: Original indices in ascending raw p-value order (the ranks used by the adjustment).
        self.order = order  # type: np.ndarray

    def __len__(self) -> int:
        return self.adjusted.size

    def __repr__(self) -> str:
        return "AdjustedPValues({v})".format(v=self.adjusted.tolist())

    def in_rank_order(self) -> np.ndarray:
        return self.adjusted[self.order]


class DecisionSet(object):
    """Membership decisions for a test set.

    :param member: boolean array, `True` where the sample is declared a member (its null is rejected).
    :param alpha: the significance level the decisions were taken at.
    """

    def __init__(self, member: Sequence[bool], alpha: float) -> None:
        member = np.array(member, dtype=bool).ravel()
        member.setflags(write=False)
        #: Boolean verdicts by original index (`True` = declared member).
        self.member = member  # type: np.ndarray
        #: Significance level used for the decisions.
        self.alpha = float(alpha)  # type: float

    def __len__(self) -> int:
        return self.member.size

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DecisionSet):
            return NotImplemented
        return np.array_equal(self.member, other.member)

    def __ne__(self, other: object) -> bool:
        return not self.__eq__(other)

    __hash__ = None  # type: ignore

    def __repr__(self) -> str:
        return "DecisionSet(rejected={r}, n_tests={n}, alpha={a})".format(
            r=self.rejected_indices.tolist(), n=len(self), a=self.alpha
        )

    @property
    def rejected(self) -> FrozenSet[int]:
        """Original indices of the samples declared members."""
        return frozenset(int(i) for i in np.flatnonzero(self.member))

    @property
    def rejected_indices(self) -> np.ndarray:
        """Sorted original indices of the samples declared members."""
        return np.flatnonzero(self.member)

    @property
    def n_rejected(self) -> int:
        return int(np.count_nonzero(self.member))

    @property
    def verdicts(self) -> List[str]:
        """Per-sample verdicts, `member` or `non_member`."""
        return [VERDICT_MEMBER if m else VERDICT_NON_MEMBER for m in self.member]


@dataclass(frozen=True)
class FdrReport:
    """Realized false discovery rate of a :class:`DecisionSet` against the ground truth.

    ``fdr = n_fp / max(1, n_fp + n_tp)``; `bound` is ``alpha * pi0``.
    """

    n_fp: int
    n_tp: int
    fdr: float
    pi0: float
    bound: float
    alpha: float
    n_rejected: int
    n_tests: int

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def bh_adjust(p: PValueVector) -> AdjustedPValues:
    """Return the step-up (Benjamini-Hochberg) adjusted p-values.

    With the p-values sorted ascending as p(1) <= ... <= p(n), n = len(p)::

        adjusted(t) = min(1, min over m in t..n of (n / m) * p(m))

    Results are mapped back to the original indices. Tied p-values always receive identical adjusted values.

    :raises: :class:`memaudit.exceptions.InvalidPValues` if `p` is empty.

    Example::

        bh_adjust(PValueVector([0.01, 0.04, 0.03, 0.5])).adjusted
        # => [0.04, 0.05333..., 0.05333..., 0.5]
    """
    n = len(p)
    if n == 0:
        raise InvalidPValues("Cannot adjust an empty p-value vector")

    order = p.rank_order()
    ranks = np.arange(1, n + 1, dtype=float)
    scaled = p.values[order] * n / ranks
    # Suffix minima, in one reverse pass
    in_rank_order = np.minimum(np.minimum.accumulate(scaled[::-1])[::-1], 1.0)

    adjusted = np.empty(n, dtype=float)
    adjusted[order] = in_rank_order
    return AdjustedPValues(p, adjusted, order)


def decide(adj: AdjustedPValues, alpha: float) -> DecisionSet:
    """Declare members the samples whose adjusted p-value is `<= alpha` (equality rejects)."""
    alpha = check_alpha(alpha)
    return DecisionSet(adj.adjusted <= alpha, alpha)


def classic_bh_oracle(p: PValueVector, alpha: float) -> DecisionSet:
    """Reference step-up procedure, written independently of :func:`bh_adjust`.

    Rejects the hypotheses of ranks 1..t* where ``t* = max{t : p(t) <= t * alpha / n}``.
    """
    alpha = check_alpha(alpha)
    n = len(p)
    if n == 0:
        raise InvalidPValues("Cannot test an empty p-value vector")

    order = p.rank_order()
    sorted_p = p.values[order]
    below = np.flatnonzero(sorted_p <= np.arange(1, n + 1) * alpha / n)

    member = np.zeros(n, dtype=bool)
    if below.size > 0:
        member[order[:below[-1] + 1]] = True
    return DecisionSet(member, alpha)


def fdr_bound(alpha: float, pi0: float) -> float:
    """Return ``alpha * pi0``, the FDR level guaranteed when a fraction `pi0` of the tests are non-members."""
    alpha = check_alpha(alpha)
    if not (0.0 <= pi0 <= 1.0):
        raise InvalidConfig("pi0 must be in [0, 1], got {p}".format(p=pi0))
    return alpha * pi0


def compute_fdr(d: DecisionSet, truth: Sequence[bool]) -> FdrReport:
    """Compare decisions with the ground truth (`truth[i]` is `True` for a true member).

    :raises: :class:`memaudit.exceptions.InvalidConfig` if `truth` and `d` have different lengths.
    """
    truth = np.asarray(truth, dtype=bool).ravel()
    if truth.size != len(d):
        raise InvalidConfig(
            "{t} truth labels for {n} decisions".format(t=truth.size, n=len(d))
        )
    n_tests = len(d)
    n_fp = int(np.count_nonzero(d.member & ~truth))
    n_tp = int(np.count_nonzero(d.member & truth))
    pi0 = float(np.count_nonzero(~truth)) / n_tests if n_tests > 0 else 1.0

    return FdrReport(
        n_fp=n_fp,
        n_tp=n_tp,
        fdr=n_fp / max(1, n_fp + n_tp),
        pi0=pi0,
        bound=fdr_bound(d.alpha, pi0),
        alpha=d.alpha,
        n_rejected=d.n_rejected,
        n_tests=n_tests,
    )


def realized_fdr(member: np.ndarray, truth: np.ndarray) -> float:
    """Fraction of false discoveries among the declared members (0 when nothing is declared)."""
    n_rejected = int(np.count_nonzero(member))
    return float(np.count_nonzero(member & ~truth)) / max(1, n_rejected)


def truth_from_labels(labels: Sequence[Optional[str]]) -> Optional[np.ndarray]:
    """Convert `member` / `non_member` strings to a boolean array; `None` if any label is missing."""
    if any(label is None for label in labels):
        return None
    return np.array([label == VERDICT_MEMBER for label in labels], dtype=bool)
