"""Evaluation metrics of membership decisions: accuracy, AUROC, ROC points and TPR at low FPR.

Members are the positive class. Values are p-values, conformity scores or any other score where *lower*
means more member-like; a sample is predicted member when its value is `<= threshold`.
"""

import csv
import io
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import rankdata

from memaudit.exceptions import UndefinedMetric

#: False positive rates at which the true positive rate is reported.
FPR_GRID = (0.001, 0.01, 0.1)

RocPoint = Tuple[float, float, float]


@dataclass
class MetricReport:
    #: Accuracy of the predictions at :attr:`threshold`.
    accuracy: float
    #: Threshold used for :attr:`accuracy` (the best one when none was given).
    threshold: float
    auroc: float
    #: (threshold, fpr, tpr) for every distinct value, starting at (-inf, 0, 0).
    roc: List[RocPoint] = field(default_factory=list)
    #: Best TPR with an FPR at most the key.
    tpr_at_fpr: Dict[float, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, object]:
        return {
            "accuracy": self.accuracy,
            "threshold": self.threshold,
            "auroc": self.auroc,
            "tpr_at_fpr": {repr(k): v for k, v in self.tpr_at_fpr.items()},
        }


def auroc(values: Sequence[float], truth: Sequence[bool]) -> float:
    """Area under the ROC curve, as the rank statistic::

        P(member value < non-member value) + 0.5 * P(tie)

    :raises: :class:`memaudit.exceptions.UndefinedMetric` if `truth` has a single class.
    """
    values, truth = _check(values, truth)
    n_pos = int(np.count_nonzero(truth))
    n_neg = truth.size - n_pos
    # Average ranks of the negated values count ties as half
    ranks = rankdata(-values)
    u = float(np.sum(ranks[truth])) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def roc_points(values: Sequence[float], truth: Sequence[bool]) -> List[RocPoint]:
    """Return the (threshold, fpr, tpr) points of the ROC curve, one per distinct value (ascending)."""
    values, truth = _check(values, truth)
    n_pos = int(np.count_nonzero(truth))
    n_neg = truth.size - n_pos

    thresholds = np.unique(values)
    # Counts of values <= each threshold
    pos_counts = np.searchsorted(np.sort(values[truth]), thresholds, side="right")
    neg_counts = np.searchsorted(np.sort(values[~truth]), thresholds, side="right")

    points = [(float("-inf"), 0.0, 0.0)]
    points.extend(
        (float(t), int(p) / n_neg, int(q) / n_pos) for t, p, q in zip(thresholds, neg_counts, pos_counts)
    )
    return points


def tpr_at_fpr(points: Sequence[RocPoint], max_fpr: float) -> float:
    return max(tpr for _, fpr, tpr in points if fpr <= max_fpr)


def compute_metrics(
    values: Sequence[float], truth: Sequence[bool], threshold: Optional[float] = None
) -> MetricReport:
    """Compute all the metrics of :class:`MetricReport`.

    :param values: one value per sample, lower = more member-like.
    :param truth: `True` for true members.
    :param threshold: decision threshold for the accuracy. When `None`, the accuracy is the best one over
        all thresholds.

    :raises: :class:`memaudit.exceptions.UndefinedMetric` if `truth` has a single class.
    """
    values, truth = _check(values, truth)
    points = roc_points(values, truth)
    n_pos = int(np.count_nonzero(truth))
    n_neg = truth.size - n_pos

    if threshold is None:
        accuracies = [(tpr * n_pos + (1.0 - fpr) * n_neg) / truth.size for _, fpr, tpr in points]
        best = int(np.argmax(accuracies))
        threshold, accuracy = points[best][0], accuracies[best]
    else:
        accuracy = decision_accuracy(values <= threshold, truth)

    return MetricReport(
        accuracy=float(accuracy),
        threshold=float(threshold),
        auroc=auroc(values, truth),
        roc=points,
        tpr_at_fpr={f: tpr_at_fpr(points, f) for f in FPR_GRID},
    )


def decision_accuracy(member: Sequence[bool], truth: Sequence[bool]) -> float:
    """Fraction of correct member / non-member verdicts."""
    member = np.asarray(member, dtype=bool).ravel()
    truth = np.asarray(truth, dtype=bool).ravel()
    if member.size == 0 or member.size != truth.size:
        raise UndefinedMetric("Accuracy needs one verdict per truth label")
    return float(np.mean(member == truth))


def write_roc_csv(points: Sequence[RocPoint], path: str) -> None:
    """Write ROC points to a CSV file with the columns threshold, fpr, tpr."""
    with io.open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["threshold", "fpr", "tpr"])
        for t, fpr, tpr in points:
            writer.writerow([repr(t), repr(fpr), repr(tpr)])


def _check(values: Sequence[float], truth: Sequence[bool]) -> Tuple[np.ndarray, np.ndarray]:
    values = np.asarray(values, dtype=float).ravel()
    truth = np.asarray(truth, dtype=bool).ravel()
    if values.size != truth.size:
        raise UndefinedMetric("{v} values for {t} truth labels".format(v=values.size, t=truth.size))
    if not np.all(np.isfinite(values)):
        raise UndefinedMetric("Values must be finite")
    n_pos = int(np.count_nonzero(truth))
    if n_pos == 0 or n_pos == truth.size:
        raise UndefinedMetric("Metrics need both members and non-members in the truth labels")
    return values, truth
