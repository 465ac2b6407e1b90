"""Metric-based membership scores, computed directly from score vectors.

Every function takes a (n, Y) batch of score vectors and returns one score per row, oriented like the
conformity scores of :mod:`memaudit.conformal`: higher means more typical of a non-member.

- :func:`softmax_score`: minus the confidence (probability of the true label, or the top probability when labels
  are unknown). Members get confident predictions.
- :func:`entropy_score`: modified entropy when labels are known, Shannon entropy otherwise.
- :func:`loss_score`: cross-entropy loss of the true label (labels required).
"""

from typing import Callable, Dict, Optional, Sequence

import numpy as np

from memaudit.conformal import EPSILON
from memaudit.exceptions import InvalidScore
from memaudit.nn import is_score_vector

MetricFunction = Callable[[np.ndarray, Optional[Sequence[int]]], np.ndarray]


def softmax_score(probs: np.ndarray, labels: Optional[Sequence[int]] = None) -> np.ndarray:
    probs = _check_probs(probs)
    if labels is None:
        return -np.max(probs, axis=1)
    return -_true_label_probs(probs, labels)


def entropy_score(probs: np.ndarray, labels: Optional[Sequence[int]] = None) -> np.ndarray:
    """Shannon entropy of each score vector, or its modified entropy when `labels` are given::

        -(1 - p_y) log(p_y) - sum over i != y of p_i log(1 - p_i)

    The modified version is low for confident correct predictions and high for confident wrong ones.
    """
    probs = _check_probs(probs)
    clamped = np.clip(probs, EPSILON, 1.0 - EPSILON)
    if labels is None:
        return -np.sum(probs * np.log(clamped), axis=1)

    labels = _check_labels(probs, labels)
    rows = np.arange(probs.shape[0])
    p_true = clamped[rows, labels]
    others = probs * np.log(1.0 - clamped)
    others[rows, labels] = 0.0
    return -(1.0 - p_true) * np.log(p_true) - np.sum(others, axis=1)


def loss_score(probs: np.ndarray, labels: Optional[Sequence[int]] = None) -> np.ndarray:
    """Cross-entropy loss ``-log(p_y)`` of each score vector.

    :raises: :class:`memaudit.exceptions.InvalidScore` if `labels` is missing.
    """
    if labels is None:
        raise InvalidScore("The loss score needs the true labels")
    probs = _check_probs(probs)
    return -np.log(np.clip(_true_label_probs(probs, labels), EPSILON, 1.0))


METRIC_FUNCTIONS = {
    "softmax": softmax_score,
    "entropy": entropy_score,
    "loss": loss_score,
}  # type: Dict[str, MetricFunction]


def score_function(name: str) -> MetricFunction:
    """Return the metric function registered under `name` (`softmax`, `entropy` or `loss`).

    :raises: :class:`memaudit.exceptions.InvalidScore` for unknown names.
    """
    try:
        return METRIC_FUNCTIONS[name]
    except KeyError:
        raise InvalidScore(
            "Unknown score function '{n}' (expected one of {c})".format(n=name, c=", ".join(METRIC_FUNCTIONS))
        )


def _check_probs(probs: np.ndarray) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    if probs.ndim == 1:
        probs = probs.reshape(1, -1)
    if not is_score_vector(probs):
        raise InvalidScore("Metric scores need valid score vectors")
    return probs


def _check_labels(probs: np.ndarray, labels: Sequence[int]) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if labels.size != probs.shape[0]:
        raise InvalidScore("{l} labels for {n} score vectors".format(l=labels.size, n=probs.shape[0]))
    if np.any(labels < 0) or np.any(labels >= probs.shape[1]):
        raise InvalidScore("Labels must be in [0, {y})".format(y=probs.shape[1]))
    return labels


def _true_label_probs(probs: np.ndarray, labels: Sequence[int]) -> np.ndarray:
    labels = _check_labels(probs, labels)
    return probs[np.arange(probs.shape[0]), labels]
