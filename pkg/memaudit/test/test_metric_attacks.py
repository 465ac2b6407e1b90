import unittest

import numpy as np
import pytest

from memaudit.exceptions import InvalidScore
from memaudit.metric_attacks import entropy_score, loss_score, score_function, softmax_score

PROBS = np.array([[0.9, 0.1], [0.5, 0.5], [0.2, 0.8]])


class TestMetricScores(unittest.TestCase):
    def test_softmax_score(self):
        np.testing.assert_allclose(softmax_score(PROBS), [-0.9, -0.5, -0.8])
        np.testing.assert_allclose(softmax_score(PROBS, [0, 0, 0]), [-0.9, -0.5, -0.2])

    def test_entropy_score(self):
        np.testing.assert_allclose(entropy_score(PROBS)[1], np.log(2.0))
        assert entropy_score(PROBS)[0] < entropy_score(PROBS)[1]

        modified = entropy_score(PROBS, [0, 0, 0])
        # Confident and correct < uncertain < confident and wrong
        assert modified[0] < modified[1] < modified[2]
        expected = -0.1 * np.log(0.9) - 0.1 * np.log(0.9)
        assert modified[0] == pytest.approx(expected)

    def test_loss_score(self):
        np.testing.assert_allclose(loss_score(PROBS, [0, 1, 1]), -np.log([0.9, 0.5, 0.8]))
        assert np.isfinite(loss_score(np.array([[1.0, 0.0]]), [1])[0])
        with pytest.raises(InvalidScore):
            loss_score(PROBS)

    def test_members_score_lower(self):
        # Confident predictions, typical of training samples, must look less like non-members
        confident = np.array([[0.99, 0.01]])
        unsure = np.array([[0.6, 0.4]])
        for name in ("softmax", "entropy", "loss"):
            fn = score_function(name)
            assert fn(confident, [0])[0] < fn(unsure, [0])[0], name

    def test_invalid_inputs(self):
        with pytest.raises(InvalidScore):
            score_function("confidence")
        with pytest.raises(InvalidScore):
            softmax_score(np.array([[0.5, 0.6]]))
        with pytest.raises(InvalidScore):
            softmax_score(PROBS, [0, 2, 0])
        with pytest.raises(InvalidScore):
            entropy_score(PROBS, [0, 1])
