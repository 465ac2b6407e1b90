import unittest

import numpy as np
import pytest

from memaudit.exceptions import VictimQueryError
from memaudit.nn import LayerSpec, init_model
from memaudit.victim import ModelVictim, RecordedVictim, VictimOracle


class BrokenVictim(VictimOracle):
    def _query(self, features):
        raise RuntimeError("connection reset")


class NotAProbabilityVictim(VictimOracle):
    def _query(self, features):
        return np.full((features.shape[0], 2), 0.7)


class TestModelVictim(unittest.TestCase):
    def setUp(self):
        self.model = init_model(LayerSpec((3, 4, 2)), seed=1)

    def test_query(self):
        victim = ModelVictim(self.model)
        features = np.random.default_rng(0).normal(size=(5, 3))
        outputs = victim.query(features)
        assert outputs.shape == (5, 2)
        np.testing.assert_array_equal(outputs, self.model.predict_proba(features))
        assert victim.query(features[0]).shape == (1, 2)
        assert victim.n_queries == 6

    def test_architecture_disclosure(self):
        assert ModelVictim(self.model).architecture == self.model.arch
        assert ModelVictim(self.model, disclose_architecture=False).architecture is None

    def test_wrong_dimension(self):
        with pytest.raises(VictimQueryError):
            ModelVictim(self.model).query(np.zeros((2, 5)))


class TestQueryValidation(unittest.TestCase):
    def test_failures_are_wrapped(self):
        with pytest.raises(VictimQueryError) as exc_info:
            BrokenVictim().query(np.zeros((1, 2)))
        assert "connection reset" in str(exc_info.value)

    def test_invalid_outputs(self):
        with pytest.raises(VictimQueryError):
            NotAProbabilityVictim().query(np.zeros((1, 2)))


class TestRecordedVictim(unittest.TestCase):
    def test_replay(self):
        features = np.array([[0.0, 1.0], [2.0, 3.0]])
        outputs = np.array([[0.9, 0.1], [0.2, 0.8]])
        victim = RecordedVictim(features, outputs)

        np.testing.assert_array_equal(victim.query(features[::-1]), outputs[::-1])
        assert victim.architecture is None
        with pytest.raises(VictimQueryError):
            victim.query([[5.0, 5.0]])

    def test_invalid_recording(self):
        with pytest.raises(VictimQueryError):
            RecordedVictim(np.zeros((2, 2)), np.array([[0.5, 0.5]]))
        with pytest.raises(VictimQueryError):
            RecordedVictim(np.zeros((1, 2)), np.array([[0.5, 0.6]]))
