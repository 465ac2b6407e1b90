"""Query-only access to the attacked (victim) model.

The attack never reads victim parameters: it only sees the score vectors returned by a :class:`VictimOracle`.
"""

from abc import ABC, abstractmethod
from typing import Mapping, Optional, Sequence

import numpy as np

from memaudit.exceptions import VictimQueryError
from memaudit.nn import LayerSpec, MlpModel, is_score_vector


class VictimOracle(ABC):
    """Maps feature vectors to score vectors.

    Subclasses implement :meth:`_query`; :meth:`query` validates what they return.
    """

    #: Architecture of the victim, when the threat model lets the attacker know it (grey-box), else `None`.
    architecture = None  # type: Optional[LayerSpec]

    def query(self, features: np.ndarray) -> np.ndarray:
        """Return the (n, Y) score vectors of the victim for a (n, d) feature matrix.

        :raises: :class:`memaudit.exceptions.VictimQueryError` if the query fails or returns invalid score vectors.
        """
        features = np.asarray(features, dtype=float)
        if features.ndim == 1:
            features = features.reshape(1, -1)
        try:
            outputs = np.asarray(self._query(features), dtype=float)
        except VictimQueryError:
            raise
        except Exception as exc:
            raise VictimQueryError("Victim query failed: {e}".format(e=exc)) from exc

        if outputs.ndim != 2 or outputs.shape[0] != features.shape[0]:
            raise VictimQueryError(
                "Expected {n} score vectors, got an array of shape {shape}".format(
                    n=features.shape[0], shape=outputs.shape
                )
            )
        if outputs.shape[0] > 0 and not is_score_vector(outputs):
            raise VictimQueryError("The victim returned invalid score vectors")
        return outputs

    @abstractmethod
    def _query(self, features: np.ndarray) -> np.ndarray:
        pass


class ModelVictim(VictimOracle):
    """A victim backed by an in-process :class:`memaudit.nn.MlpModel`.

    :param model: the victim model.
    :param disclose_architecture: if `True` (grey-box setting), :attr:`architecture` exposes the model's layer spec.
    """

    def __init__(self, model: MlpModel, disclose_architecture: bool = True) -> None:
        self._model = model
        self.architecture = model.arch if disclose_architecture else None
        #: Number of queried samples so far.
        self.n_queries = 0

    def _query(self, features: np.ndarray) -> np.ndarray:
        self.n_queries += features.shape[0]
        return self._model.predict_proba(features)


class RecordedVictim(VictimOracle):
    """Replays score vectors recorded beforehand, looked up by the exact feature vector.

    :param features: the (n, d) recorded inputs.
    :param outputs: the (n, Y) recorded score vectors.
    """

    def __init__(self, features: np.ndarray, outputs: np.ndarray) -> None:
        features = np.asarray(features, dtype=float)
        outputs = np.asarray(outputs, dtype=float)
        if features.shape[0] != outputs.shape[0]:
            raise VictimQueryError("One recorded output per recorded input is required")
        if outputs.shape[0] > 0 and not is_score_vector(outputs):
            raise VictimQueryError("Recorded outputs are not valid score vectors")
        self._outputs = {
            _key(x): y for x, y in zip(features, outputs)
        }  # type: Mapping[bytes, np.ndarray]

    def _query(self, features: np.ndarray) -> np.ndarray:
        rows = []
        for position, x in enumerate(features):
            try:
                rows.append(self._outputs[_key(x)])
            except KeyError:
                raise VictimQueryError("No recorded output for query #{p}".format(p=position))
        if not rows:
            return np.empty((0, 0))
        return np.vstack(rows)


def _key(x: Sequence[float]) -> bytes:
    return np.ascontiguousarray(x, dtype=float).tobytes()
