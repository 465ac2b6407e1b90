"""Minimal feed-forward classifiers, used for victim, surrogate and membership (binary) models.

- :class:`LabeledDataset` holds features and integer class labels (plus stable sample ids).
- :class:`MlpModel` is an immutable multi-layer perceptron with a softmax output.
- :func:`train_classifier` fits a model with plain mini-batch SGD on the cross-entropy loss.

Everything is deterministic: the same data, architecture and seed give a bit-identical model.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from typing_extensions import Literal

from memaudit.exceptions import InvalidConfig, InvalidDataset, TrainingDiverged

logger = logging.getLogger(__name__)

Activation = Literal["relu", "tanh"]
ACTIVATIONS = ("relu", "tanh")

#: A score vector is a 1-D float array of Y probabilities summing to 1 (the softmax output of a model
#: for one input). Batches of score vectors are 2-D arrays, one row per input.
ScoreVector = np.ndarray

MODEL_FORMAT_VERSION = 1

SCORE_VECTOR_TOLERANCE = 1e-6


class LabeledDataset(object):
    """A set of samples with integer class labels.

    :param features: matrix of reals, one row per sample.
    :param labels: integer class ids in [0, n_classes).
    :param n_classes: number of classes (Y). Defaults to ``max(labels) + 1``.
    :param sample_ids: unique integer id of each sample, preserved by :meth:`subset`. Defaults to the row positions.

    :raises: :class:`memaudit.exceptions.InvalidDataset`
    """

    def __init__(
        self,
        features: Sequence,
        labels: Sequence[int],
        n_classes: Optional[int] = None,
        sample_ids: Optional[Sequence[int]] = None,
    ) -> None:
        features = np.asarray(features, dtype=float)
        labels = np.asarray(labels)

        if features.ndim != 2:
            raise InvalidDataset("Features must be a 2-D matrix (rows = samples)")
        if features.shape[1] < 1:
            raise InvalidDataset("Samples need at least one feature")
        if labels.ndim != 1 or labels.shape[0] != features.shape[0]:
            raise InvalidDataset(
                "{n_rows} feature rows but {n_labels} labels".format(
                    n_rows=features.shape[0], n_labels=labels.size
                )
            )
        if not np.all(np.isfinite(features)):
            raise InvalidDataset("Features contain non-finite values")
        if labels.size > 0 and not np.all(np.equal(np.mod(labels, 1), 0)):
            raise InvalidDataset("Labels must be integer class ids")
        labels = labels.astype(np.int64)

        if n_classes is None:
            if labels.size == 0:
                raise InvalidDataset("n_classes must be given for an empty dataset")
            n_classes = int(labels.max()) + 1
        if labels.size > 0 and (labels.min() < 0 or labels.max() >= n_classes):
            raise InvalidDataset(
                "Labels must be in [0, {y})".format(y=n_classes)
            )

        if sample_ids is None:
            sample_ids = np.arange(features.shape[0])
        sample_ids = np.asarray(sample_ids, dtype=np.int64)
        if sample_ids.shape != labels.shape:
            raise InvalidDataset("One sample id per row is required")
        if np.unique(sample_ids).size != sample_ids.size:
            raise InvalidDataset("Sample ids must be unique")

        #: Feature matrix, shape (n_samples, n_features).
        self.features = features  # type: np.ndarray
        #: Class labels, shape (n_samples,).
        self.labels = labels  # type: np.ndarray
        #: Number of classes (Y).
        self.n_classes = int(n_classes)  # type: int
        #: Stable ids of the samples, shape (n_samples,).
        self.sample_ids = sample_ids  # type: np.ndarray

        self._position_by_id = None  # type: Optional[Dict[int, int]]

    def __len__(self) -> int:
        return self.features.shape[0]

    def __str__(self) -> str:
        return "LabeledDataset({n} samples, {d} features, {y} classes)".format(
            n=len(self), d=self.n_features, y=self.n_classes
        )

    @property
    def n_features(self) -> int:
        """Number of columns (d) of the feature matrix."""
        return self.features.shape[1]

    def subset(self, positions: Sequence[int]) -> "LabeledDataset":
        """Return a new dataset made of the rows at `positions` (sample ids are kept)."""
        positions = np.asarray(positions, dtype=np.int64)
        return LabeledDataset(
            self.features[positions],
            self.labels[positions],
            n_classes=self.n_classes,
            sample_ids=self.sample_ids[positions],
        )

    def positions_of(self, sample_ids: Sequence[int]) -> np.ndarray:
        """Return the row positions of the given sample ids.

        :raises: :class:`memaudit.exceptions.InvalidDataset` if an id is unknown.
        """
        if self._position_by_id is None:
            self._position_by_id = {int(s): i for i, s in enumerate(self.sample_ids)}
        try:
            return np.array([self._position_by_id[int(s)] for s in sample_ids], dtype=np.int64)
        except KeyError as exc:
            raise InvalidDataset("Unknown sample id: {id}".format(id=exc.args[0]))

    def select_ids(self, sample_ids: Sequence[int]) -> "LabeledDataset":
        """Return a new dataset with the rows whose id is in `sample_ids` (in that order)."""
        return self.subset(self.positions_of(sample_ids))


@dataclass(frozen=True)
class LayerSpec:
    """Architecture of a perceptron: every layer width (input d first, Y last) and the hidden activation."""

    layer_dims: Tuple[int, ...]
    activation: str = "relu"

    def __post_init__(self) -> None:
        object.__setattr__(self, "layer_dims", tuple(int(d) for d in self.layer_dims))
        if len(self.layer_dims) < 2:
            raise InvalidConfig("An architecture needs at least an input and an output layer")
        if any(d < 1 for d in self.layer_dims):
            raise InvalidConfig("Layer widths must be positive: {dims}".format(dims=self.layer_dims))
        if self.activation not in ACTIVATIONS:
            raise InvalidConfig(
                "Unknown activation '{a}' (expected one of {choices})".format(
                    a=self.activation, choices=", ".join(ACTIVATIONS)
                )
            )

    @classmethod
    def from_hidden(
        cls, n_inputs: int, hidden: Sequence[int], n_outputs: int, activation: str = "relu"
    ) -> "LayerSpec":
        return cls(tuple([n_inputs] + list(hidden) + [n_outputs]), activation)

    @property
    def n_inputs(self) -> int:
        return self.layer_dims[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_dims[-1]

    @property
    def hidden(self) -> Tuple[int, ...]:
        return self.layer_dims[1:-1]


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer settings for :func:`train_classifier` (plain mini-batch SGD, no momentum)."""

    learning_rate: float = 0.1
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    l2_penalty: float = 0.0

    def __post_init__(self) -> None:
        if not (np.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise InvalidConfig("learning_rate must be > 0")
        if self.epochs < 0:
            raise InvalidConfig("epochs must be >= 0")
        if self.batch_size < 1:
            raise InvalidConfig("batch_size must be >= 1")
        if self.seed < 0:
            raise InvalidConfig("seed must be an unsigned integer")
        if not (np.isfinite(self.l2_penalty) and self.l2_penalty >= 0):
            raise InvalidConfig("l2_penalty must be >= 0")


class MlpModel(object):
    """A trained (or freshly initialized) multi-layer perceptron with a softmax output.

    Parameters are stored read-only: a model never changes after construction, so concurrent
    inference is safe.

    :param layer_dims: width of every layer, input dimension first and number of classes last.
    :param weights: one (fan_in, fan_out) matrix per layer.
    :param biases: one (fan_out,) vector per layer.
    :param activation: hidden layer activation, `relu` or `tanh`.

    :raises: :class:`memaudit.exceptions.InvalidConfig` if the shapes are inconsistent or a parameter is non-finite.
    """

    def __init__(
        self,
        layer_dims: Sequence[int],
        weights: Sequence[np.ndarray],
        biases: Sequence[np.ndarray],
        activation: str = "relu",
    ) -> None:
        #: The architecture (layer widths and activation).
        self.arch = LayerSpec(tuple(layer_dims), activation)  # type: LayerSpec

        n_layers = len(self.arch.layer_dims) - 1
        if len(weights) != n_layers or len(biases) != n_layers:
            raise InvalidConfig(
                "Expected {n} weight matrices and bias vectors".format(n=n_layers)
            )

        self.weights = []  # type: List[np.ndarray]
        self.biases = []  # type: List[np.ndarray]
        for i, (w, b) in enumerate(zip(weights, biases)):
            w = np.array(w, dtype=float)
            b = np.array(b, dtype=float)
            fan_in, fan_out = self.arch.layer_dims[i], self.arch.layer_dims[i + 1]
            if w.shape != (fan_in, fan_out) or b.shape != (fan_out,):
                raise InvalidConfig(
                    "Layer {i}: expected weights {ws} and biases {bs}, got {wg} and {bg}".format(
                        i=i, ws=(fan_in, fan_out), bs=(fan_out,), wg=w.shape, bg=b.shape
                    )
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise InvalidConfig("Layer {i} has non-finite parameters".format(i=i))
            w.setflags(write=False)
            b.setflags(write=False)
            self.weights.append(w)
            self.biases.append(b)

    def __repr__(self) -> str:
        return "MlpModel(layer_dims={dims}, activation={act!r})".format(
            dims=list(self.layer_dims), act=self.activation
        )

    def __eq__(self, other: object) -> bool:
        """Bitwise equality of architecture and parameters."""
        if not isinstance(other, MlpModel):
            return NotImplemented
        return (
            self.arch == other.arch
            and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
            and all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases))
        )

    def __ne__(self, other: object) -> bool:
        return not self.__eq__(other)

    __hash__ = None  # type: ignore

    @property
    def layer_dims(self) -> Tuple[int, ...]:
        return self.arch.layer_dims

    @property
    def activation(self) -> str:
        return self.arch.activation

    @property
    def n_inputs(self) -> int:
        return self.arch.n_inputs

    @property
    def n_classes(self) -> int:
        return self.arch.n_outputs

    def logits(self, features: np.ndarray) -> np.ndarray:
        """Return the pre-softmax outputs for a (n, d) feature matrix."""
        return _forward(self.weights, self.biases, self.activation, _as_batch(self, features))[0][-1]

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        """Return the (n, Y) softmax outputs for a (n, d) feature matrix."""
        return softmax(self.logits(features))


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, stabilized by subtracting the row maximum."""
    logits = np.asarray(logits, dtype=float)
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    exps = np.exp(shifted)
    return exps / np.sum(exps, axis=-1, keepdims=True)


def is_score_vector(probs: np.ndarray, tolerance: float = SCORE_VECTOR_TOLERANCE) -> bool:
    """Return `True` if every row of `probs` is a valid score vector (entries in [0, 1], sum 1)."""
    probs = np.asarray(probs, dtype=float)
    if probs.size == 0 or not np.all(np.isfinite(probs)):
        return False
    if np.any(probs < 0) or np.any(probs > 1):
        return False
    return bool(np.all(np.abs(np.sum(probs, axis=-1) - 1.0) <= tolerance))


def init_model(arch: LayerSpec, seed: int = 0) -> MlpModel:
    """Return a freshly initialized model.

    Weights and biases are drawn uniformly in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
    """
    weights, biases = _init_parameters(arch, np.random.default_rng(seed))
    return MlpModel(arch.layer_dims, weights, biases, arch.activation)


def train_classifier(data: LabeledDataset, arch: LayerSpec, cfg: TrainConfig) -> MlpModel:
    """Train a classifier with mini-batch SGD on the (L2 penalized) cross-entropy loss.

    With ``cfg.epochs == 0`` the seeded initialization (:func:`init_model`) is returned.

    :raises: :class:`memaudit.exceptions.InvalidDataset` if `data` is empty or doesn't match `arch`.
    :raises: :class:`memaudit.exceptions.TrainingDiverged` if the loss becomes non-finite.
    """
    if len(data) == 0:
        raise InvalidDataset("Cannot train on an empty dataset")
    if arch.n_inputs != data.n_features:
        raise InvalidDataset(
            "Architecture expects {a} features, dataset has {d}".format(
                a=arch.n_inputs, d=data.n_features
            )
        )
    if arch.n_outputs != data.n_classes:
        raise InvalidDataset(
            "Architecture has {a} outputs, dataset has {y} classes".format(
                a=arch.n_outputs, y=data.n_classes
            )
        )

    rng = np.random.default_rng(cfg.seed)
    weights, biases = _init_parameters(arch, rng)

    n = len(data)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            loss, grad_w, grad_b = _loss_and_gradients(
                weights, biases, arch.activation, data.features[batch], data.labels[batch], cfg.l2_penalty
            )
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch, loss)
            for w, b, gw, gb in zip(weights, biases, grad_w, grad_b):
                w -= cfg.learning_rate * gw
                b -= cfg.learning_rate * gb
            epoch_loss += loss * batch.size

        if logger.isEnabledFor(logging.DEBUG) and (epoch % 50 == 0 or epoch == cfg.epochs - 1):
            logger.debug("epoch %d/%d: loss %.6f", epoch + 1, cfg.epochs, epoch_loss / n)

    return MlpModel(arch.layer_dims, weights, biases, arch.activation)


def predict_softmax(model: MlpModel, x: Sequence[float]) -> ScoreVector:
    """Return the softmax probability vector of `model` for the single input `x`.

    :raises: :class:`memaudit.exceptions.InvalidDataset` on dimension mismatch.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InvalidDataset("A single feature vector is expected")
    return model.predict_proba(x.reshape(1, -1))[0]


def predict_label(model: MlpModel, x: Sequence[float]) -> int:
    """Return the most probable class of `x` (ties go to the lowest class id)."""
    return int(np.argmax(predict_softmax(model, x)))


def predict_labels(model: MlpModel, features: np.ndarray) -> np.ndarray:
    return np.argmax(model.predict_proba(features), axis=1)


def accuracy(model: MlpModel, data: LabeledDataset) -> float:
    """Fraction of the samples of `data` whose label is predicted correctly."""
    if len(data) == 0:
        raise InvalidDataset("Cannot compute the accuracy of an empty dataset")
    return float(np.mean(predict_labels(model, data.features) == data.labels))


def cross_entropy_loss(
    model: MlpModel, features: np.ndarray, labels: Sequence[int], l2_penalty: float = 0.0
) -> float:
    """Mean cross-entropy of `model` on the batch, plus ``l2_penalty / 2 * sum(W ** 2)``."""
    loss, _, _ = loss_and_gradients(model, features, labels, l2_penalty)
    return loss


def loss_and_gradients(
    model: MlpModel, features: np.ndarray, labels: Sequence[int], l2_penalty: float = 0.0
) -> Tuple[float, List[np.ndarray], List[np.ndarray]]:
    """Return the loss of :func:`cross_entropy_loss` and its analytic gradients.

    Gradients are returned as two lists (weights, biases) shaped like the model parameters.
    """
    labels = np.asarray(labels, dtype=np.int64)
    return _loss_and_gradients(
        model.weights, model.biases, model.activation, _as_batch(model, features), labels, l2_penalty
    )


def save_model(model: MlpModel, path: str) -> None:
    """Save `model` to `path` (NumPy .npz archive, see doc/formats.rst). The round trip is bit-exact."""
    arrays = {
        "format_version": np.array(MODEL_FORMAT_VERSION),
        "activation": np.array(model.activation),
        "layer_dims": np.array(model.layer_dims, dtype=np.int64),
    }
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        arrays["W{i}".format(i=i)] = w
        arrays["b{i}".format(i=i)] = b

    with open(path, "wb") as f:
        np.savez(f, **arrays)


def load_model(path: str) -> MlpModel:
    """Load a model saved by :func:`save_model`.

    :raises: :class:`memaudit.exceptions.InvalidConfig` for unknown format versions or inconsistent content.
    """
    with np.load(path, allow_pickle=False) as archive:
        version = int(archive["format_version"])
        if version != MODEL_FORMAT_VERSION:
            raise InvalidConfig("Unsupported model format version: {v}".format(v=version))
        layer_dims = [int(d) for d in archive["layer_dims"]]
        activation = str(archive["activation"])
        n_layers = len(layer_dims) - 1
        weights = [archive["W{i}".format(i=i)] for i in range(n_layers)]
        biases = [archive["b{i}".format(i=i)] for i in range(n_layers)]

    return MlpModel(layer_dims, weights, biases, activation)


def _as_batch(model: MlpModel, features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=float)
    if features.ndim == 1:
        features = features.reshape(1, -1)
    if features.ndim != 2 or features.shape[1] != model.n_inputs:
        raise InvalidDataset(
            "Model expects {d} features, got input of shape {shape}".format(
                d=model.n_inputs, shape=features.shape
            )
        )
    return features


def _init_parameters(arch: LayerSpec, rng: np.random.Generator) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    weights = []
    biases = []
    for fan_in, fan_out in zip(arch.layer_dims[:-1], arch.layer_dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return weights, biases


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _activation_derivative(z: np.ndarray, a: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return (z > 0).astype(float)
    return 1.0 - a ** 2


def _forward(
    weights: Sequence[np.ndarray], biases: Sequence[np.ndarray], activation: str, features: np.ndarray
) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    # Returns (outputs, pre-activations) for every layer; outputs[-1] are the logits.
    outputs = [features]
    pre_activations = []
    last = len(weights) - 1
    for i, (w, b) in enumerate(zip(weights, biases)):
        z = outputs[-1] @ w + b
        pre_activations.append(z)
        outputs.append(z if i == last else _activate(z, activation))
    return outputs, pre_activations


def _loss_and_gradients(
    weights: Sequence[np.ndarray],
    biases: Sequence[np.ndarray],
    activation: str,
    features: np.ndarray,
    labels: np.ndarray,
    l2_penalty: float,
) -> Tuple[float, List[np.ndarray], List[np.ndarray]]:
    n = features.shape[0]
    outputs, pre_activations = _forward(weights, biases, activation, features)
    logits = outputs[-1]

    shifted = logits - np.max(logits, axis=1, keepdims=True)
    log_norm = np.log(np.sum(np.exp(shifted), axis=1))
    log_probs = shifted - log_norm[:, None]
    loss = -float(np.mean(log_probs[np.arange(n), labels]))
    if l2_penalty > 0:
        loss += 0.5 * l2_penalty * float(sum(np.sum(w ** 2) for w in weights))

    delta = np.exp(log_probs)
    delta[np.arange(n), labels] -= 1.0
    delta /= n

    grad_w = [np.empty(0)] * len(weights)  # type: List[np.ndarray]
    grad_b = [np.empty(0)] * len(weights)  # type: List[np.ndarray]
    for i in range(len(weights) - 1, -1, -1):
        grad_w[i] = outputs[i].T @ delta
        grad_b[i] = np.sum(delta, axis=0)
        if l2_penalty > 0:
            grad_w[i] = grad_w[i] + l2_penalty * weights[i]
        if i > 0:
            delta = (delta @ weights[i].T) * _activation_derivative(
                pre_activations[i - 1], outputs[i], activation
            )

    return loss, grad_w, grad_b
