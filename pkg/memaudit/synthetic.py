"""Synthetic data: score mixtures for the guarantee experiments, and small classification tasks.

- :func:`generate_synthetic` draws calibration and test *scores* (non-members standard normal, members shifted
  down), the desk-scale stand-in for scoring a real test set.
- :func:`make_gaussian_task` and :func:`make_xor` draw labeled *datasets*.
- :func:`simulate_victim` trains a victim on a Gaussian task and prepares auxiliary and test data for
  :class:`memaudit.attack.MembershipAttack`.
"""

import dataclasses
import functools
import logging
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np
from scipy.stats import norm

from memaudit.config import TaskConfig
from memaudit.exceptions import InvalidConfig
from memaudit.files import ScoreFile
from memaudit.helpers import (
    SEED_STREAM_TASK,
    SEED_STREAM_TRIAL,
    SEED_STREAM_VICTIM,
    derive_seed,
    derived_rng,
    round_half_up,
)
from memaudit.nn import LabeledDataset, MlpModel, accuracy, train_classifier
from memaudit.rows import ScoreRecord
from memaudit.victim import ModelVictim

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of a synthetic score mixture."""

    n_calibration: int = 1000
    n_test: int = 1000
    #: Proportion of non-members among the test scores.
    pi0: float = 0.5
    #: Members' scores are normal with mean ``-member_shift`` (non-members: mean 0).
    member_shift: float = 2.0
    n_trials: int = 1000
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.n_calibration, self.n_test, self.n_trials) < 1:
            raise InvalidConfig("n_calibration, n_test and n_trials must be >= 1")
        if not (0.0 <= self.pi0 <= 1.0):
            raise InvalidConfig("pi0 must be in [0, 1], got {p}".format(p=self.pi0))
        if not np.isfinite(self.member_shift):
            raise InvalidConfig("member_shift must be finite")
        if self.seed < 0:
            raise InvalidConfig("seed must be an unsigned integer")

    @property
    def n_non_members(self) -> int:
        """``round(pi0 * n_test)``, halves rounded up."""
        return round_half_up(self.pi0 * self.n_test)

    def replace(self, **changes: Any) -> "SyntheticSpec":
        return dataclasses.replace(self, **changes)


class SyntheticData(object):
    """One draw of :func:`generate_synthetic`."""

    def __init__(self, calibration: np.ndarray, test: np.ndarray, truth: np.ndarray) -> None:
        #: Non-member calibration scores.
        self.calibration = calibration  # type: np.ndarray
        #: Test scores, members and non-members shuffled.
        self.test = test  # type: np.ndarray
        #: `True` where the test score belongs to a member.
        self.truth = truth  # type: np.ndarray

    def to_score_file(self) -> ScoreFile:
        """The draw as a score file (ids `c<i>` for calibration, `t<i>` for test, truth included)."""
        records = [
            ScoreRecord("c{i}".format(i=i), float(s), "calibration", "non_member")
            for i, s in enumerate(self.calibration)
        ]
        records.extend(
            ScoreRecord("t{i}".format(i=i), float(s), "test", "member" if m else "non_member")
            for i, (s, m) in enumerate(zip(self.test, self.truth))
        )
        return ScoreFile(records, "higher_is_non_member")


def generate_synthetic(spec: SyntheticSpec, trial: int = 0) -> SyntheticData:
    """Draw the calibration and test scores of trial number `trial` (each trial has its own random stream)."""
    rng = derived_rng(spec.seed, SEED_STREAM_TRIAL, trial)
    calibration = rng.standard_normal(spec.n_calibration)

    n_non_members = spec.n_non_members
    n_members = spec.n_test - n_non_members
    test = np.concatenate(
        [rng.standard_normal(n_non_members), rng.normal(-spec.member_shift, 1.0, size=n_members)]
    )
    truth = np.concatenate([np.zeros(n_non_members, dtype=bool), np.ones(n_members, dtype=bool)])
    order = rng.permutation(spec.n_test)
    return SyntheticData(calibration, test[order], truth[order])


def gaussian_class_centers(dim: int, n_classes: int, separation: float) -> np.ndarray:
    """Class means of :func:`make_gaussian_task`: coordinate `j` of class `c` is ``+separation`` if
    ``j % n_classes == c``, ``-separation`` otherwise."""
    j = np.arange(dim)
    return np.array([np.where(j % n_classes == c, separation, -separation) for c in range(n_classes)])


def make_gaussian_task(
    n: int,
    dim: int = 2,
    n_classes: int = 2,
    separation: float = 1.0,
    rng: Optional[np.random.Generator] = None,
    first_id: int = 0,
) -> LabeledDataset:
    """Draw `n` samples of a Gaussian mixture: balanced labels, unit variance around :func:`gaussian_class_centers`.

    Sample ids are ``first_id, first_id + 1, ...``.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    centers = gaussian_class_centers(dim, n_classes, separation)
    labels = rng.permutation(np.arange(n) % n_classes)
    features = centers[labels] + rng.standard_normal((n, dim))
    return LabeledDataset(features, labels, n_classes=n_classes, sample_ids=np.arange(first_id, first_id + n))


def bayes_accuracy(dim: int, separation: float) -> float:
    """Accuracy of the optimal classifier on the two-class Gaussian task."""
    distance = float(np.linalg.norm(np.diff(gaussian_class_centers(dim, 2, separation), axis=0)))
    return float(norm.cdf(distance / 2.0))


def make_xor() -> LabeledDataset:
    return LabeledDataset([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]], [0, 1, 1, 0])


class VictimSimulation(object):
    """A trained victim, the attacker's auxiliary data and a labeled test set."""

    def __init__(
        self,
        task: TaskConfig,
        model: MlpModel,
        private: LabeledDataset,
        auxiliary: LabeledDataset,
        test: LabeledDataset,
        truth: np.ndarray,
    ) -> None:
        self.task = task  # type: TaskConfig
        #: The victim model (only reachable through :attr:`victim` by the attack).
        self.model = model  # type: MlpModel
        #: The victim's training set.
        self.private = private  # type: LabeledDataset
        #: Samples from the same population, disjoint from :attr:`private`.
        self.auxiliary = auxiliary  # type: LabeledDataset
        #: Test samples: members drawn from :attr:`private`, plus fresh non-members.
        self.test = test  # type: LabeledDataset
        #: `True` for the members of :attr:`test`.
        self.truth = truth  # type: np.ndarray

    def victim(self, disclose_architecture: bool = True) -> ModelVictim:
        return ModelVictim(self.model, disclose_architecture)

    @property
    def train_accuracy(self) -> float:
        return accuracy(self.model, self.private)


def simulate_victim(task: TaskConfig) -> VictimSimulation:
    """Draw the task data and train the victim on the private part."""
    rng = derived_rng(task.seed, SEED_STREAM_TASK)
    draw = functools.partial(
        make_gaussian_task, dim=task.dim, n_classes=task.n_classes, separation=task.separation, rng=rng
    )
    private = draw(task.n_private, first_id=0)
    auxiliary = draw(task.n_auxiliary, first_id=task.n_private)
    fresh = draw(task.n_non_members, first_id=task.n_private + task.n_auxiliary)

    arch = task.victim_arch
    model = train_classifier(private, arch, task.victim.train_config(derive_seed(task.seed, SEED_STREAM_VICTIM)))

    members = private.subset(np.sort(rng.choice(len(private), size=task.n_members, replace=False)))
    order = rng.permutation(task.n_test)
    test = LabeledDataset(
        np.vstack([members.features, fresh.features])[order],
        np.concatenate([members.labels, fresh.labels])[order],
        n_classes=task.n_classes,
        sample_ids=np.concatenate([members.sample_ids, fresh.sample_ids])[order],
    )
    truth = np.concatenate([np.ones(len(members), dtype=bool), np.zeros(len(fresh), dtype=bool)])[order]

    simulation = VictimSimulation(task, model, private, auxiliary, test, truth)
    logger.info("Victim trained on %d samples, train accuracy %.3f", len(private), simulation.train_accuracy)
    return simulation
