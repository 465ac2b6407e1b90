"""Membership inference attack with false discovery rate control.

The attacker holds an auxiliary dataset disjoint from the victim's training data. It:

1. splits it in three parts (:func:`split_auxiliary`): one to train surrogate models, one to build non-member
   training rows for a membership classifier, one for calibration;
2. trains K surrogates on random subsets (:func:`sample_subsets`, :func:`train_surrogates`);
3. trains a binary membership classifier on the surrogates' outputs (:func:`build_membership_dataset`,
   :func:`train_membership_classifier`): their own training samples are members (label 0), the other samples
   non-members (label 1);
4. scores the calibration part through the surrogates and the classifier (:func:`build_calibration_scores`);
5. queries the victim on the test samples, turns the scores into conformal p-values and takes FDR-controlled
   membership decisions (:func:`run_attack`).

:class:`MembershipAttack` chains all of it::

    from memaudit.attack import MembershipAttack
    from memaudit.config import AttackConfig

    attack = MembershipAttack(AttackConfig(alpha=0.1), victim).fit(auxiliary_data)
    result = attack.run(test_features, truth=test_truth)
    print(result.decisions.rejected_indices)
"""

import logging
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from memaudit.config import AttackConfig
from memaudit.conformal import CalibrationScores, batch_pvalues, build_calibration, conformity_scores
from memaudit.exceptions import EmptySplit, InvalidConfig, InvalidDataset, UndefinedMetric
from memaudit.fdr import AdjustedPValues, DecisionSet, FdrReport, PValueVector, bh_adjust, compute_fdr, decide
from memaudit.helpers import (
    SEED_STREAM_BINARY,
    SEED_STREAM_SPLIT,
    SEED_STREAM_SUBSETS,
    SEED_STREAM_SURROGATE,
    derive_seed,
    derived_rng,
    round_half_up,
)
from memaudit.metric_attacks import score_function
from memaudit.metrics import compute_metrics, decision_accuracy
from memaudit.nn import LabeledDataset, LayerSpec, MlpModel, train_classifier
from memaudit.version import __version__
from memaudit.victim import VictimOracle

logger = logging.getLogger(__name__)

MEMBER_LABEL = 0
NON_MEMBER_LABEL = 1

#: Maps (score vectors, class labels or None) to conformity scores, higher = more non-member-like.
OutputScorer = Callable[[np.ndarray, Optional[np.ndarray]], np.ndarray]


class AuxSplit(object):
    """The three disjoint parts of the auxiliary dataset."""

    def __init__(self, d_au1: LabeledDataset, d_au2_tr: LabeledDataset, d_au2_ca: LabeledDataset) -> None:
        #: Surrogate training pool.
        self.d_au1 = d_au1  # type: LabeledDataset
        #: Non-member rows of the membership dataset.
        self.d_au2_tr = d_au2_tr  # type: LabeledDataset
        #: Calibration samples.
        self.d_au2_ca = d_au2_ca  # type: LabeledDataset

    def __repr__(self) -> str:
        return "AuxSplit(au1={au1}, au2_tr={au2_tr}, au2_ca={au2_ca})".format(**self.sizes)

    @property
    def sizes(self) -> Dict[str, int]:
        return {"au1": len(self.d_au1), "au2_tr": len(self.d_au2_tr), "au2_ca": len(self.d_au2_ca)}

    def subset_source(self, name: str) -> LabeledDataset:
        """The dataset surrogate subsets are drawn from: `au1`, or `au2` (training and calibration parts together)."""
        if name == "au1":
            return self.d_au1
        return concatenate([self.d_au2_tr, self.d_au2_ca])


class SurrogateEnsemble(object):
    """K surrogate models and the ids of the samples each was trained on."""

    def __init__(self, models: Sequence[MlpModel], subset_ids: Sequence[Sequence[int]]) -> None:
        if len(models) < 1:
            raise InvalidConfig("A surrogate ensemble needs at least one model")
        if len(models) != len(subset_ids):
            raise InvalidConfig("One training subset per surrogate model is required")
        if len({(m.n_inputs, m.n_classes) for m in models}) != 1:
            raise InvalidConfig("All surrogates must have the same input and output dimensions")

        #: The trained surrogates.
        self.models = list(models)  # type: List[MlpModel]
        #: For each surrogate, the sorted sample ids of its training subset.
        self.subset_ids = [np.asarray(ids, dtype=np.int64) for ids in subset_ids]  # type: List[np.ndarray]

    def __len__(self) -> int:
        return len(self.models)

    def __repr__(self) -> str:
        return "SurrogateEnsemble(K={k}, arch={a})".format(k=len(self), a=self.models[0].arch)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SurrogateEnsemble):
            return NotImplemented
        return self.models == other.models and all(
            np.array_equal(a, b) for a, b in zip(self.subset_ids, other.subset_ids)
        )

    __hash__ = None  # type: ignore

    def outside_subset(self, k: int, data: LabeledDataset) -> LabeledDataset:
        """Return the samples of `data` that surrogate `k` was not trained on."""
        keep = ~np.isin(data.sample_ids, self.subset_ids[k])
        return data.subset(np.flatnonzero(keep))


class MembershipDataset(object):
    """Score vectors labeled member (0) or non-member (1), used to train the membership classifier."""

    def __init__(self, inputs: np.ndarray, labels: Sequence[int]) -> None:
        inputs = np.asarray(inputs, dtype=float)
        labels = np.asarray(labels, dtype=np.int64)
        if inputs.ndim != 2 or inputs.shape[0] != labels.size:
            raise InvalidDataset("One score vector per membership label is required")
        if not np.all(np.isin(labels, (MEMBER_LABEL, NON_MEMBER_LABEL))):
            raise InvalidDataset("Membership labels must be 0 (member) or 1 (non-member)")

        #: Score vectors, shape (n_rows, Y).
        self.inputs = inputs  # type: np.ndarray
        #: 0 = member, 1 = non-member.
        self.labels = labels  # type: np.ndarray

    def __len__(self) -> int:
        return self.labels.size

    @property
    def n_members(self) -> int:
        return int(np.count_nonzero(self.labels == MEMBER_LABEL))

    @property
    def n_non_members(self) -> int:
        return int(np.count_nonzero(self.labels == NON_MEMBER_LABEL))

    def as_labeled_dataset(self) -> LabeledDataset:
        return LabeledDataset(self.inputs, self.labels, n_classes=2)


class AttackResult(object):
    """Outcome of :func:`run_attack` on a test set."""

    def __init__(
        self,
        outputs: np.ndarray,
        raw_scores: np.ndarray,
        scores: np.ndarray,
        pvalues: PValueVector,
        adjusted: AdjustedPValues,
        decisions: DecisionSet,
        truth: Optional[np.ndarray] = None,
    ) -> None:
        #: Victim score vectors, one row per test sample.
        self.outputs = outputs  # type: np.ndarray
        #: Membership classifier non-member probabilities (or metric scores), before conformal ranking.
        self.raw_scores = raw_scores  # type: np.ndarray
        #: Conformity scores.
        self.scores = scores  # type: np.ndarray
        self.pvalues = pvalues  # type: PValueVector
        self.adjusted = adjusted  # type: AdjustedPValues
        self.decisions = decisions  # type: DecisionSet
        #: Ground truth (`True` = member), if supplied.
        self.truth = truth  # type: Optional[np.ndarray]
        #: Realized FDR, only when the ground truth is known.
        self.report = compute_fdr(decisions, truth) if truth is not None else None  # type: Optional[FdrReport]

    def __len__(self) -> int:
        return len(self.decisions)

    def evaluate(self) -> Dict[str, float]:
        """Compare the raw scores, the p-values and the decisions against the ground truth.

        :raises: :class:`memaudit.exceptions.UndefinedMetric` without ground truth, or if it has a single class.
        """
        if self.truth is None:
            raise UndefinedMetric("Evaluation needs the ground truth")
        on_scores = compute_metrics(self.raw_scores, self.truth)
        on_pvalues = compute_metrics(self.pvalues.values, self.truth)
        return {
            "auroc_raw_scores": on_scores.auroc,
            "accuracy_raw_scores": on_scores.accuracy,
            "auroc_pvalues": on_pvalues.auroc,
            "accuracy_pvalues": on_pvalues.accuracy,
            "accuracy_decisions": decision_accuracy(self.decisions.member, self.truth),
            "tpr_at_0.01_fpr": on_pvalues.tpr_at_fpr[0.01],
        }


def concatenate(datasets: Sequence[LabeledDataset]) -> LabeledDataset:
    """Stack datasets with the same features and classes (sample ids must stay unique)."""
    return LabeledDataset(
        np.vstack([d.features for d in datasets]),
        np.concatenate([d.labels for d in datasets]),
        n_classes=datasets[0].n_classes,
        sample_ids=np.concatenate([d.sample_ids for d in datasets]),
    )


def split_auxiliary(d_au: LabeledDataset, cfg: AttackConfig) -> AuxSplit:
    """Randomly split the auxiliary dataset.

    ``round(split_au1_fraction * n)`` samples go to the surrogate pool; of the rest, ``round(split_ca_fraction * m)``
    go to calibration and the remainder to the membership dataset (rounding halves up). With 1000 samples and
    the default fractions: 300 / 420 / 280.

    :raises: :class:`memaudit.exceptions.EmptySplit` if a part would be empty.
    """
    n = len(d_au)
    n_au1 = round_half_up(cfg.split_au1_fraction * n)
    n_au2 = n - n_au1
    n_ca = round_half_up(cfg.split_ca_fraction * n_au2)
    n_tr = n_au2 - n_ca
    if min(n_au1, n_tr, n_ca) < 1:
        raise EmptySplit(
            "Cannot split {n} auxiliary samples into non-empty parts (sizes {a}/{t}/{c})".format(
                n=n, a=n_au1, t=n_tr, c=n_ca
            )
        )

    order = derived_rng(cfg.seed, SEED_STREAM_SPLIT).permutation(n)
    parts = np.split(order, [n_au1, n_au1 + n_tr])
    d_au1, d_au2_tr, d_au2_ca = [d_au.subset(np.sort(p)) for p in parts]
    return AuxSplit(d_au1, d_au2_tr, d_au2_ca)


def subset_size(n: int, eta: float) -> int:
    """``floor(eta * n)``, tolerant to the rounding error of fractions such as 3/7."""
    return int(np.floor(eta * n + 1e-9))


def sample_subsets(d_au1: LabeledDataset, n_surrogates: int, eta: float, seed: int) -> List[LabeledDataset]:
    """Draw `n_surrogates` subsets of ``floor(eta * len(d_au1))`` samples each, without replacement within a subset.

    Each subset uses its own derived random stream; rows are kept in their original order.

    :raises: :class:`memaudit.exceptions.EmptySplit` if the subsets would be empty.
    """
    n = len(d_au1)
    size = subset_size(n, eta)
    if size < 1:
        raise EmptySplit("eta={eta} leaves no sample out of {n} to train surrogates".format(eta=eta, n=n))

    subsets = []
    for k in range(n_surrogates):
        positions = derived_rng(seed, SEED_STREAM_SUBSETS, k).choice(n, size=size, replace=False)
        subsets.append(d_au1.subset(np.sort(positions)))
    return subsets


def train_surrogates(
    subsets: Sequence[LabeledDataset], cfg: AttackConfig, arch: Optional[LayerSpec] = None
) -> SurrogateEnsemble:
    """Train one surrogate per subset.

    :param arch: surrogate architecture (the victim's, in the grey-box setting). Defaults to `cfg.surrogate`
        widened to the task dimensions.
    :raises: :class:`memaudit.exceptions.InvalidConfig` if the subsets hold fewer samples than one training batch.
    """
    if not subsets or any(len(s) == 0 for s in subsets):
        raise EmptySplit("Surrogates need non-empty training subsets")
    total = sum(len(s) for s in subsets)
    if total < cfg.surrogate.batch_size:
        raise InvalidConfig(
            "The surrogate subsets hold {n} samples, less than a batch ({b})".format(
                n=total, b=cfg.surrogate.batch_size
            )
        )
    if arch is None:
        arch = cfg.surrogate.layer_spec(subsets[0].n_features, subsets[0].n_classes)

    models = []
    for k, subset in enumerate(subsets):
        train_cfg = cfg.surrogate.train_config(derive_seed(cfg.seed, SEED_STREAM_SURROGATE, k))
        logger.debug("Training surrogate %d/%d on %d samples", k + 1, len(subsets), len(subset))
        models.append(train_classifier(subset, arch, train_cfg))
    return SurrogateEnsemble(models, [s.sample_ids for s in subsets])


def build_membership_dataset(
    ensemble: SurrogateEnsemble, split: AuxSplit, subset_source: str = "au1"
) -> MembershipDataset:
    """Label the surrogates' outputs: on their own training samples as members, on `d_au2_tr` as non-members.

    With `subset_source="au2"`, a surrogate is never queried as non-member on a sample it was trained on, and
    the (then unused) `d_au1` part contributes non-member rows too.
    """
    source = split.subset_source(subset_source)
    inputs = []
    labels = []
    for k, model in enumerate(ensemble.models):
        own = source.select_ids(ensemble.subset_ids[k])
        inputs.append(model.predict_proba(own.features))
        labels.append(np.full(len(own), MEMBER_LABEL))

        for data in _non_member_parts(ensemble, k, split, subset_source):
            if len(data) > 0:
                inputs.append(model.predict_proba(data.features))
                labels.append(np.full(len(data), NON_MEMBER_LABEL))

    return MembershipDataset(np.vstack(inputs), np.concatenate(labels))


def train_membership_classifier(dme: MembershipDataset, cfg: AttackConfig) -> MlpModel:
    """Train the binary membership classifier (class 1 = non-member) on `dme`."""
    data = dme.as_labeled_dataset()
    arch = cfg.binary.layer_spec(data.n_features, 2)
    train_cfg = cfg.binary.train_config(derive_seed(cfg.seed, SEED_STREAM_BINARY))
    logger.debug("Training the membership classifier on %d rows", len(data))
    return train_classifier(data, arch, train_cfg)


def non_member_probability(binary: MlpModel, outputs: np.ndarray) -> np.ndarray:
    """The membership classifier's non-member probability for each score vector."""
    return binary.predict_proba(outputs)[:, NON_MEMBER_LABEL]


def classifier_scorer(binary: MlpModel, lam: float) -> OutputScorer:
    def scorer(outputs: np.ndarray, labels: Optional[np.ndarray] = None) -> np.ndarray:
        return conformity_scores(non_member_probability(binary, outputs), lam)

    return scorer


def make_scorer(cfg: AttackConfig, binary: Optional[MlpModel]) -> OutputScorer:
    """Return the scorer of `cfg.score_function` (the membership classifier, or a metric score)."""
    if cfg.score_function == "classifier":
        if binary is None:
            raise InvalidConfig("The classifier score function needs a trained membership classifier")
        return classifier_scorer(binary, cfg.lam)
    metric = score_function(cfg.score_function)
    return lambda outputs, labels=None: metric(outputs, labels)


def build_calibration_scores(
    ensemble: SurrogateEnsemble,
    binary: MlpModel,
    split: AuxSplit,
    lam: float,
    subset_source: str = "au1",
) -> CalibrationScores:
    """Score every calibration sample through every surrogate and the membership classifier.

    Gives ``K * len(split.d_au2_ca)`` frozen scores (fewer with `subset_source="au2"`, where a surrogate skips
    its own training samples).
    """
    return calibrate(ensemble, split, classifier_scorer(binary, lam), subset_source)


def calibrate(
    ensemble: SurrogateEnsemble, split: AuxSplit, scorer: OutputScorer, subset_source: str = "au1"
) -> CalibrationScores:
    """Like :func:`build_calibration_scores`, with any :data:`OutputScorer`."""
    scores = []
    for k, model in enumerate(ensemble.models):
        data = split.d_au2_ca
        if subset_source == "au2":
            data = ensemble.outside_subset(k, data)
        if len(data) > 0:
            scores.append(scorer(model.predict_proba(data.features), data.labels))
    if not scores:
        raise EmptySplit("No calibration sample left")
    return build_calibration(np.concatenate(scores))


def run_attack(
    victim: VictimOracle,
    test_features: np.ndarray,
    cfg: AttackConfig,
    calib: CalibrationScores,
    binary: Optional[MlpModel],
    truth: Optional[Sequence[bool]] = None,
    labels: Optional[Sequence[int]] = None,
) -> AttackResult:
    """Query the victim on the test samples and decide membership at level `cfg.alpha`.

    :param truth: ground truth (`True` = member); when given, the result carries an :class:`FdrReport`.
    :param labels: class labels of the test samples, needed by the label-aware metric score functions.
    :raises: :class:`memaudit.exceptions.InvalidDataset` for an empty test set.
    :raises: :class:`memaudit.exceptions.VictimQueryError`
    """
    test_features = np.asarray(test_features, dtype=float)
    if test_features.ndim == 1:
        test_features = test_features.reshape(1, -1)
    if test_features.shape[0] == 0:
        raise InvalidDataset("The test set is empty")
    if truth is not None:
        truth = np.asarray(truth, dtype=bool).ravel()
        if truth.size != test_features.shape[0]:
            raise InvalidDataset("One truth label per test sample is required")

    outputs = victim.query(test_features)
    label_array = np.asarray(labels, dtype=np.int64) if labels is not None else None
    if cfg.score_function == "classifier":
        if binary is None:
            raise InvalidConfig("The classifier score function needs a trained membership classifier")
        raw_scores = non_member_probability(binary, outputs)
        scores = conformity_scores(raw_scores, cfg.lam)
    else:
        raw_scores = make_scorer(cfg, None)(outputs, label_array)
        scores = raw_scores

    pvalues = PValueVector(batch_pvalues(calib, scores))
    adjusted = bh_adjust(pvalues)
    decisions = decide(adjusted, cfg.alpha)
    logger.info(
        "%d of %d test samples declared members at alpha=%s", decisions.n_rejected, len(decisions), cfg.alpha
    )
    return AttackResult(outputs, raw_scores, scores, pvalues, adjusted, decisions, truth)


def check_blackbox_surrogate(cfg: AttackConfig, victim_arch: LayerSpec) -> None:
    """Check that a black-box attack doesn't train surrogates of the victim's own architecture.

    :raises: :class:`memaudit.exceptions.InvalidConfig` if `cfg.blackbox` is set and `cfg.surrogate` builds the
        same layers and activation as `victim_arch`.
    """
    if not cfg.blackbox:
        return
    if cfg.surrogate.layer_spec(victim_arch.n_inputs, victim_arch.n_outputs) == victim_arch:
        raise InvalidConfig(
            "A black-box surrogate must not share the victim architecture {a} ({act})".format(
                a=victim_arch.layer_dims, act=victim_arch.activation
            )
        )


class MembershipAttack(object):
    """The whole attack against one victim.

    :param cfg: attack parameters.
    :param victim: query access to the victim.

    In the grey-box setting (`cfg.blackbox` is `False`) the surrogates copy the victim architecture when
    :attr:`memaudit.victim.VictimOracle.architecture` discloses it; otherwise they use `cfg.surrogate`.
    A black-box attack refuses a `cfg.surrogate` equal to a disclosed victim architecture.

    Call :meth:`fit` with the auxiliary data once, then :meth:`run` on any number of test sets.
    """

    def __init__(self, cfg: AttackConfig, victim: VictimOracle) -> None:
        #: The attack parameters.
        self.cfg = cfg  # type: AttackConfig
        #: Query access to the victim.
        self.victim = victim  # type: VictimOracle

        self.split = None  # type: Optional[AuxSplit]
        self.ensemble = None  # type: Optional[SurrogateEnsemble]
        self.membership_dataset = None  # type: Optional[MembershipDataset]
        self.binary = None  # type: Optional[MlpModel]
        self.calibration = None  # type: Optional[CalibrationScores]

    def __repr__(self) -> str:
        return "MembershipAttack(fitted={f}, blackbox={b})".format(f=self.fitted, b=self.cfg.blackbox)

    @property
    def fitted(self) -> bool:
        return self.calibration is not None

    def surrogate_architecture(self, n_inputs: int, n_classes: int) -> LayerSpec:
        arch = self.victim.architecture
        if self.cfg.blackbox:
            if arch is not None:
                check_blackbox_surrogate(self.cfg, arch)
            return self.cfg.surrogate.layer_spec(n_inputs, n_classes)
        if arch is None:
            return self.cfg.surrogate.layer_spec(n_inputs, n_classes)
        if arch.n_inputs != n_inputs or arch.n_outputs != n_classes:
            raise InvalidConfig(
                "The victim architecture {a} doesn't match the auxiliary data ({d} features, {y} classes)".format(
                    a=arch.layer_dims, d=n_inputs, y=n_classes
                )
            )
        return arch

    def fit(self, d_au: LabeledDataset) -> "MembershipAttack":
        """Split the auxiliary data, train surrogates and membership classifier, and freeze the calibration."""
        cfg = self.cfg
        self.split = split_auxiliary(d_au, cfg)
        logger.info("Auxiliary split: %s", self.split)

        source = self.split.subset_source(cfg.subset_source)
        subsets = sample_subsets(source, cfg.n_surrogates, cfg.eta, cfg.seed)
        arch = self.surrogate_architecture(d_au.n_features, d_au.n_classes)
        logger.info("Training %d surrogates (%s) on %d samples each", cfg.n_surrogates, arch, len(subsets[0]))
        self.ensemble = train_surrogates(subsets, cfg, arch)

        if cfg.score_function == "classifier":
            self.membership_dataset = build_membership_dataset(self.ensemble, self.split, cfg.subset_source)
            logger.info(
                "Membership dataset: %d member rows, %d non-member rows",
                self.membership_dataset.n_members,
                self.membership_dataset.n_non_members,
            )
            self.binary = train_membership_classifier(self.membership_dataset, cfg)

        self.calibration = calibrate(self.ensemble, self.split, make_scorer(cfg, self.binary), cfg.subset_source)
        logger.info("Calibration set frozen with %d scores", len(self.calibration))
        return self

    def run(
        self,
        test_features: np.ndarray,
        truth: Optional[Sequence[bool]] = None,
        labels: Optional[Sequence[int]] = None,
    ) -> AttackResult:
        """Shortcut for :func:`run_attack` with the fitted calibration and classifier.

        :raises: :class:`memaudit.exceptions.InvalidConfig` if :meth:`fit` wasn't called.
        """
        if self.calibration is None:
            raise InvalidConfig("The attack must be fitted first")
        return run_attack(self.victim, test_features, self.cfg, self.calibration, self.binary, truth, labels)

    def manifest(self) -> Dict[str, Any]:
        """Seed, split sizes and parameters of the run, for the record."""
        manifest = {
            "memaudit_version": __version__,
            "seed": self.cfg.seed,
            "n_surrogates": self.cfg.n_surrogates,
            "eta": self.cfg.eta,
            "lambda": self.cfg.lam,
            "alpha": self.cfg.alpha,
            "blackbox": self.cfg.blackbox,
            "subset_source": self.cfg.subset_source,
            "score_function": self.cfg.score_function,
        }  # type: Dict[str, Any]
        if self.split is not None:
            manifest["split_sizes"] = self.split.sizes
        if self.ensemble is not None:
            manifest["surrogate_layer_dims"] = list(self.ensemble.models[0].layer_dims)
            manifest["subset_size"] = int(self.ensemble.subset_ids[0].size)
        if self.calibration is not None:
            manifest["n_calibration"] = len(self.calibration)
        return manifest


def _non_member_parts(
    ensemble: SurrogateEnsemble, k: int, split: AuxSplit, subset_source: str
) -> List[LabeledDataset]:
    if subset_source == "au2":
        return [split.d_au1, ensemble.outside_subset(k, split.d_au2_tr)]
    return [split.d_au2_tr]
