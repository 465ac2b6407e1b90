"""Monte Carlo experiments checking the statistical guarantees, plus ablations and repeated attack runs.

Every trial draws its data from its own derived random stream, and results are aggregated by index: a run
is reproducible bit for bit from its spec and seed, whatever the execution order of the trials.

Monte Carlo standard errors are computed from the per-trial values: ``std(values, ddof=1) / sqrt(n_trials)``.
"""

import csv
import io
import logging
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

import memaudit.vendor
from memaudit.attack import MembershipAttack, check_blackbox_surrogate
from memaudit.config import AttackConfig, TaskConfig
from memaudit.conformal import batch_pvalues, build_calibration
from memaudit.exceptions import InvalidConfig
from memaudit.fdr import PValueVector, bh_adjust, check_alpha, decide, fdr_bound, realized_fdr
from memaudit.helpers import SEED_STREAM_REPETITION, derive_seed
from memaudit.metrics import auroc, decision_accuracy
from memaudit.synthetic import SyntheticSpec, generate_synthetic, simulate_victim

logger = logging.getLogger(__name__)

#: Default significance levels of the p-value validity experiment.
VALIDITY_ALPHAS = (0.01, 0.05, 0.1, 0.2)
#: Default significance levels of the FDR control experiment.
FDR_ALPHAS = (0.05, 0.1, 0.15, 0.2, 0.25, 0.3)

CURVE_COLUMNS = ("alpha", "rate", "stderr", "bound")


def mc_stderr(values: np.ndarray, axis: int = 0) -> np.ndarray:
    """Standard error of the mean of `values` along `axis` (0 with a single value)."""
    values = np.asarray(values, dtype=float)
    n = values.shape[axis]
    if n < 2:
        return np.zeros(np.delete(values.shape, axis))
    return np.std(values, axis=axis, ddof=1) / np.sqrt(n)


class GuaranteeCurve(object):
    """Empirical error rates on a grid of significance levels, with their Monte Carlo standard errors.

    :param alphas: the significance levels.
    :param rates: mean empirical rate at each level.
    :param stderr: Monte Carlo standard error of each rate.
    :param bounds: the guaranteed value of each rate (`alpha`, or `alpha * pi0` for the FDR).
    """

    def __init__(
        self,
        alphas: Sequence[float],
        rates: Sequence[float],
        stderr: Sequence[float],
        bounds: Sequence[float],
        n_trials: int = 0,
    ) -> None:
        #: Significance levels.
        self.alphas = np.asarray(alphas, dtype=float)  # type: np.ndarray
        #: Empirical rates.
        self.rates = np.asarray(rates, dtype=float)  # type: np.ndarray
        #: Monte Carlo standard errors.
        self.stderr = np.asarray(stderr, dtype=float)  # type: np.ndarray
        #: Guaranteed bound at each level.
        self.bounds = np.asarray(bounds, dtype=float)  # type: np.ndarray
        #: Number of trials the rates were averaged over.
        self.n_trials = n_trials  # type: int

        if not (self.alphas.shape == self.rates.shape == self.stderr.shape == self.bounds.shape):
            raise InvalidConfig("The curve arrays must be aligned")

    def __len__(self) -> int:
        return self.alphas.size

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GuaranteeCurve):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, a), getattr(other, a)) for a in ("alphas", "rates", "stderr", "bounds")
        )

    __hash__ = None  # type: ignore

    def holds(self, n_stderr: float = 3.0, bounds: Optional[Sequence[float]] = None) -> np.ndarray:
        """For each level, whether ``rate <= bound + n_stderr * stderr`` (with :attr:`bounds` by default)."""
        limit = self.bounds if bounds is None else np.asarray(bounds, dtype=float)
        return self.rates <= limit + n_stderr * self.stderr

    def summary_lines(self) -> List[str]:
        return [
            "alpha={a:.4g} rate={r:.5f} stderr={s:.5f} bound={b:.5f}".format(a=a, r=r, s=s, b=b)
            for a, r, s, b in zip(self.alphas, self.rates, self.stderr, self.bounds)
        ]

    def to_csv(self, path: str) -> None:
        """Write the curve as CSV (columns alpha, rate, stderr, bound; floats as repr)."""
        with io.open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(CURVE_COLUMNS)
            for row in zip(self.alphas, self.rates, self.stderr, self.bounds):
                writer.writerow([repr(float(v)) for v in row])

    def to_dataframe(self) -> Any:
        """Return the curve as a pandas DataFrame.

        :raises: ImportError if pandas is not installed.
        """
        if not memaudit.vendor._has_pandas:
            raise ImportError("Pandas is missing.")

        from pandas import DataFrame

        return DataFrame(
            {"alpha": self.alphas, "rate": self.rates, "stderr": self.stderr, "bound": self.bounds},
            columns=list(CURVE_COLUMNS),
        )


class ExperimentTable(object):
    """Rows of named values (one per ablation setting or repetition)."""

    def __init__(self, columns: Sequence[str], rows: Optional[List[Dict[str, float]]] = None) -> None:
        self.columns = list(columns)  # type: List[str]
        self.rows = rows or []  # type: List[Dict[str, float]]

    def __len__(self) -> int:
        return len(self.rows)

    def append(self, **values: float) -> None:
        self.rows.append({c: values[c] for c in self.columns})

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def mean(self, name: str) -> float:
        return float(np.nanmean(self.column(name)))

    def stderr(self, name: str) -> float:
        return float(mc_stderr(self.column(name)))

    def to_csv(self, path: str) -> None:
        with io.open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=self.columns)
            writer.writeheader()
            for row in self.rows:
                writer.writerow({k: repr(float(v)) for k, v in row.items()})

    def to_dataframe(self) -> Any:
        if not memaudit.vendor._has_pandas:
            raise ImportError("Pandas is missing.")

        from pandas import DataFrame

        return DataFrame(self.rows, columns=self.columns)


def _check_alphas(alphas: Sequence[float]) -> np.ndarray:
    if len(alphas) == 0:
        raise InvalidConfig("The significance level grid is empty")
    return np.array([check_alpha(a) for a in alphas], dtype=float)


def pvalue_validity_experiment(spec: SyntheticSpec, alphas: Sequence[float] = VALIDITY_ALPHAS) -> GuaranteeCurve:
    """Estimate ``P(p <= alpha)`` for true non-members, at each level of `alphas`.

    Raw (unadjusted) conformal p-values are used. Each trial contributes the fraction of its non-member test
    scores whose p-value is `<= alpha`.

    :raises: :class:`memaudit.exceptions.InvalidConfig` if no trial has a non-member (``pi0 == 0``).
    """
    alphas = _check_alphas(alphas)
    if spec.n_non_members == 0:
        raise InvalidConfig("The p-value validity experiment needs non-members (pi0 > 0)")

    per_trial = np.empty((spec.n_trials, alphas.size))
    for trial in range(spec.n_trials):
        data = generate_synthetic(spec, trial)
        p = batch_pvalues(build_calibration(data.calibration), data.test[~data.truth])
        per_trial[trial] = np.mean(p[:, None] <= alphas[None, :], axis=0)

    logger.info("P-value validity: %d trials of %d non-members", spec.n_trials, spec.n_non_members)
    return GuaranteeCurve(alphas, per_trial.mean(axis=0), mc_stderr(per_trial), alphas, spec.n_trials)


def _fdr_trials(spec: SyntheticSpec, alphas: np.ndarray) -> Dict[str, np.ndarray]:
    # Per trial and level: realized FDR, power (fraction of members found) and verdict accuracy
    shape = (spec.n_trials, alphas.size)
    fdr = np.empty(shape)
    power = np.empty(shape)
    acc = np.empty(shape)
    for trial in range(spec.n_trials):
        data = generate_synthetic(spec, trial)
        p = PValueVector(batch_pvalues(build_calibration(data.calibration), data.test))
        adjusted = bh_adjust(p)
        n_members = int(np.count_nonzero(data.truth))
        for i, alpha in enumerate(alphas):
            member = decide(adjusted, alpha).member
            fdr[trial, i] = realized_fdr(member, data.truth)
            power[trial, i] = np.count_nonzero(member & data.truth) / n_members if n_members else 0.0
            acc[trial, i] = decision_accuracy(member, data.truth)
    return {"fdr": fdr, "power": power, "accuracy": acc}


def fdr_control_experiment(spec: SyntheticSpec, alphas: Sequence[float] = FDR_ALPHAS) -> GuaranteeCurve:
    """Mean realized FDR of the full conformal, adjustment and decision path at each level of `alphas`.

    The curve bounds are ``alpha * pi0``; the plain ``alpha`` bound follows since ``pi0 <= 1``.
    """
    alphas = _check_alphas(alphas)
    fdr = _fdr_trials(spec, alphas)["fdr"]
    logger.info("FDR control: %d trials, pi0=%s", spec.n_trials, spec.pi0)
    bounds = np.array([fdr_bound(a, spec.pi0) for a in alphas])
    return GuaranteeCurve(alphas, fdr.mean(axis=0), mc_stderr(fdr), bounds, spec.n_trials)


def calibration_size_experiment(spec: SyntheticSpec, sizes: Sequence[int], alpha: float = 0.1) -> ExperimentTable:
    """Mean FDR, power and verdict accuracy at level `alpha` for each calibration set size."""
    alpha = check_alpha(alpha)
    table = ExperimentTable(["n_calibration", "fdr", "fdr_stderr", "power", "accuracy"])
    for size in sizes:
        results = _fdr_trials(spec.replace(n_calibration=int(size)), np.array([alpha]))
        table.append(
            n_calibration=int(size),
            fdr=float(results["fdr"].mean()),
            fdr_stderr=float(mc_stderr(results["fdr"][:, 0])),
            power=float(results["power"].mean()),
            accuracy=float(results["accuracy"].mean()),
        )
    return table


def member_ratio_experiment(spec: SyntheticSpec, pi0s: Sequence[float], alpha: float = 0.1) -> ExperimentTable:
    """Mean AUROC (on p-values and on raw scores) and mean FDR for each proportion of non-members.

    :raises: :class:`memaudit.exceptions.InvalidConfig` if a proportion leaves a single class in the test set.
    """
    alpha = check_alpha(alpha)
    table = ExperimentTable(["pi0", "auroc_pvalues", "auroc_scores", "fdr", "bound"])
    for pi0 in pi0s:
        current = spec.replace(pi0=float(pi0))
        if current.n_non_members in (0, current.n_test):
            raise InvalidConfig("pi0={p} leaves a single class in the test set".format(p=pi0))
        auc_p = np.empty(current.n_trials)
        auc_s = np.empty(current.n_trials)
        fdr = np.empty(current.n_trials)
        for trial in range(current.n_trials):
            data = generate_synthetic(current, trial)
            p = batch_pvalues(build_calibration(data.calibration), data.test)
            auc_p[trial] = auroc(p, data.truth)
            auc_s[trial] = auroc(data.test, data.truth)
            fdr[trial] = realized_fdr(decide(bh_adjust(PValueVector(p)), alpha).member, data.truth)
        table.append(
            pi0=float(pi0),
            auroc_pvalues=float(auc_p.mean()),
            auroc_scores=float(auc_s.mean()),
            fdr=float(fdr.mean()),
            bound=fdr_bound(alpha, float(pi0)),
        )
    return table


ATTACK_COLUMNS = (
    "repetition",
    "victim_train_accuracy",
    "auroc_pvalues",
    "auroc_raw_scores",
    "accuracy_decisions",
    "fdr",
    "n_rejected",
)


def attack_experiment(task: TaskConfig, cfg: AttackConfig, repetitions: int = 50) -> ExperimentTable:
    """Run the whole attack `repetitions` times, each on a freshly drawn task and victim.

    Repetition `r` derives its task and attack seeds from ``(task.seed, r)`` and ``(cfg.seed, r)``.
    """
    if repetitions < 1:
        raise InvalidConfig("repetitions must be >= 1")
    check_blackbox_surrogate(cfg, task.victim_arch)

    table = ExperimentTable(ATTACK_COLUMNS)
    for r in range(repetitions):
        run_task = task.replace(seed=derive_seed(task.seed, SEED_STREAM_REPETITION, r))
        run_cfg = cfg.replace(seed=derive_seed(cfg.seed, SEED_STREAM_REPETITION, r))
        simulation = simulate_victim(run_task)
        attack = MembershipAttack(run_cfg, simulation.victim(disclose_architecture=not cfg.blackbox))
        attack.fit(simulation.auxiliary)
        result = attack.run(simulation.test.features, truth=simulation.truth, labels=simulation.test.labels)
        evaluation = result.evaluate()
        table.append(
            repetition=r,
            victim_train_accuracy=simulation.train_accuracy,
            auroc_pvalues=evaluation["auroc_pvalues"],
            auroc_raw_scores=evaluation["auroc_raw_scores"],
            accuracy_decisions=evaluation["accuracy_decisions"],
            fdr=result.report.fdr,  # type: ignore
            n_rejected=result.decisions.n_rejected,
        )
        logger.info(
            "Repetition %d/%d: AUROC %.3f, FDR %.3f",
            r + 1,
            repetitions,
            evaluation["auroc_pvalues"],
            result.report.fdr,  # type: ignore
        )
    return table
