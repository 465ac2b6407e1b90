"""Wrapper mode: FDR-controlled decisions on top of the scores of any membership inference attack.

External scores are used as conformity scores directly (after orientation normalization): the calibration
records form the calibration set, and every test record gets a conformal p-value, an adjusted p-value and a
verdict.
"""

import logging
from typing import List, Optional, Tuple

import numpy as np

from memaudit.conformal import batch_pvalues, build_calibration
from memaudit.exceptions import ContractViolation
from memaudit.fdr import (
    AdjustedPValues,
    DecisionSet,
    FdrReport,
    PValueVector,
    bh_adjust,
    compute_fdr,
    decide,
    truth_from_labels,
)
from memaudit.files import ScoreFile, export_report

logger = logging.getLogger(__name__)


class WrapResult(object):
    """P-values, adjusted p-values and decisions for the test records of a :class:`memaudit.files.ScoreFile`."""

    def __init__(
        self,
        sample_ids: List[str],
        pvalues: PValueVector,
        adjusted: AdjustedPValues,
        decisions: DecisionSet,
        truth: Optional[np.ndarray] = None,
    ) -> None:
        #: Ids of the test records, in file order.
        self.sample_ids = sample_ids  # type: List[str]
        self.pvalues = pvalues  # type: PValueVector
        self.adjusted = adjusted  # type: AdjustedPValues
        self.decisions = decisions  # type: DecisionSet
        #: `True` for true members, when every test record has a truth label.
        self.truth = truth  # type: Optional[np.ndarray]
        #: Realized FDR, when the truth is known.
        self.report = compute_fdr(decisions, truth) if truth is not None else None  # type: Optional[FdrReport]

    def __len__(self) -> int:
        return len(self.sample_ids)

    def export(self, path: str) -> Tuple[str, str]:
        """Write the report and the per-sample verdicts (see :func:`memaudit.files.export_report`)."""
        return export_report(
            self.report, self.decisions, path, adjusted=self.adjusted, sample_ids=self.sample_ids, truth=self.truth
        )


def wrap_external(score_file: ScoreFile, alpha: float) -> WrapResult:
    """Decide membership for the test records of `score_file` at FDR level `alpha`.

    :raises: :class:`memaudit.exceptions.ContractViolation` if there's no calibration or no test record.
    :raises: :class:`memaudit.exceptions.InvalidConfig` if `alpha` is not in (0, 1).
    """
    calibration = score_file.calibration_scores()
    if calibration.size == 0:
        raise ContractViolation("The score file has no calibration record")
    tests = score_file.test_records
    if not tests:
        raise ContractViolation("The score file has no test record")

    calib = build_calibration(calibration)
    pvalues = PValueVector(batch_pvalues(calib, score_file.test_scores()))
    adjusted = bh_adjust(pvalues)
    decisions = decide(adjusted, alpha)

    truth = truth_from_labels([r.truth for r in tests])
    logger.info(
        "Wrapped %d test scores against %d calibration scores: %d declared members",
        len(tests),
        len(calib),
        decisions.n_rejected,
    )
    return WrapResult([r.sample_id for r in tests], pvalues, adjusted, decisions, truth)
