"""Exceptions for the whole package."""


class MemauditError(Exception):
    """Base class of all the errors raised by memaudit."""


class InvalidDataset(MemauditError):
    """The dataset is empty, inconsistent or doesn't match the model dimensions."""


class TrainingDiverged(MemauditError):
    """The training loss became non-finite."""

    def __init__(self, epoch: int, loss: float) -> None:
        #: Index (starting at 0) of the epoch during which the loss became non-finite.
        self.epoch = epoch
        #: The offending loss value.
        self.loss = loss
        super().__init__(
            "Non-finite training loss ({loss}) at epoch {epoch}".format(
                loss=loss, epoch=epoch
            )
        )


class InvalidScore(MemauditError):
    """A score, probability or weight is non-finite or outside its domain."""


class CalibrationNotFrozen(MemauditError):
    """A p-value was requested from a calibration set that is not frozen yet."""


class InvalidPValues(MemauditError):
    """The p-values are empty or outside (0, 1]."""


class InvalidConfig(MemauditError):
    """The configuration is invalid."""


class EmptySplit(InvalidConfig):
    """A data split or a sampled subset would be empty."""


class VictimQueryError(MemauditError):
    """The victim model could not be queried, or returned invalid score vectors."""


class ScoreFileError(MemauditError):
    """The score file appears to be invalid."""


class ScoreFileParseError(ScoreFileError):
    """The score file cannot be parsed."""

    def __init__(self, message: str, line_number: int = None) -> None:
        #: Line number (starting at 1) where parsing failed, if known.
        self.line_number = line_number
        if line_number is not None:
            message = "line {n}: {msg}".format(n=line_number, msg=message)
        super().__init__(message)


class ContractViolation(ScoreFileError):
    """The score file parses, but breaks the wrapper contract (roles, truth, orientation)."""


class UndefinedMetric(MemauditError):
    """The metric cannot be computed for this input (e.g. AUROC with a single class)."""
