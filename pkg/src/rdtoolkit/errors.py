"""Exception hierarchy for the toolkit.

Two branches matter operationally: ``DataError`` covers problems with the
input data or configuration (CLI exit code 2), ``EstimationError`` covers
numerical or statistical failures during estimation (CLI exit code 3).
"""


class RdError(Exception):
    """Base class for all toolkit errors."""


class DataError(RdError):
    """Invalid input data or configuration."""


class EstimationError(RdError):
    """Estimation is impossible or numerically degenerate."""


# --- data / ingestion ---

class MissingColumn(DataError):
    pass


class NonFiniteScore(DataError):
    def __init__(self, row: int, value: str = ""):
        self.row = row
        super().__init__(f"non-finite or missing score at row {row}"
                         + (f" (value {value!r})" if value else ""))


class NonFiniteOutcome(DataError):
    def __init__(self, row: int, value: str = ""):
        self.row = row
        super().__init__(f"non-finite or missing outcome at row {row}"
                         + (f" (value {value!r})" if value else ""))


class BadTreatmentCode(DataError):
    def __init__(self, row: int, value: str = ""):
        self.row = row
        super().__init__(f"treatment code outside {{0, 1}} at row {row}"
                         + (f" (value {value!r})" if value else ""))


class BadSpec(DataError):
    pass


class MissingTreatmentColumn(DataError):
    pass


class MissingCovariate(DataError):
    pass


class NoCovariates(DataError):
    pass


class GridContainsTrueCutoff(DataError):
    pass


# --- estimation ---

class EmptySide(EstimationError):
    pass


class RankDeficient(EstimationError):
    pass


class DerivativeOrderTooHigh(EstimationError):
    pass


class WeakFirstStage(EstimationError):
    pass


class NoMassAtCutoff(EstimationError):
    pass


class NoBelowNeighbor(EstimationError):
    pass


class TooFewObservations(EstimationError):
    pass


class EmptyGroup(EstimationError):
    pass


class NoFeasibleWindow(EstimationError):
    pass


class NoVariation(EstimationError):
    pass


class InsufficientSideData(EstimationError):
    pass


class InsufficientData(EstimationError):
    pass


class UnreachableTarget(EstimationError):
    pass


class TooManyFailures(EstimationError):
    pass
