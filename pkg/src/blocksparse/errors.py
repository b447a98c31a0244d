"""Exception hierarchy.

Every domain error derives from :class:`BlockSparseError`, which the CLI maps
to exit code 1.
"""


class BlockSparseError(Exception):
    """Base class for all domain errors raised by this package."""


class DisjointnessViolation(BlockSparseError):
    pass


class InsufficientBlocks(BlockSparseError):
    pass


class MalformedFile(BlockSparseError):
    pass


class DimensionMismatch(BlockSparseError):
    pass


class ChecksumMismatch(MalformedFile):
    pass


class NonOrthonormalBasis(BlockSparseError):
    pass


class UnequalBlockLengths(BlockSparseError):
    pass


class RankDeficientBlock(BlockSparseError):
    pass


class InfeasibleDimensions(BlockSparseError):
    pass


class MaxIterationsExceeded(BlockSparseError):
    """Raised by strict solves; ``result`` holds the last iterate."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class WorkCapExceeded(BlockSparseError):
    pass


class MissingInput(BlockSparseError):
    pass


class NotApplicable(BlockSparseError):
    pass


class DenominatorNonpositive(BlockSparseError):
    pass


class ZeroSignal(BlockSparseError):
    pass


class NonRedundantOnly(BlockSparseError):
    pass


class RankDeficientCovariance(BlockSparseError):
    pass


class NonDivisibleDownsample(BlockSparseError):
    pass


class UnreadableImage(BlockSparseError):
    pass


class InconsistentDimensions(BlockSparseError):
    pass


class SolverFailure(BlockSparseError):
    pass
