"""Exception hierarchy.

``ValidationError`` covers bad inputs (CLI exit code 1); everything else that
derives from ``HabmodError`` is a runtime failure (exit code 2).
"""


class HabmodError(Exception):
    """Base class for all package errors."""


class ValidationError(HabmodError, ValueError):
    """Input violates a documented precondition."""


# taxonomy / data
class EmptyTaxonomy(ValidationError):
    pass


class DuplicateCode(ValidationError):
    pass


class UnmappableLeaf(ValidationError):
    pass


class SchemaError(ValidationError):
    pass


class UnknownLabel(ValidationError):
    pass


class NonNumericFeature(ValidationError):
    pass


class InvalidSpec(ValidationError):
    pass


# spatial cv
class NonPositiveBlockSize(ValidationError):
    pass


class TooFewBlocks(ValidationError):
    pass


class DegenerateSplit(ValidationError):
    pass


# losses
class ZeroCount(ValidationError):
    pass


class NonFiniteLogits(ValidationError):
    pass


# learners
class InsufficientData(ValidationError):
    pass


class SchemaMismatch(ValidationError):
    pass


class EmptySearchSpace(ValidationError):
    pass


# schemes
class EmptyMask(ValidationError):
    pass


class NoTrainingRows(ValidationError):
    pass


class KindMismatch(ValidationError):
    pass


class UnknownFormation(ValidationError):
    pass


# ensemble
class ShapeMismatch(ValidationError):
    pass


class EmptyEnsemble(ValidationError):
    pass


# metrics
class BadK(ValidationError):
    pass


# stats
class DegenerateMatrix(ValidationError):
    pass


class UnsupportedK(ValidationError):
    pass


class DegeneratePairs(ValidationError):
    pass


# attribution
class EmptyBackground(ValidationError):
    pass


# harness
class SingleModality(ValidationError):
    pass


class MismatchedFolds(ValidationError):
    pass


class FoldError(HabmodError):
    """Wraps a module error with the fold it occurred in."""

    def __init__(self, fold, cause):
        self.fold = fold
        self.cause = cause
        super().__init__(f"fold {fold}: {type(cause).__name__}: {cause}")
