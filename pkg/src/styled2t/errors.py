"""Exception types raised across the package."""


class Styled2TError(Exception):
    """Base class for all package errors."""


class ConfigInvalid(Styled2TError):
    """A configuration value violates its documented constraints."""


class SchemaError(Styled2TError):
    """A serialized record does not match the expected schema."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class PlanUnderivable(Styled2TError):
    """No attribute value occurs in the target text, so no plan exists."""


class ShapeMismatch(Styled2TError):
    """An array argument has a shape incompatible with the parameters."""


class EmptyPlan(Styled2TError):
    """A plan with zero steps was passed where at least one is required."""


class EmptyReference(Styled2TError):
    """The style reference text is empty."""


class MissingCenter(Styled2TError):
    """A style required by the clustering loss has no center available."""


class EmptyCorpus(Styled2TError):
    """An operation that needs training texts received none."""


class EmptyText(Styled2TError):
    """A scoring function received an empty token sequence."""


class SingleStyleCorpus(Styled2TError):
    """Classifier training needs at least two styles represented."""


class EmptyInput(Styled2TError):
    """A metric received an empty candidate, reference, or sample list."""


class DataMissingStyle(Styled2TError):
    """The training corpus lacks samples for one of the configured styles."""
