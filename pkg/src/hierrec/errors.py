"""Exception types shared across the package."""


class HierRecError(Exception):
    """Base class for all package errors."""


class ConfigError(HierRecError):
    """Invalid or inconsistent experiment configuration."""


# curriculum


class OutOfRangeId(HierRecError):
    """A concept or question id outside its dense range."""


class OrphanQuestion(HierRecError):
    """A question with no related concept."""


class EmptyCandidateSet(HierRecError):
    """Concept selection produced no candidate questions."""


class MalformedRow(HierRecError):
    """An interaction-log row that cannot be parsed."""


# simulators


class StepLimitExceeded(HierRecError):
    """An answer was requested past the session's step budget."""


class InsufficientData(HierRecError):
    """Not enough training data to fit a model."""


# encoder


class ElementNotInSet(HierRecError):
    """element_repr was asked about an element outside the given set."""


class EmptySet(HierRecError):
    """A set encoding was requested for an empty set."""


class DimensionMismatch(HierRecError):
    """Vector dimensions do not match the encoder configuration."""


# policy


class EmptyActionSet(HierRecError):
    """No actions to score."""


class KTooLarge(HierRecError):
    """Requested more distinct concepts than exist."""


# training / evaluation


class DivergenceDetected(HierRecError):
    """Training produced a non-finite loss; carries the last good checkpoint path."""

    def __init__(self, message: str, checkpoint_path=None):
        super().__init__(message)
        self.checkpoint_path = checkpoint_path


class AlreadyMastered(HierRecError):
    """Learning effect undefined: every target was mastered before the session."""


class CheckpointMismatch(HierRecError):
    """Checkpoint was produced under a different configuration."""
