"""Exception types shared across the package."""


class DomainError(ValueError):
    """A precondition on an operation's inputs was violated."""


class SaturationError(DomainError):
    """A distance fraction at or above 3/4 cannot be inverted."""


class EmbeddingError(DomainError):
    """A gene tree is inconsistent with the species tree it claims to live in."""


class CalibrationError(RuntimeError):
    """A calibration bracket could not be established."""
