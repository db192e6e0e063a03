"""Exception types shared across the package."""


class SoftDropError(Exception):
    """Base class for all package errors."""


class ContractViolation(SoftDropError, ValueError):
    """An operation was called with arguments outside its contract."""


class DegenerateInput(SoftDropError, ValueError):
    """Input is numerically degenerate (e.g. a near-zero vector to normalize)."""


class ConfigError(SoftDropError, ValueError):
    """A configuration is malformed or infeasible."""


class TrainingDiverged(SoftDropError, RuntimeError):
    """Non-finite values appeared during training.

    ``checkpoint`` holds the last parameter snapshot known to be finite, or
    ``None`` if divergence happened before any good state was recorded.
    """

    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint
