"""Exception taxonomy shared across the package.

The CLI maps these onto its exit codes: config problems -> 2, missing
artifacts -> 3, numeric failures -> 4, integrity failures -> 5.
"""


class ReachmonError(Exception):
    """Base class for all package errors."""


class IntegrationDiverged(ReachmonError):
    """Simulation produced a non-finite state."""

    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index


class ShapeError(ReachmonError):
    """An array argument has the wrong shape or length."""


class GenerationFailed(ReachmonError):
    """Dataset generation exhausted its resampling budget."""


class NumericalError(ReachmonError):
    """Training or evaluation produced non-finite values."""


class InvalidLikelihoods(ReachmonError):
    """Class likelihoods are not a normalized probability vector."""


class FilterDiverged(ReachmonError):
    """State-estimation filter lost positive definiteness."""


class InsufficientData(ReachmonError):
    """Not enough samples for the requested operation."""


class DegenerateRule(UserWarning):
    """Rejection rule trained on single-class data; decision is constant."""


class IntegrityError(ReachmonError):
    """Stored artifact failed checksum or version validation."""


class ConfigError(ReachmonError):
    """Configuration file or option failed validation."""


class MissingArtifact(ReachmonError):
    """A required upstream artifact (dataset, bundle, checkpoint) is absent."""
