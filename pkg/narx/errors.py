"""
Exception hierarchy for the NARX structure selection package.
"""


class NarxError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(NarxError):
    """Invalid experiment configuration or CLI combination."""


class DatasetError(NarxError):
    """Malformed dataset, invalid split or length mismatch."""


class ModelSetError(NarxError):
    """Mask/model-set mismatch or a term that is not in the model set."""


class SingularFitError(NarxError):
    """The selected regressor columns are rank deficient."""


class DivergenceError(NarxError):
    """A simulated recursion left the divergence bound."""

    def __init__(self, message: str, step: int = -1):
        super().__init__(message)
        self.step = step


class DegenerateDataError(NarxError):
    """A sequence is constant where variance is required."""


class IntegrationError(NarxError):
    """The oscillator integrator produced a non-finite state."""
