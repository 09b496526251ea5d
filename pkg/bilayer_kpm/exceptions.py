"""
Error taxonomy for bilayer-kpm.

Every error also derives from the closest builtin so callers that only know
``ValueError``/``RuntimeError`` keep working.
"""

__all__ = [
    "BilayerKpmError",
    "CommensurabilityWarning",
    "ConfigError",
    "DimensionMismatchError",
    "InsufficientSampleError",
    "InvalidBasisError",
    "InvalidParameterError",
    "MissingDofError",
    "ModelInconsistencyError",
    "ModelValidationError",
    "OutOfWindowError",
    "SizeLimitError",
    "SpectralWindowError",
]


class BilayerKpmError(Exception):
    """Base class for all library errors."""


class InvalidBasisError(BilayerKpmError, ValueError):
    """Singular or malformed lattice basis."""


class InvalidParameterError(BilayerKpmError, ValueError):
    """A numeric parameter is outside its admissible range."""


class InsufficientSampleError(BilayerKpmError, ValueError):
    """Too few lattice sites for a statistical diagnostic."""


class ModelValidationError(BilayerKpmError, ValueError):
    """Hopping data contradicts its declared decay metadata."""


class ModelInconsistencyError(BilayerKpmError, RuntimeError):
    """Assembled matrix is not Hermitian beyond rounding."""


class DimensionMismatchError(BilayerKpmError, ValueError):
    """Vector length does not match the operator dimension."""


class SizeLimitError(BilayerKpmError, ValueError):
    """Dense operation requested on a matrix that is too large."""


class MissingDofError(BilayerKpmError, KeyError):
    """Requested orbital has no center degree of freedom in the cluster."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class SpectralWindowError(BilayerKpmError, RuntimeError):
    """Chebyshev recursion left [-1, 1]: eta does not bound the spectrum."""


class OutOfWindowError(BilayerKpmError, ValueError):
    """Energies outside the open scaled window."""

    def __init__(self, message: str, offending: list[float] | None = None):
        super().__init__(message)
        self.offending = offending or []


class ConfigError(BilayerKpmError, ValueError):
    """Invalid run or model configuration."""


class CommensurabilityWarning(UserWarning):
    """The two lattices look commensurate for the probed Fourier mode."""
