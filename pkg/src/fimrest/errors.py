"""Exception types shared across the package."""


class FimrestError(Exception):
    """Base class for all package errors."""


class DomainError(FimrestError, ValueError):
    """Argument outside the mathematical domain of a function."""


class IllConditionedScaleError(FimrestError):
    """A scale matrix is not symmetric positive-definite, even after jitter."""


class InvalidSkewnessError(FimrestError):
    """The skewness matrix makes the residual scale non-positive-definite."""


class DegenerateTruncationError(FimrestError):
    """Truncation region has numerically zero probability mass."""


class MomentUndefinedError(FimrestError):
    """Requested moment does not exist for the given degrees of freedom."""


class CdfUnderflowError(FimrestError):
    """A CDF value underflowed below the representable range (~1e-300)."""


class DegenerateClusterError(FimrestError):
    """A mixture component lost essentially all of its responsibility mass."""

    def __init__(self, kernel_index, message=None):
        self.kernel_index = kernel_index
        super().__init__(message or f"kernel {kernel_index} became degenerate")


class InitializationError(FimrestError):
    """Could not build a usable starting model from the data."""


class DensityUnderflowError(FimrestError):
    """An observation has zero density under every mixture component."""

    def __init__(self, row_index, message=None):
        self.row_index = row_index
        super().__init__(message or f"zero mixture density at data row {row_index}")


class DataError(FimrestError):
    """Malformed, missing, or unusable input data."""


class ModelFormatError(FimrestError):
    """Model document violates the persisted schema."""
