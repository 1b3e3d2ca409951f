"""Exception types shared across the package."""


class PtygradError(ValueError):
    """Base class for all package errors."""


class DimensionError(PtygradError):
    """Array shapes are incompatible with the requested operation."""


class OutOfBandError(PtygradError):
    """A spectral window or shifted aperture falls outside the representable band."""


class DomainError(PtygradError):
    """An input value violates a domain constraint (negativity, non-finite, ...)."""


class ConfigError(PtygradError):
    """A configuration file or parameter set is invalid."""


class ReconstructionError(PtygradError):
    """The reconstruction loop hit a non-recoverable numerical state."""
