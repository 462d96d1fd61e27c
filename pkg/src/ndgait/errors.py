"""Exception types shared across the package."""


class NdgError(Exception):
    """Base class for all package errors."""


class ShapeError(NdgError):
    """Array dimensions incompatible with the requested operation."""


class ConfigError(NdgError):
    """Invalid configuration value or combination."""


class InputError(NdgError):
    """Input data violates an operation precondition."""


class ContractError(NdgError):
    """Caller violated an API contract (not a data problem)."""


class NumericError(NdgError):
    """Non-finite values or numerical breakdown."""


class DomainError(NdgError):
    """Mathematically undefined request (e.g. empty logsumexp)."""


class DegenerateBatchError(InputError):
    """Batch statistics requested over fewer than two elements."""


class EmptySessionError(InputError):
    """Session too short to produce a single window."""


class UndefinedMetricError(NdgError):
    """Metric undefined for this input (e.g. zero variance)."""


class NoEventsError(NdgError):
    """No kinematic events found in the signal."""


class InsufficientCyclesError(NdgError):
    """Fewer than one complete event chain detected."""


class DegenerateMaskError(ContractError):
    """Every mixture component masked out."""


class FormatError(NdgError):
    """Base class for on-disk format violations."""


class BadMagicError(FormatError):
    """File does not start with the expected magic bytes."""


class TruncatedPayloadError(FormatError):
    """Payload shorter than the size implied by metadata."""


class MetaMismatchError(FormatError):
    """Metadata inconsistent with itself or with the payload."""
