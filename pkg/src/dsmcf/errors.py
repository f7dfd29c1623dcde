"""Exception types shared across the package.

Every error raised on purpose derives from ``DsmcfError`` so callers can
catch the whole family at an API boundary while ordinary bugs (TypeError,
IndexError, ...) still surface loudly.
"""

from __future__ import annotations

__all__ = [
    "DsmcfError",
    "NonSpacelikeError",
    "SingularMetricError",
    "BelowThresholdError",
    "OutOfDomainError",
    "ResolutionTooLowError",
    "DegenerateResidualError",
    "WindowTooShortError",
    "NonUniformWindowError",
    "ModeUnsupportedError",
    "BlowupError",
    "SpanTooShortError",
    "ParseError",
    "ValidationError",
    "VersionMismatchError",
    "CorruptFileError",
    "IoError",
]


class DsmcfError(Exception):
    """Base class for all package-specific errors."""


class NonSpacelikeError(DsmcfError):
    """A graph jet lost the spacelike margin (1 - e^{-2u}|du|^2 too small).

    Carries the offending location when known so a failed flow run can be
    diagnosed without re-running.
    """

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class SingularMetricError(DsmcfError):
    """Induced metric could not be inverted or factored reliably."""


class BelowThresholdError(DsmcfError):
    """A cutoff bound was requested below its configured height threshold."""


class OutOfDomainError(DsmcfError):
    """A point left the interpolable hull of a grid."""


class ResolutionTooLowError(DsmcfError):
    """Grid has too few nodes for the second-order stencils."""


class DegenerateResidualError(DsmcfError):
    """Refinement order is meaningless because an error is at rounding level."""


class WindowTooShortError(DsmcfError):
    """A trajectory does not contain three consecutive snapshots."""


class NonUniformWindowError(DsmcfError):
    """Snapshot spacing in a checking window is not uniform."""


class ModeUnsupportedError(DsmcfError):
    """The requested check only exists for one grid mode."""


class BlowupError(DsmcfError):
    """The height field exceeded the configured cap during a flow run."""


class SpanTooShortError(DsmcfError):
    """A trajectory does not cover the time span a rescaling needs."""


class ParseError(DsmcfError):
    """Config or snapshot text could not be parsed, or held unknown keys."""


class ValidationError(DsmcfError):
    """A config value violated its documented range."""


class VersionMismatchError(DsmcfError):
    """A snapshot file was written by an incompatible format version."""


class CorruptFileError(DsmcfError):
    """A snapshot file failed its checksum or is truncated."""


class IoError(DsmcfError):
    """A report or snapshot could not be written to its output path."""
