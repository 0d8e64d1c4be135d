"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: validation and on-disk format problems
exit 2, numerical failures exit 3 (see cli.py).
"""


class ValidationError(ValueError):
    """Input violates a documented precondition or invariant."""


class ConfigError(ValidationError):
    """Configuration values are out of range or mutually inconsistent."""


class BehindCameraError(ValidationError):
    """A point with non-positive depth reached the pinhole projection."""


class DataFormatError(Exception):
    """Base class for on-disk format violations."""


class MagicError(DataFormatError):
    """A tensor blob does not start with the expected magic bytes."""


class TruncatedBlobError(DataFormatError):
    """A tensor blob ended before its declared payload."""


class ChecksumError(DataFormatError):
    """A blob's content does not match the checksum recorded in the manifest."""


class NumericalError(RuntimeError):
    """A numerical routine failed beyond recovery (factorization, NaN loss)."""
