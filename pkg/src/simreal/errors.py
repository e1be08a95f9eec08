"""Exception classes shared across the package.

Every failure mode raised deliberately by this package derives from
:class:`SimRealError`, so callers can catch one base class at CLI
boundaries while tests assert on the precise subclass.
"""


class SimRealError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(SimRealError):
    """Array shapes do not chain or do not match a declared contract."""


class ParameterError(SimRealError):
    """A scalar argument is out of its valid range (e.g. stride < 1)."""


class NumericError(SimRealError):
    """A non-finite value showed up where finite math was required."""


class FormatError(SimRealError):
    """A serialized file is corrupt, truncated, or has a bad header."""


class VersionError(SimRealError):
    """A serialized file declares a generator/format version we do not know."""


class ConfigError(SimRealError):
    """A configuration is self-inconsistent or out of bounds."""


class TagError(SimRealError):
    """An unknown domain tag was supplied."""


class EmptyBatchError(SimRealError):
    """An operation that needs at least one example received none."""


class EmptySourceError(SimRealError):
    """A pairing or sampling step was given an empty source pool."""


class LabelError(SimRealError):
    """A required label is missing for a referenced example."""


class MetadataError(SimRealError):
    """Ground-truth metadata needed by a metric is unavailable."""
