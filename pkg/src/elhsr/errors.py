"""Exception types shared across the toolkit."""


class ElhsrError(Exception):
    """Base class for all toolkit errors."""


class FormatError(ElhsrError):
    """On-disk layout violation: bad meta, bad manifest, bad payload size."""


class DataError(ElhsrError):
    """Value-domain violation: non-finite features, labels outside {0, 1}."""


class ConfigError(ElhsrError):
    """Incompatible or invalid configuration (model/dataset mismatch, bad layer selection)."""
