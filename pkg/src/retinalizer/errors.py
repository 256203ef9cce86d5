"""Exception hierarchy shared across the package.

The CLI maps the four base classes to stable exit codes, so new exceptions
should subclass whichever base matches their failure mode.
"""


class RetinalizerError(Exception):
    """Base class for all package errors."""


class ConfigurationError(RetinalizerError):
    """Invalid configuration value, unknown profile/variant, bad override."""

    exit_code = 2


class DataError(RetinalizerError):
    """Problems with datasets, manifests, task materialization or sampling."""

    exit_code = 3


class ManifestError(DataError):
    """Malformed dataset manifest; message names the offending field."""


class ShapeError(DataError):
    """Spatial dimensions of two inputs do not agree."""


class ContextError(DataError):
    """Unusable context set (empty, oversized palette, ...)."""


class CodecError(DataError):
    """Class id without palette entry, or palette violating its invariants."""


class SamplingError(DataError):
    """Batch/context sampling could not satisfy its constraints."""


class PlacementError(DataError):
    """Random geometry placement failed within the retry budget."""


class AugmentationError(DataError):
    """Random recoloring could not satisfy the palette distance constraint."""


class NumericError(RetinalizerError):
    """Non-finite loss or gradient."""

    exit_code = 4


class StorageError(RetinalizerError):
    """File I/O failure."""

    exit_code = 5


class CheckpointError(StorageError):
    """Corrupt, truncated or version-incompatible checkpoint file."""
