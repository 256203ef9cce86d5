"""Visual in-context learning testbed for retinal OCT phantoms."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    AugmentationError,
    CheckpointError,
    CodecError,
    ConfigurationError,
    ContextError,
    DataError,
    ManifestError,
    NumericError,
    PlacementError,
    RetinalizerError,
    SamplingError,
    ShapeError,
    StorageError,
)
