"""Hot pixel kernels with a compiled core and a NumPy fallback.

The compiled extension is preferred when present; set
``RETINALIZER_FORCE_FALLBACK=1`` to force the NumPy path (used by the
benchmark and the backend-equivalence tests). Both backends are bit-exact
equivalents.
"""

from __future__ import annotations

import os

from . import _reference

if os.environ.get("RETINALIZER_FORCE_FALLBACK") == "1":
    _impl = _reference
    BACKEND = "fallback"
else:
    try:
        from . import _native as _impl  # type: ignore[no-redef]

        BACKEND = "native"
    except ImportError:
        _impl = _reference
        BACKEND = "fallback"

nearest_color_indices = _impl.nearest_color_indices
thin_zhang_suen = _impl.thin_zhang_suen

__all__ = ["nearest_color_indices", "thin_zhang_suen", "BACKEND"]
