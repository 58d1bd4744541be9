"""Backend selection for the geometry hot loops.

The compiled Cython module is used when it was built; otherwise, or when
``MONODREAM_PURE_PYTHON=1`` is set, the numpy/pure-Python versions are used.
"""
from __future__ import annotations

import os

from monodream import _purepy

_impl = _purepy
BACKEND = "python"
if os.environ.get("MONODREAM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from monodream import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _purepy

cast_rays = _impl.cast_rays
segment_clearance = _impl.segment_clearance
grid_astar = _impl.grid_astar

BACKENDS = {"python": _purepy}
try:
    from monodream import _kernels as _compiled

    BACKENDS["cython"] = _compiled
except ImportError:
    pass
