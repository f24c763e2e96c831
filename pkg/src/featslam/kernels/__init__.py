"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is chosen once at import time. Set ``FEATSLAM_DISABLE_NUMBA=1``
to force the numpy implementations (handy for debugging or when numba is
unavailable).
"""

import os

from . import _numpy

_disabled = os.environ.get("FEATSLAM_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

if _disabled:
    _impl = _numpy
    BACKEND = "numpy"
else:
    try:
        from . import _numba as _impl

        BACKEND = "numba"
    except ImportError:  # pragma: no cover - numba missing
        _impl = _numpy
        BACKEND = "numpy"

point_jacobians = _impl.point_jacobians
epipolar_distances = _impl.epipolar_distances
grid_stats = _impl.grid_stats
accumulate_blocks = _impl.accumulate_blocks
schur_reduce = _impl.schur_reduce

__all__ = [
    "BACKEND",
    "point_jacobians",
    "epipolar_distances",
    "grid_stats",
    "accumulate_blocks",
    "schur_reduce",
]
