"""Optional numba acceleration.

Kernels are written once as plain numpy loops and compiled with
``numba.njit`` unless ``PIGEON_IOC_DISABLE_NUMBA`` is set to a truthy value
(or numba cannot be imported), in which case the same functions run
interpreted.
"""

import os

_FLAG = "PIGEON_IOC_DISABLE_NUMBA"


def _numba_requested():
    return os.environ.get(_FLAG, "").strip().lower() not in ("1", "true", "yes", "on")


try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

USE_NUMBA = _numba is not None and _numba_requested()


def jit(fn):
    """Compile ``fn`` in nopython mode when acceleration is enabled."""
    if USE_NUMBA:
        return _numba.njit(cache=True, nogil=True)(fn)
    return fn

