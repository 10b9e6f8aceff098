"""Optional numba acceleration.

Set ``OFFLOAD_ACO_JIT=0`` to run the hot kernels as plain Python/numpy.
The flag is read once, at import time.
"""

import os
from typing import Any, Callable

_FLAG = os.environ.get("OFFLOAD_ACO_JIT", "1").strip().lower()

try:
    from numba import njit as _numba_njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba_njit = None

USE_NUMBA = _numba_njit is not None and _FLAG not in ("0", "false", "no", "off")


def njit(*args: Any, **kwargs: Any) -> Callable:
    """``numba.njit`` when enabled, identity decorator otherwise."""
    if USE_NUMBA:
        return _numba_njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f
