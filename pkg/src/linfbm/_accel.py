"""Numba switch.

Setting ``LINFBM_DISABLE_NUMBA=1`` (or running without numba installed)
selects the pure-numpy kernels. The flag is read once at import.
"""

import os

_disabled = os.environ.get("LINFBM_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _disabled:
        raise ImportError
    from numba import njit as _njit
    NUMBA_ENABLED = True
except ImportError:
    _njit = None
    NUMBA_ENABLED = False


def njit(func):
    """``numba.njit(cache=True)`` when enabled, identity otherwise."""
    if not NUMBA_ENABLED:
        return func
    return _njit(cache=True)(func)
