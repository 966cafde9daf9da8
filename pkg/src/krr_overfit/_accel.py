"""Optional numba acceleration.

Set ``KRR_OVERFIT_DISABLE_NUMBA=1`` before import to run every kernel through
its pure numpy/python path instead.
"""
import os

_FLAG = "KRR_OVERFIT_DISABLE_NUMBA"


def _numba_requested():
    return os.environ.get(_FLAG, "").strip().lower() not in ("1", "true", "yes", "on")


try:
    if not _numba_requested():
        raise ImportError("numba disabled by environment")
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:
    _njit = None
    HAVE_NUMBA = False


def jit(fn):
    """``numba.njit(cache=True)`` when acceleration is on, identity otherwise."""
    if HAVE_NUMBA:
        return _njit(cache=True)(fn)
    return fn


def backend():
    return "numba" if HAVE_NUMBA else "numpy"
