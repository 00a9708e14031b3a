"""Kernel backend selection.

Hot loops are written once as plain Python over numpy arrays and compiled
with numba when it is importable. Setting ``POWLAB_DISABLE_NUMBA=1`` forces
the interpreted/numpy path, which is what the benchmark compares against.
"""

import os

_FLAG = "POWLAB_DISABLE_NUMBA"

NUMBA_DISABLED = os.environ.get(_FLAG, "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if NUMBA_DISABLED:
        raise ImportError(f"{_FLAG} is set")
    import numba as _numba
except ImportError:
    _numba = None

HAVE_NUMBA = _numba is not None
BACKEND = "numba" if HAVE_NUMBA else "python"


def kernel(func):
    """Compile ``func`` with ``numba.njit`` if available, else return it unchanged.

    The original function stays reachable as ``.py_func`` in both cases.
    """
    if HAVE_NUMBA:
        return _numba.njit(cache=True, nogil=True)(func)
    func.py_func = func
    return func
