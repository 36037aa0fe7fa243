"""Numba switch.

Kernels are compiled with ``numba.njit`` when numba is importable and the
environment variable ``MAXSPAN_SIM_NUMBA`` is not ``0``. Otherwise every
kernel dispatches to its vectorised numpy twin.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

NUMBA_AVAILABLE = numba is not None
USE_NUMBA = NUMBA_AVAILABLE and os.environ.get("MAXSPAN_SIM_NUMBA", "1") != "0"


def njit(func=None, **options):
    """``numba.njit(cache=True)`` when numba is importable, else the identity."""
    if func is None:
        return lambda f: njit(f, **options)
    if numba is None:
        return func
    return numba.njit(cache=True, nogil=True, **options)(func)
