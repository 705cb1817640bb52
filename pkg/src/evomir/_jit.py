"""Numba switch for the hot kernels.

Set ``EVOMIR_DISABLE_JIT=1`` to run every kernel as plain Python over numpy
arrays.  The same source is used on both paths, so results are identical.
"""

import os

JIT_DISABLED = os.environ.get("EVOMIR_DISABLE_JIT", "0").lower() in ("1", "true", "yes")

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

JIT_ENABLED = numba is not None and not JIT_DISABLED

NUMBA_OPTS = dict(cache=True, nogil=True)


def njit(func):
    if not JIT_ENABLED:
        return func
    return numba.njit(func, **NUMBA_OPTS)
