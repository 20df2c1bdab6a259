"""Optional numba acceleration.

Hot loops are written twice: an njit kernel and a vectorized numpy
equivalent.  The active default is chosen once at import time; setting
FLASHOPT_NO_NUMBA=1 in the environment forces the numpy path (useful on
machines without a working compiler, and for benchmarking one path
against the other).
"""

import os


def _flag_disabled() -> bool:
    value = os.environ.get("FLASHOPT_NO_NUMBA", "").strip().lower()
    return value in ("1", "true", "yes", "on")


HAVE_NUMBA = False
if not _flag_disabled():
    try:
        from numba import njit  # noqa: F401

        HAVE_NUMBA = True
    except ImportError:
        HAVE_NUMBA = False

if not HAVE_NUMBA:

    def njit(*args, **kwargs):
        """Decorator stand-in so kernel modules import unchanged."""

        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(func):
            return func

        return wrap


DEFAULT_BACKEND = "numba" if HAVE_NUMBA else "numpy"
