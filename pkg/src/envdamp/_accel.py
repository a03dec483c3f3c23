"""Backend selection for the numeric inner loops.

Set ``ENVDAMP_DISABLE_NUMBA=1`` to force the pure-numpy path. The numba
path is also skipped when numba cannot be imported.
"""
import os

_FLAG = "ENVDAMP_DISABLE_NUMBA"


def _env_disabled():
    return os.environ.get(_FLAG, "").strip().lower() in ("1", "true", "yes", "on")


try:
    from numba import njit as _njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _njit = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _env_disabled()


def njit(func):
    """Compile ``func`` with numba when available, otherwise return it unchanged."""
    if not HAVE_NUMBA:
        return func
    return _njit(cache=True, nogil=True)(func)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
