"""Numba switch.

Set ``GWOT_DISABLE_NUMBA=1`` before import to route every kernel through its
pure-numpy / pure-Python path. Results are identical either way; only speed
changes. The compiled twins stay importable (and lazily compiled) so the
benchmark can compare both paths in one process.
"""
import os

try:
    import numba as _numba
except ImportError:  # pragma: no cover - depends on environment
    _numba = None

HAVE_NUMBA = _numba is not None
DISABLED_BY_ENV = os.environ.get("GWOT_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}
USE_NUMBA = HAVE_NUMBA and not DISABLED_BY_ENV


def njit(fn):
    """``numba.njit(cache=True)`` when numba is installed, identity otherwise."""
    if _numba is None:
        return fn
    return _numba.njit(cache=True)(fn)
