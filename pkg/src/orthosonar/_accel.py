"""Numba availability switch.

Hot loops are written twice: an explicit loop decorated with :func:`njit`
and a vectorized numpy twin. ``USE_NUMBA`` picks which one the public
functions dispatch to. Set ``ORTHOSONAR_DISABLE_NUMBA=1`` to force the numpy
path (useful for debugging, profiling, or platforms without numba).
"""

import os

_FLAG = os.environ.get("ORTHOSONAR_DISABLE_NUMBA", "0").strip().lower()
DISABLED_BY_ENV = _FLAG not in ("", "0", "false", "no", "off")

try:
    import numba

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    NUMBA_AVAILABLE = False

USE_NUMBA = NUMBA_AVAILABLE and not DISABLED_BY_ENV


def njit(func=None, **kwargs):
    """``numba.njit(cache=True)`` when numba is importable, identity otherwise.

    Loop kernels stay jitted even when ``USE_NUMBA`` is off so the benchmark
    can still time both paths side by side.
    """
    kwargs.setdefault("cache", True)

    def decorate(f):
        if not NUMBA_AVAILABLE:
            return f
        return numba.njit(**kwargs)(f)

    if func is not None:
        return decorate(func)
    return decorate


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
