"""Numba switch. Set ``DTLSDUTY_NUMBA=0`` to force the pure numpy/Python kernels."""

import os

_flag = os.environ.get("DTLSDUTY_NUMBA", "1").strip().lower()

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

USE_NUMBA = _numba is not None and _flag not in ("0", "false", "no", "off")


def njit(fn):
    """Compile ``fn`` with numba when available; identity otherwise."""
    if _numba is None:
        return fn
    return _numba.njit(cache=True, nogil=True)(fn)


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
