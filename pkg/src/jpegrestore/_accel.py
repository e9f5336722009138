"""Backend selection for the numeric kernels.

Set ``JPEGRESTORE_NUMBA=0`` before import to run every kernel on the
pure numpy / interpreted path. The default compiles with numba when it
is importable.
"""
import os

_FLAG = os.environ.get("JPEGRESTORE_NUMBA", "1").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None

USE_NUMBA = numba is not None and _FLAG not in ("0", "false", "no", "off")
BACKEND = "numba" if USE_NUMBA else "numpy"


def njit(func=None, **kwargs):
    """``numba.njit`` when the numba backend is active, identity otherwise."""
    options = {"cache": True, "nogil": True}
    options.update(kwargs)

    def wrap(f):
        if USE_NUMBA:
            return numba.njit(**options)(f)
        return f

    if func is None:
        return wrap
    return wrap(func)


def pick(numba_impl, numpy_impl):
    """Return the kernel matching the active backend."""
    return numba_impl if USE_NUMBA else numpy_impl
