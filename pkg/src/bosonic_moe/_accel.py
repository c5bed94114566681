"""Backend switch for the hot loops.

Set ``BOSONIC_MOE_NUMBA=0`` to run the pure-numpy kernels even when numba is
installed.  Individual calls can still pick a backend explicitly.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_OFF = {"0", "false", "no", "off"}

NUMBA_AVAILABLE = numba is not None
NUMBA_ENABLED = NUMBA_AVAILABLE and os.environ.get("BOSONIC_MOE_NUMBA", "1").strip().lower() not in _OFF


def jit(fn):
    """``numba.njit`` when numba is importable, identity otherwise."""
    if numba is None:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


def resolve(backend=None) -> str:
    if backend is None:
        return "numba" if NUMBA_ENABLED else "numpy"
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not NUMBA_AVAILABLE:
        raise RuntimeError("numba backend requested but numba is not installed")
    return backend
