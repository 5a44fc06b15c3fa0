"""Kernel backend selection.

Hot numeric kernels ship in two variants: numba @njit loops and pure
numpy. The active variant is chosen once at import time from the
PRESCIENT_BACKEND environment variable ("numba" or "numpy"). Default is
numba when importable, numpy otherwise. Both variants of every kernel
stay importable so tests and benchmarks can compare them directly.
"""

import os

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


def _resolve_backend() -> str:
    requested = os.environ.get("PRESCIENT_BACKEND", "").strip().lower()
    if requested not in ("", "numba", "numpy"):
        raise ValueError(
            f"PRESCIENT_BACKEND must be 'numba' or 'numpy', got {requested!r}"
        )
    if requested == "numba" and not HAS_NUMBA:
        raise ValueError("PRESCIENT_BACKEND=numba but numba is not importable")
    if requested:
        return requested
    return "numba" if HAS_NUMBA else "numpy"


BACKEND = _resolve_backend()
USE_NUMBA = BACKEND == "numba"


def active_backend() -> str:
    """Name of the kernel backend selected for this process."""
    return BACKEND
