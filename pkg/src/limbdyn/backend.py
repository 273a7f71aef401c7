"""Numba/NumPy backend selection for the hot numeric kernels.

The package ships every hot kernel in two flavours: a numba ``@njit``
compilation and the plain NumPy function it was compiled from.  Which
flavour runs by default is decided once at import time:

* ``LIMBDYN_BACKEND=numpy`` forces the pure-NumPy path,
* ``LIMBDYN_BACKEND=numba`` demands the compiled path (error if numba
  is missing),
* unset/auto: numba when importable, NumPy otherwise.

``benchmarks/benchmark_backends.py`` compares the two paths.
"""

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAVE_NUMBA = False

_ENV_VAR = "LIMBDYN_BACKEND"


def _resolve_backend() -> str:
    raw = os.environ.get(_ENV_VAR, "auto").strip().lower()
    if raw in ("", "auto"):
        return "numba" if HAVE_NUMBA else "numpy"
    if raw == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError(
                f"{_ENV_VAR}=numba requested but numba is not importable"
            )
        return "numba"
    if raw == "numpy":
        return "numpy"
    raise RuntimeError(f"unknown {_ENV_VAR} value {raw!r} (use numba|numpy|auto)")


BACKEND = _resolve_backend()
USING_NUMBA = BACKEND == "numba"


def jit(func):
    """Compile ``func`` with numba when available, else return it unchanged.

    Compilation happens whenever numba is importable (so both paths can be
    benchmarked in one process); the active default is still ``BACKEND``.
    """
    if HAVE_NUMBA:
        return numba.njit(cache=True)(func)
    return func
