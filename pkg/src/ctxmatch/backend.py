"""Kernel backend selection.

The hot inner loops exist twice: numba-compiled (kernels_numba) and pure
NumPy (kernels_numpy). Selection is controlled by the CTXMATCH_BACKEND
environment variable: "numba", "numpy" or "auto" (default; numba if it
imports, numpy otherwise). benchmarks/bench_backends.py compares the two.
"""

from __future__ import annotations

import os
import warnings

_kernels = None
_name = None


def _select():
    global _kernels, _name
    if _kernels is not None:
        return _kernels
    choice = os.environ.get("CTXMATCH_BACKEND", "auto").lower()
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError("CTXMATCH_BACKEND must be auto, numba or numpy, got %r" % choice)
    if choice in ("auto", "numba"):
        try:
            from ctxmatch import kernels_numba as mod
        except ImportError:
            if choice == "numba":
                raise
            warnings.warn("numba unavailable, falling back to the NumPy kernels")
            from ctxmatch import kernels_numpy as mod
    else:
        from ctxmatch import kernels_numpy as mod
    _kernels = mod
    _name = mod.NAME
    return mod


def get_kernels():
    return _select()


def backend_name() -> str:
    _select()
    return _name


def set_num_threads(n: int) -> None:
    """Limit numba's thread pool; no-op for the NumPy backend."""
    mod = _select()
    if mod.NAME == "numba":
        import numba

        numba.set_num_threads(max(1, n))
