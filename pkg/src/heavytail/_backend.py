"""Select the stable-kernel implementation at import time.

The compiled module is used when importable. Setting ``HEAVYTAIL_BACKEND=python``
forces the pure-Python fallback (useful for testing the twin on a machine with
a compiler).
"""
from __future__ import annotations

import os

from . import _pykernels

python_kernels = _pykernels

try:
    from . import _kernels as compiled_kernels
except ImportError:  # extension not built
    compiled_kernels = None

if compiled_kernels is not None and os.environ.get("HEAVYTAIL_BACKEND", "").lower() != "python":
    kernels = compiled_kernels
    name = "cython"
else:
    kernels = _pykernels
    name = "python"


def get(backend: str | None = None):
    """Return the kernel module for ``backend`` ("cython", "python", or None for the default)."""
    if backend is None:
        return kernels
    if backend == "python":
        return _pykernels
    if backend == "cython":
        if compiled_kernels is None:
            raise ImportError("compiled kernels are not built; reinstall with a C compiler")
        return compiled_kernels
    raise ValueError(f"unknown backend {backend!r}")
