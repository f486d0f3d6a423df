"""Kernel selection: the compiled extension when importable, numpy otherwise.

Set ``NNOBSERVER_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

kernels = _kernels_py
BACKEND = "python"

if os.environ.get("NNOBSERVER_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build
        kernels = _kernels_py
