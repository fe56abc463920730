"""Selects the compiled kernel module, falling back to numpy."""

import os

if os.environ.get("NASBO_PURE_PYTHON"):
    from . import _core_py as core

    BACKEND = "python"
else:
    try:
        from . import _core as core

        BACKEND = "cython"
    except ImportError:
        from . import _core_py as core

        BACKEND = "python"

__all__ = ["BACKEND", "core"]
