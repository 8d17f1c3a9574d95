"""Kernel backend selection, done once at import.

``RECURLAB_BACKEND=python`` forces the numpy fallback; ``=cython`` makes a
missing extension an ImportError instead of a silent fallback.
"""

import os

_requested = os.environ.get("RECURLAB_BACKEND", "").strip().lower()

if _requested == "python":
    from recurlab import _kernels_py as kernels
    NAME = "python"
else:
    try:
        from recurlab import _kernels as kernels
        NAME = "cython"
    except ImportError:
        if _requested == "cython":
            raise
        from recurlab import _kernels_py as kernels
        NAME = "python"

__all__ = ["kernels", "NAME"]
