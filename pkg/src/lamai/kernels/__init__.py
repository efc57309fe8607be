"""Hot per-symbol kernels with a compiled backend and a numpy fallback.

The compiled extension is used when it was built; set the environment
variable ``LAMAI_PURE_PYTHON=1`` to force the numpy implementation.
"""

import os

from lamai.kernels import _pykernels

try:
    if os.environ.get("LAMAI_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-Python backend requested")
    from lamai.kernels import _ckernels as _backend

    BACKEND = "cython"
except ImportError:
    _backend = _pykernels
    BACKEND = "python"

denoise = _backend.denoise
psi_mse = _backend.psi_mse
map_decide = _backend.map_decide

__all__ = ["denoise", "psi_mse", "map_decide", "BACKEND"]
