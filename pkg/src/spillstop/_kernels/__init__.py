"""Backend selection for the hot numeric kernels.

Two interchangeable implementations exist:

* ``numba_backend`` -- @njit-compiled loops (default when numba imports)
* ``numpy_backend`` -- pure numpy/scipy fallback

Selection is controlled by the ``SPILLSTOP_BACKEND`` environment variable:
``auto`` (default), ``numba``, or ``numpy``.  The choice is made once at
import time; ``BACKEND`` records which implementation is active.
"""

from __future__ import annotations

import os

from . import numpy_backend

_requested = os.environ.get("SPILLSTOP_BACKEND", "auto").strip().lower()
if _requested not in ("auto", "numba", "numpy"):
    raise ValueError(
        f"SPILLSTOP_BACKEND must be auto|numba|numpy, got {_requested!r}")

HAS_NUMBA = False
if _requested in ("auto", "numba"):
    try:
        from . import numba_backend
        HAS_NUMBA = True
    except ImportError:
        numba_backend = None
        if _requested == "numba":
            raise

if HAS_NUMBA:
    BACKEND = "numba"
    _impl = numba_backend
else:
    BACKEND = "numpy"
    _impl = numpy_backend

pendulum_rk4 = _impl.pendulum_rk4
banded_cholesky = _impl.banded_cholesky
banded_solve = _impl.banded_solve
admm_chunk = _impl.admm_chunk

COS_SINGULAR = numpy_backend.COS_SINGULAR
