"""Selects the trajectory-loop backend at import time.

The compiled extension is preferred; the pure-Python loop is the fallback.
Set ROUTESIGNAL_PURE=1 to force the fallback (used by the benchmark and
the cross-backend tests).
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("ROUTESIGNAL_PURE"):
    BACKEND = "python"
    trajectory_loop = _kernels_py.trajectory_loop
else:
    try:
        from . import _kernels

        BACKEND = "compiled"
        trajectory_loop = _kernels.trajectory_loop
    except ImportError:
        BACKEND = "python"
        trajectory_loop = _kernels_py.trajectory_loop
