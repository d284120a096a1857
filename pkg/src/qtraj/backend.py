"""Kernel backend selection.

The compiled Cython kernels are preferred when importable; the pure-numpy
module is the fallback.  Override with the environment variable
``QTRAJ_BACKEND=compiled`` or ``QTRAJ_BACKEND=python`` (requesting
``compiled`` when the extension is missing raises at import of this module).

Both backends implement the same two entry points with identical semantics
and draw accounting; results are bitwise-reproducible per backend.
"""
from __future__ import annotations

import os

from . import _kernels_py

_requested = os.environ.get("QTRAJ_BACKEND", "").strip().lower()

if _requested not in ("", "compiled", "python"):
    raise RuntimeError(
        f"QTRAJ_BACKEND={_requested!r} not recognized (use 'compiled' or 'python')"
    )

_kernels_cy = None
if _requested in ("", "compiled"):
    try:
        from . import _kernels_cy  # type: ignore[no-redef]
    except ImportError:
        if _requested == "compiled":
            raise RuntimeError(
                "QTRAJ_BACKEND=compiled but the compiled kernel extension "
                "is not available"
            )

if _requested == "python" or _kernels_cy is None:
    BACKEND_NAME = "python"
    _impl = _kernels_py
else:
    BACKEND_NAME = "compiled"
    _impl = _kernels_cy

first_order_run = _impl.first_order_run
norm_threshold_run = _impl.norm_threshold_run


def get_backend(name: str | None = None):
    """Return (backend_name, module) — the active one or an explicit choice."""
    if name in (None, ""):
        return BACKEND_NAME, _impl
    if name == "python":
        return "python", _kernels_py
    if name == "compiled":
        if _kernels_cy is None:
            raise RuntimeError("compiled kernel extension not available")
        return "compiled", _kernels_cy
    raise ValueError(f"unknown backend {name!r}")
