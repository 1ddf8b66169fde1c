"""Convolution kernel backends.

The compiled Cython extension is preferred; a pure-NumPy fallback with the
same function surface is selected automatically when the extension is not
built. Override with CROSSTALK_KERNELS=native|fallback (``native`` raises if
the extension is missing, which is useful in CI).
"""

from __future__ import annotations

import os
from types import ModuleType

from . import fallback as _fallback


def _load() -> ModuleType:
    choice = os.environ.get("CROSSTALK_KERNELS", "auto").lower()
    if choice not in ("auto", "native", "fallback"):
        raise ValueError(f"CROSSTALK_KERNELS must be auto|native|fallback, got {choice!r}")
    if choice == "fallback":
        return _fallback
    try:
        from . import native as _native  # type: ignore[attr-defined]
        return _native
    except ImportError:
        if choice == "native":
            raise
        return _fallback


_impl = _load()

BACKEND_NAME: str = _impl.BACKEND_NAME
conv2d_forward = _impl.conv2d_forward
conv2d_backward = _impl.conv2d_backward
conv_grid_forward = _impl.conv_grid_forward
conv_grid_backward = _impl.conv_grid_backward
upconv1d_forward = _impl.upconv1d_forward
upconv1d_backward = _impl.upconv1d_backward


def available_backends() -> dict[str, ModuleType]:
    """All importable backends, keyed by name (for tests and benchmarks)."""
    out = {"fallback": _fallback}
    try:
        from . import native as _native  # type: ignore[attr-defined]
        out["native"] = _native
    except ImportError:
        pass
    return out
