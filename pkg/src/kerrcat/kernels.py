"""Kernel backend selection.

The compiled extension is used when it imports; setting
``KERRCAT_PURE_PYTHON=1`` forces the numpy fallback.
"""
import os

from . import _kernels_py

_FORCE_PY = os.environ.get("KERRCAT_PURE_PYTHON", "").lower() in ("1", "true", "yes")

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

if _compiled is not None and not _FORCE_PY:
    _impl = _compiled
    BACKEND = "cython"
else:
    _impl = _kernels_py
    BACKEND = "python"

wigner_laguerre = _impl.wigner_laguerre
snail_effective_delta = _impl.snail_effective_delta


def available_backends():
    return ["cython", "python"] if _compiled is not None else ["python"]


def get_backend(name):
    """Return the kernel module for ``name`` ('cython' or 'python')."""
    if name == "python":
        return _kernels_py
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")
