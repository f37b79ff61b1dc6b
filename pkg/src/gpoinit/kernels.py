"""Kernel backend selection.

The compiled extension is preferred; the numpy fallback is used when the
extension is missing or ``GPOINIT_PURE_PYTHON`` is set to a non-empty value
other than ``0``.
"""

import importlib
import os

from . import _kernels_py


def _load_compiled():
    if os.environ.get("GPOINIT_PURE_PYTHON", "") not in ("", "0"):
        return None
    try:
        return importlib.import_module("gpoinit._kernels")
    except ImportError:
        return None


_compiled = _load_compiled()
_impl = _compiled if _compiled is not None else _kernels_py

BACKEND = "cython" if _compiled is not None else "python"

gpo_linearize = _impl.gpo_linearize
ba_linearize = _impl.ba_linearize
accumulate_normal_equations = _impl.accumulate_normal_equations


def available_backends():
    """Map of backend name -> module, for tests and benchmarks."""
    out = {"python": _kernels_py}
    compiled = _compiled
    if compiled is None:
        try:
            compiled = importlib.import_module("gpoinit._kernels")
        except ImportError:
            compiled = None
    if compiled is not None:
        out["cython"] = compiled
    return out
