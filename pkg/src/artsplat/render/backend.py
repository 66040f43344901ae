"""Selects the rasterization kernels at import time.

The compiled extension is used when it imports; setting ``ARTSPLAT_PURE_PYTHON=1``
forces the numpy implementation.
"""
import importlib
import os

BACKENDS = ("cython", "python")


def load_backend(name):
    if name == "cython":
        return importlib.import_module("artsplat.render._kernels")
    if name == "python":
        return importlib.import_module("artsplat.render._kernels_py")
    raise ValueError(f"unknown backend {name!r}")


def _select():
    if os.environ.get("ARTSPLAT_PURE_PYTHON", "") not in ("", "0"):
        return "python", load_backend("python")
    try:
        return "cython", load_backend("cython")
    except ImportError:
        return "python", load_backend("python")


BACKEND_NAME, kernels = _select()
