"""Kernel backend selection.

The compiled extension is used when it imports; set ``GIBBSMIX_PURE_PYTHON=1``
to force the fallback.  ``BACKEND`` names the module actually in use.
"""
import os

from . import _pycore

if os.environ.get("GIBBSMIX_PURE_PYTHON"):
    kernels = _pycore
else:
    try:
        from . import _core as kernels
    except ImportError:  # extension not built
        kernels = _pycore

BACKEND = "cython" if kernels is not _pycore else "python"

FAM_GAUSSIAN = _pycore.FAM_GAUSSIAN
FAM_NORMAL_GAMMA = _pycore.FAM_NORMAL_GAMMA
FAM_EXPONENTIAL = _pycore.FAM_EXPONENTIAL
FAM_POISSON = _pycore.FAM_POISSON
FAM_GEOMETRIC = _pycore.FAM_GEOMETRIC


def get_kernels(name=None):
    """Return the kernel module for ``name`` ("cython" or "python")."""
    if name is None:
        return kernels
    if name == "python":
        return _pycore
    if name == "cython":
        from . import _core
        return _core
    raise ValueError(f"unknown backend {name!r}")
