"""Backend selection for the EM kernel.

The compiled extension is used when it imports; set ``ZCURVE_FDR_PURE=1``
to force the numpy implementation.
"""
import os

from . import _pykernels

BACKEND = "python"

if os.environ.get("ZCURVE_FDR_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
else:
    _impl = _pykernels

em_weights = _impl.em_weights
mixture_loglik = _impl.mixture_loglik


def get_backend(name):
    """Return the kernel module for ``name`` ('python' or 'cython')."""
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {name!r}")
