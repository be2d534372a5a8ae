"""Kernel backend selection.

The compiled extension is used when it imports; set ``EDGEFORM_PURE_PYTHON=1``
to force the numpy fallback.
"""

import os

from . import _pykernels

STATUS_OK = _pykernels.STATUS_OK
STATUS_NOT_CONVERGED = _pykernels.STATUS_NOT_CONVERGED
STATUS_AVOIDANCE = _pykernels.STATUS_AVOIDANCE
STATUS_INDEFINITE = _pykernels.STATUS_INDEFINITE

try:
    from . import _ckernels as _compiled
except ImportError:
    _compiled = None

_force_python = os.environ.get("EDGEFORM_PURE_PYTHON", "").lower() in ("1", "true", "yes")
_impl = _pykernels if _force_python or _compiled is None else _compiled
BACKEND = "compiled" if _impl is _compiled else "python"


def get_backend(name=None):
    """Return the kernel module for ``name`` (``"compiled"``, ``"python"`` or the default)."""
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "compiled":
        if _compiled is None:
            raise ImportError("compiled kernels are not available")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def edge_solve(*args, backend=None):
    return get_backend(backend).edge_solve(*args)


def descent_rounds(*args, backend=None):
    return get_backend(backend).descent_rounds(*args)
