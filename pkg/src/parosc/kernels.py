"""Kernel backend selection.

The compiled extension is used when importable; ``PAROSC_BACKEND=python``
forces the pure-Python fallback.  Both expose the same three functions and the
same status codes.
"""

import os

from . import _pykernels

STATUS_OK, STATUS_UNDERFLOW, STATUS_BUDGET, STATUS_RUNAWAY, STATUS_NONFINITE = 0, 1, 2, 3, 4

_forced = os.environ.get("PAROSC_BACKEND", "").strip().lower()

if _forced == "python":
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "compiled"
    except ImportError:
        if _forced == "compiled":
            raise
        _impl = _pykernels
        BACKEND = "python"

propagate_harmonic = _impl.propagate_harmonic
om_classical_trajectory = _impl.om_classical_trajectory
wigner_grid = _impl.wigner_grid


def get_backend(name=None):
    """Return the kernel module for ``name`` ('compiled' or 'python'), default: active one."""
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "compiled":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown backend {name!r}")
