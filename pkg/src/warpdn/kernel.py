"""Backend selection for the cell-propagation kernel.

The compiled extension is used when it imports; setting ``WARPDN_PURE=1``
forces the numpy fallback.  :data:`BACKEND` names the active implementation.
"""
from __future__ import annotations

import os

from . import _kernel_py

_compiled = None
if os.environ.get("WARPDN_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernel as _compiled  # type: ignore[attr-defined]
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"
_impl = _compiled if _compiled is not None else _kernel_py


def backends() -> dict:
    """All importable implementations keyed by name."""
    out = {"python": _kernel_py}
    if _compiled is not None:
        out["cython"] = _compiled
    return out


def transfer(moments, zs):
    """Transfer matrices for the cell moments ``(P0, P1, Q0, Q1, R0, R1)``."""
    return _impl.transfer(*moments, zs)


def propagate(moments, z, y0, reverse: bool = False):
    """Node values of one solution; see :func:`warpdn._kernel_py.propagate`."""
    return _impl.propagate(*moments, z, y0, reverse)
