"""Backend selection for the inner loops.

The compiled Cython core is used when it imports; otherwise the numpy
fallback.  Set ``LYAPROD_BACKEND=python`` to force the fallback.
"""

import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels

_requested = os.environ.get("LYAPROD_BACKEND", "").strip().lower()
if _requested and _requested not in ("python", "cython"):
    raise ImportError(f"LYAPROD_BACKEND must be 'python' or 'cython', got {_requested!r}")
if _requested == "cython" and _ckernels is None:
    raise ImportError("LYAPROD_BACKEND=cython but lyaprod._ckernels is not built")

BACKEND = _requested or ("cython" if _ckernels is not None else "python")


def available():
    return sorted(_BACKENDS)


def get(name=None):
    """Kernel module for ``name`` (default: the selected backend)."""
    name = BACKEND if name is None else name
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} unavailable; have {available()}") from None
