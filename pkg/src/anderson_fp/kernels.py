"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
fallback is used. Set ``ANDERSON_FP_KERNELS=python`` to force the fallback.
"""

import os

from . import _pykernels

if os.environ.get("ANDERSON_FP_KERNELS", "").lower() == "python":
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl

        BACKEND = "compiled"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

thomas_solve = _impl.thomas_solve
assemble_quasilinear = _impl.assemble_quasilinear


def backends():
    """Return ``{name: module}`` for every importable backend."""
    found = {"python": _pykernels}
    try:
        from . import _kernels

        found["compiled"] = _kernels
    except ImportError:
        pass
    return found
