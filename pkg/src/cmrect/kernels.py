"""Kernel backend selection.

The compiled extension is used when it was built; set ``CMRECT_PURE_PYTHON=1``
to force the numpy fallback.
"""

import os

from . import _fallback

BACKEND = "python"
if os.environ.get("CMRECT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _fallback
else:
    _impl = _fallback

mos_stamp = _impl.mos_stamp
solve = _impl.solve
