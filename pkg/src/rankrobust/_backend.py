"""Selects the compiled training kernel when it is built, else the numpy one.

Set ``RANKROBUST_PURE_PYTHON=1`` to force the fallback.
"""

import os

if os.environ.get("RANKROBUST_PURE_PYTHON", "") not in ("", "0"):
    from . import _pykernels as _impl

    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:
        from . import _pykernels as _impl

        BACKEND = "python"

sgd_epoch = _impl.sgd_epoch
