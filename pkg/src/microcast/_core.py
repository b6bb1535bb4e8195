"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise the numpy fallback.
Set ``MICROCAST_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

from microcast import _pykernels

if os.environ.get("MICROCAST_PURE_PYTHON", "") not in ("", "0"):
    _ext = None
else:
    try:
        from microcast import _kernels as _ext
    except ImportError:  # extension not built
        _ext = None

BACKEND = "cython" if _ext is not None else "python"
_impl = _ext if _ext is not None else _pykernels

haar_atrous = _impl.haar_atrous
bin_mean = _impl.bin_mean
fill_runs = _impl.fill_runs
