"""Backend selection for the inner-loop kernels.

The compiled extension is used when it was built; set ``XADV_PURE_PYTHON=1``
to force the numpy implementation.
"""

import os

from . import _kernels_py

if os.environ.get("XADV_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = _impl.BACKEND
sign_step = _impl.sign_step
clip_linf = _impl.clip_linf
blur_separable = _impl.blur_separable

__all__ = ["BACKEND", "sign_step", "clip_linf", "blur_separable", "_kernels_py"]
