"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise the numpy
fallback takes over.  ``CASCADE_LAB_PURE=1`` forces the fallback.
"""
import os

from . import _pykernels

if os.environ.get("CASCADE_LAB_PURE"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _pykernels

BACKEND = _impl.BACKEND
cascade_batch = _impl.cascade_batch
pure = _pykernels
