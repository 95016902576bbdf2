"""Kernel backend selection.

The compiled extension is used when it was built and
``SSL_BATCHLAB_PURE_PYTHON`` is not set; otherwise the numpy fallback.
"""
import os

from . import _pykernels

try:
    if os.environ.get("SSL_BATCHLAB_PURE_PYTHON"):
        raise ImportError("pure-python backend requested")
    from . import _ckernels as _impl
    BACKEND = "compiled"
except ImportError:
    _impl = _pykernels
    BACKEND = "python"

mlp_forward = _impl.mlp_forward
mlp_backward = _impl.mlp_backward
softmax_xent = _impl.softmax_xent
softmax_confidence = _impl.softmax_confidence


def available_backends():
    backends = {"python": _pykernels}
    try:
        from . import _ckernels
        backends["compiled"] = _ckernels
    except ImportError:
        pass
    return backends
