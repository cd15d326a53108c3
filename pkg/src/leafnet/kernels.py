"""Kernel backend selection.

The compiled extension is used when it was built; otherwise the numpy
implementation takes over. Set ``LEAFNET_BACKEND=numpy`` to force the
fallback (``cython`` to require the extension).
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _pykernels


def _load() -> ModuleType:
    choice = os.environ.get("LEAFNET_BACKEND", "auto").lower()
    if choice == "numpy":
        return _pykernels
    try:
        from . import _ckernels
    except ImportError:
        if choice == "cython":
            raise
        return _pykernels
    return _ckernels


_impl = _load()
BACKEND: str = _impl.BACKEND


def available_backends() -> dict[str, ModuleType]:
    out = {"numpy": _pykernels}
    try:
        from . import _ckernels
        out["cython"] = _ckernels
    except ImportError:
        pass
    return out


def conv2d_forward(x, w, b):
    return _impl.conv2d_forward(x, w, b)


def conv2d_backward(x, w, gout, need_input_grad=True):
    return _impl.conv2d_backward(x, w, gout, need_input_grad)


def maxpool_forward(x):
    return _impl.maxpool_forward(x)


def maxpool_backward(mask, gout, h, w):
    return _impl.maxpool_backward(mask, gout, h, w)


def conv2d_forward_direct(x, w, b):
    """Direct (non patch-matrix) convolution, kept as the reference route."""
    return _impl.conv2d_forward_direct(x, w, b)
