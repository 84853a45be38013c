"""Kernel backend selection.

The compiled extension ``ldmlab._ckernels`` is used when it imports;
otherwise the NumPy fallback in ``ldmlab._kernels_py``. Set
``LDMLAB_PURE_PYTHON=1`` to force the fallback.
"""
import os

import numpy as np

from . import _kernels_py

_py = _kernels_py

if os.environ.get("LDMLAB_PURE_PYTHON", "") not in ("", "0"):
    _impl = _py
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _py
        BACKEND = "python"


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def conv2d_forward(x, w):
    return _impl.conv2d_forward(_c(x), _c(w))


def conv2d_backward(x, w, g):
    return _impl.conv2d_backward(_c(x), _c(w), _c(g))


def maxpool2d_forward(x):
    return _impl.maxpool2d_forward(_c(x))


def maxpool2d_backward(g, argmax, shape):
    if _impl is _py:
        return _py.maxpool2d_backward(g, argmax, shape)
    return _impl.maxpool2d_backward(_c(g), np.ascontiguousarray(argmax, dtype=np.int8), shape)


def js_objective(X, Xs, W1, b1, w2, b2):
    """Returns ``(objective, (gX, gXs, gW1, gb1, gw2, gb2))``."""
    b2 = float(np.asarray(b2).reshape(-1)[0])
    if _impl is _py:
        return _py.js_objective(X, Xs, W1, b1, w2, b2)
    return _impl.js_objective(_c(X), _c(Xs), _c(W1), _c(b1), _c(np.reshape(w2, -1)), b2)
