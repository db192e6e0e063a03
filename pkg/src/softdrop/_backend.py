"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the NumPy fallback.
Set ``SOFTDROP_PURE_PYTHON=1`` to force the fallback.
"""
import os

import numpy as np

from softdrop import _pykernels

pykernels = _pykernels
ckernels = None
if os.environ.get("SOFTDROP_PURE_PYTHON", "").lower() not in ("1", "true", "yes"):
    try:
        from softdrop import _ckernels as ckernels
    except ImportError:  # extension not built
        ckernels = None

BACKEND = "cython" if ckernels is not None else "python"
_active = ckernels if ckernels is not None else pykernels


def get_backend():
    return BACKEND


def set_backend(name):
    """Switch kernels at runtime; ``name`` is ``"cython"`` or ``"python"``."""
    global BACKEND, _active
    if name == "cython":
        if ckernels is None:
            raise ImportError("compiled kernels are not available")
        _active = ckernels
    elif name == "python":
        _active = pykernels
    else:
        raise ValueError(f"unknown backend {name!r}")
    BACKEND = name


def available_backends():
    return ["python"] + (["cython"] if ckernels is not None else [])


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _pick(W1):
    # the compiled kernels only cover the one-hidden-layer encoder
    return pykernels if W1 is None else _active


def matmul(a, b):
    return _active.matmul(_c(a), _c(b))


def softmax_rows(logits):
    return _active.softmax_rows(_c(logits))


def prob_cross_entropy_rows(p_prev1, p_prev2, eps):
    return _active.prob_cross_entropy_rows(_c(p_prev1), _c(p_prev2), float(eps))


def _params(W1, b1, W2, b2, Wc):
    if W1 is None:
        return None, None, _c(W2), _c(b2), _c(Wc)
    return _c(W1), _c(b1), _c(W2), _c(b2), _c(Wc)


def forward_logits(X, W1, b1, W2, b2, Wc, s):
    return _pick(W1).forward_logits(_c(X), *_params(W1, b1, W2, b2, Wc), float(s))


def backward(X, W1, b1, W2, b2, Wc, s, G):
    return _pick(W1).backward(_c(X), *_params(W1, b1, W2, b2, Wc), float(s), _c(G))


def smooth_loss_grad(X, W1, b1, W2, b2, Wc, s, y, omega):
    y = np.ascontiguousarray(y, dtype=np.int64)
    return _pick(W1).smooth_loss_grad(
        _c(X), *_params(W1, b1, W2, b2, Wc), float(s), y, float(omega)
    )
