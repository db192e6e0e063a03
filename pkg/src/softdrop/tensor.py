"""Dense numeric primitives: matrix product, normalization, softmax, and a
central finite-difference gradient used as a test oracle.

Matrices are plain float64 ``numpy`` arrays in C (row-major) order.
"""
import numpy as np

from softdrop import _backend
from softdrop.errors import ContractViolation, DegenerateInput

EPS_NORM = 1e-12


def as_matrix(a):
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ContractViolation(f"expected a 2-D matrix, got shape {a.shape}")
    return a


def matmul(a, b):
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ContractViolation(f"dimension mismatch: {a.shape} x {b.shape}")
    return _backend.matmul(a, b)


def l2_normalize(v):
    v = np.asarray(v, dtype=np.float64)
    n = float(np.sqrt(np.dot(v, v)))
    if not n > EPS_NORM:
        raise DegenerateInput(f"cannot normalize vector with norm {n:g}")
    return v / n


def softmax(logits):
    """Softmax of a 1-D logit vector (max-subtracted)."""
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1 or z.size < 2:
        raise ContractViolation("softmax expects a vector of length >= 2")
    if not np.all(np.isfinite(z)):
        raise ContractViolation("softmax input contains non-finite values")
    return _backend.softmax_rows(z[None, :])[0]


def softmax_rows(logits):
    z = as_matrix(logits)
    if not np.all(np.isfinite(z)):
        raise ContractViolation("softmax input contains non-finite values")
    return _backend.softmax_rows(z)


def finite_diff_gradient(f, x, h=1e-6):
    """Central-difference gradient of scalar ``f`` at ``x`` (any shape)."""
    if not h > 0:
        raise ContractViolation("step h must be positive")
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        g[i] = (fp - fm) / (2.0 * h)
    return grad
