"""NumPy implementations of the hot kernels.

This is the fallback used when the compiled extension is unavailable, and the
only path for encoders without a hidden layer (``W1 is None``). Every
function here has a twin with the same signature in ``_ckernels.pyx``.

Parameter layout: ``W1 (H, d_in)``, ``b1 (H,)``, ``W2 (d, H or d_in)``,
``b2 (d,)``, ``Wc (M, d)``. With ``W1 is None`` the encoder is the affine map
``f = W2 x + b2``; otherwise ``f = W2 tanh(W1 x + b1) + b2``.
"""
import numpy as np


def matmul(a, b):
    return np.dot(a, b)


def softmax_rows(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def prob_cross_entropy_rows(p_prev1, p_prev2, eps):
    return -np.sum(p_prev1 * np.log(np.maximum(p_prev2, eps)), axis=1)


def _encode(X, W1, b1, W2, b2):
    if W1 is None:
        h = X
    else:
        h = np.tanh(X @ W1.T + b1)
    return h, h @ W2.T + b2


def forward_logits(X, W1, b1, W2, b2, Wc, s):
    _, f = _encode(X, W1, b1, W2, b2)
    fnorm = np.sqrt(np.sum(f * f, axis=1))
    wnorm = np.sqrt(np.sum(Wc * Wc, axis=1))
    with np.errstate(invalid="ignore", divide="ignore"):  # caller rejects zero norms
        u = f / fnorm[:, None]
    wn = Wc / wnorm[:, None]
    return s * (u @ wn.T), fnorm


def backward(X, W1, b1, W2, b2, Wc, s, G):
    """Parameter gradients of ``sum(G * logits)``."""
    h, f = _encode(X, W1, b1, W2, b2)
    fnorm = np.sqrt(np.sum(f * f, axis=1))
    wnorm = np.sqrt(np.sum(Wc * Wc, axis=1))
    u = f / fnorm[:, None]
    wn = Wc / wnorm[:, None]

    dU = s * (G @ wn)
    dWn = s * (G.T @ u)
    df = (dU - u * np.sum(u * dU, axis=1, keepdims=True)) / fnorm[:, None]
    gWc = (dWn - wn * np.sum(wn * dWn, axis=1, keepdims=True)) / wnorm[:, None]

    gW2 = df.T @ h
    gb2 = df.sum(axis=0)
    if W1 is None:
        return None, None, gW2, gb2, gWc
    da = (df @ W2) * (1.0 - h * h)
    gW1 = da.T @ X
    gb1 = da.sum(axis=0)
    return gW1, gb1, gW2, gb2, gWc


def smooth_loss_grad(X, W1, b1, W2, b2, Wc, s, y, omega):
    """Per-sample smoothed losses and gradients of their batch mean."""
    n = X.shape[0]
    logits, fnorm = forward_logits(X, W1, b1, W2, b2, Wc, s)
    M = logits.shape[1]
    z = logits - logits.max(axis=1, keepdims=True)
    logZ = np.log(np.sum(np.exp(z), axis=1, keepdims=True))
    logp = z - logZ
    q = np.full((n, M), (1.0 - omega) / (M - 1))
    q[np.arange(n), y] = omega
    losses = -np.sum(q * logp, axis=1)
    G = (np.exp(logp) - q) / n
    grads = backward(X, W1, b1, W2, b2, Wc, s, G)
    return (losses,) + grads + (fnorm,)
