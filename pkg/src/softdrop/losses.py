"""Softmax cross-entropy, the cosine-normalized loss, label-smoothed loss and
the mean loss over a selected set, each returning analytic gradients."""
from dataclasses import dataclass

import numpy as np

from softdrop import _backend
from softdrop.errors import ContractViolation
from softdrop.model import _check_fnorm, backward, forward


@dataclass(frozen=True)
class SmoothingConfig:
    omega: float = 0.5
    n_classes: int = 20

    def __post_init__(self):
        if not 0.0 < self.omega <= 1.0:
            raise ContractViolation("omega must lie in (0, 1]")
        if self.n_classes < 2:
            raise ContractViolation("need at least two classes")

    @property
    def off_weight(self):
        return (1.0 - self.omega) / (self.n_classes - 1)

    def target(self, y):
        q = np.full(self.n_classes, self.off_weight)
        q[y] = self.omega
        return q


def _log_softmax(logits):
    z = logits - np.max(logits)
    return z - np.log(np.sum(np.exp(z)))


def softmax_ce(logits, y):
    """``-log softmax(logits)[y]`` and its gradient ``p - onehot(y)``."""
    logits = np.asarray(logits, dtype=np.float64)
    if not 0 <= y < logits.size:
        raise ContractViolation(f"label {y} outside [0, {logits.size})")
    logp = _log_softmax(logits)
    grad = np.exp(logp)
    grad[y] -= 1.0
    return float(-logp[y]), grad


def normalized_loss(model, x, y):
    """Cross-entropy on the cosine logits of one sample.

    Returns ``(loss, grads)`` where ``grads`` maps parameter names to arrays.
    """
    x = np.asarray(x, dtype=np.float64)[None, :]
    logits = forward(model, x)[0]
    loss, g = softmax_ce(logits, y)
    return loss, backward(model, x, g[None, :])


def smooth_loss(model, x, y, cfg):
    """``omega * L(x, y) + (1 - omega)/(M - 1) * sum_{j != y} L(x, j)``
    with ``L`` the normalized loss."""
    x = np.asarray(x, dtype=np.float64)[None, :]
    logits = forward(model, x)[0]
    M = logits.size
    if M != cfg.n_classes:
        raise ContractViolation("smoothing config class count != model classes")
    total = 0.0
    g = np.zeros(M)
    for j in range(M):
        w = cfg.omega if j == y else cfg.off_weight
        if w == 0.0:
            continue
        lj, gj = softmax_ce(logits, j)
        total += w * lj
        g += w * gj
    return total, backward(model, x, g[None, :])


def final_loss(model, X, y, cfg):
    """Mean smoothed loss over a (selected) set and its gradients."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] == 0:
        raise ContractViolation("selected set is empty")
    if y.shape != (X.shape[0],):
        raise ContractViolation("labels do not match samples")
    if X.shape[1] != model.d_in:
        raise ContractViolation("feature dim does not match encoder input")
    losses, gW1, gb1, gW2, gb2, gWc, fnorm = _backend.smooth_loss_grad(
        X, *model.unpack(), model.s, y, cfg.omega)
    _check_fnorm(fnorm)
    grads = {"W2": gW2, "b2": gb2, "Wc": gWc}
    if model.hidden > 0:
        grads["W1"], grads["b1"] = gW1, gb1
    return float(np.mean(losses)), {k: grads[k] for k in model.params}, losses
