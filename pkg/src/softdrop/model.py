"""Cosine-normalized classifier on top of a small tanh encoder, with analytic
gradients, SGD with momentum, and the warm-up + cosine learning-rate schedule.
"""
import json
import math
from dataclasses import dataclass, field

import numpy as np

from softdrop import _backend
from softdrop.errors import ContractViolation, DegenerateInput, TrainingDiverged
from softdrop.tensor import EPS_NORM

DEFAULT_SCALE = 30.0


@dataclass
class Model:
    """Encoder ``f = W2 tanh(W1 x + b1) + b2`` (or ``W2 x + b2`` without a
    hidden layer) followed by logits ``s * cos(angle(f, Wc_j))``."""

    d_in: int
    d: int
    n_classes: int
    hidden: int = 32
    s: float = DEFAULT_SCALE
    seed: int = 0
    params: dict = field(default_factory=dict)

    @classmethod
    def init(cls, d_in, n_classes, d=16, hidden=32, s=DEFAULT_SCALE, seed=0):
        if n_classes < 2:
            raise ContractViolation("need at least two classes")
        if s <= 0:
            raise ContractViolation("scale s must be positive")
        rng = np.random.default_rng(seed)

        def uniform(shape, fan_in):
            bound = 1.0 / math.sqrt(fan_in)
            return rng.uniform(-bound, bound, size=shape)

        params = {}
        if hidden > 0:
            params["W1"] = uniform((hidden, d_in), d_in)
            params["b1"] = uniform((hidden,), d_in)
            params["W2"] = uniform((d, hidden), hidden)
            params["b2"] = uniform((d,), hidden)
        else:
            params["W2"] = uniform((d, d_in), d_in)
            params["b2"] = uniform((d,), d_in)
        Wc = uniform((n_classes, d), d)
        params["Wc"] = Wc / np.linalg.norm(Wc, axis=1, keepdims=True)
        return cls(d_in, d, n_classes, hidden, float(s), seed, params)

    def unpack(self):
        p = self.params
        return p.get("W1"), p.get("b1"), p["W2"], p["b2"], p["Wc"]

    def copy(self):
        return Model(self.d_in, self.d, self.n_classes, self.hidden, self.s,
                     self.seed, {k: v.copy() for k, v in self.params.items()})

    def with_params(self, params):
        return Model(self.d_in, self.d, self.n_classes, self.hidden, self.s,
                     self.seed, params)

    def to_dict(self, epoch=None):
        return {
            "d_in": self.d_in,
            "d": self.d,
            "n_classes": self.n_classes,
            "hidden": self.hidden,
            "s": self.s,
            "seed": self.seed,
            "epoch": epoch,
            "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                       for k, v in self.params.items()},
        }

    @classmethod
    def from_dict(cls, obj):
        params = {k: np.asarray(v["data"], dtype=np.float64).reshape(v["shape"])
                  for k, v in obj["params"].items()}
        return cls(obj["d_in"], obj["d"], obj["n_classes"], obj["hidden"],
                   obj["s"], obj["seed"], params)


def save_checkpoint(model, path, epoch=None):
    with open(path, "w") as fh:
        json.dump(model.to_dict(epoch), fh)


def load_checkpoint(path):
    with open(path) as fh:
        obj = json.load(fh)
    return Model.from_dict(obj), obj.get("epoch")


def _check_features(model, X):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.d_in:
        raise ContractViolation(
            f"feature dim {X.shape[1]} does not match encoder input {model.d_in}")
    return X


def _check_fnorm(fnorm):
    if fnorm.size and fnorm.min() <= EPS_NORM:
        raise DegenerateInput("encoder produced a near-zero feature vector")


def forward(model, X):
    """Cosine logits, shape ``(n, M)``; each entry lies in ``[-s, s]``."""
    X = _check_features(model, X)
    logits, fnorm = _backend.forward_logits(X, *model.unpack(), model.s)
    _check_fnorm(fnorm)
    return logits


def backward(model, X, grad_logits):
    """Gradients of ``sum(grad_logits * forward(model, X))`` per parameter."""
    X = _check_features(model, X)
    G = np.atleast_2d(np.asarray(grad_logits, dtype=np.float64))
    if G.shape != (X.shape[0], model.n_classes):
        raise ContractViolation(f"upstream gradient shape {G.shape} is wrong")
    gW1, gb1, gW2, gb2, gWc = _backend.backward(X, *model.unpack(), model.s, G)
    grads = {"W2": gW2, "b2": gb2, "Wc": gWc}
    if model.hidden > 0:
        grads["W1"], grads["b1"] = gW1, gb1
    return {k: grads[k] for k in model.params}


def encode(model, X):
    """Pre-normalization feature vectors ``f`` (used by tests and diagnostics)."""
    X = _check_features(model, X)
    W1, b1, W2, b2, _ = model.unpack()
    h = X if W1 is None else np.tanh(X @ W1.T + b1)
    return h @ W2.T + b2


@dataclass
class OptimizerState:
    base_lr: float = 0.01
    momentum: float = 0.9
    warmup: int = 5
    t_max: int = 80
    velocity: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.momentum < 1.0:
            raise ContractViolation("momentum must lie in [0, 1)")
        if self.t_max < 1 or self.warmup < 0:
            raise ContractViolation("need t_max >= 1 and warmup >= 0")


def sgd_step(state, params, grads, lr, normalize_rows=("Wc",)):
    """One momentum step: ``v = mu*v + g``; ``p = p - lr*v``.

    Rows of the parameters named in ``normalize_rows`` are rescaled to unit
    norm afterwards. Returns a new parameter dict; ``state.velocity`` is
    updated in place.
    """
    out = {}
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != p.shape:
            raise ContractViolation(f"gradient shape mismatch for {name}")
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged(f"non-finite gradient for {name}")
        v = state.velocity.get(name)
        v = g.copy() if v is None else state.momentum * v + g
        state.velocity[name] = v
        new = p - lr * v
        if name in normalize_rows:
            with np.errstate(over="ignore", invalid="ignore"):
                norms = np.linalg.norm(new, axis=-1, keepdims=True)
            if not np.all(np.isfinite(new)) or not np.all(np.isfinite(norms)):
                raise TrainingDiverged(f"{name} overflowed")
            if np.any(norms <= EPS_NORM):
                raise TrainingDiverged(f"row of {name} collapsed to zero")
            new = new / norms
        out[name] = new
    return out


def lr_at_epoch(state, t):
    """Linear warm-up to ``base_lr`` then cosine annealing to 0 at ``t_max``.

    A run shorter than the warm-up never leaves the linear ramp.
    """
    if not 1 <= t <= state.t_max:
        raise ContractViolation(f"epoch {t} outside [1, {state.t_max}]")
    if state.warmup > 0 and t <= state.warmup:
        return state.base_lr * t / state.warmup
    frac = (t - state.warmup) / (state.t_max - state.warmup)
    return state.base_lr * 0.5 * (1.0 + math.cos(math.pi * frac))
