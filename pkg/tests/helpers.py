import numpy as np

from softdrop.model import Model
from softdrop.tensor import finite_diff_gradient


def rel_err(a, b):
    a, b = np.ravel(a), np.ravel(b)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def param_fd(model, loss_of_model, name, h=1e-6):
    """Finite-difference gradient of ``loss_of_model`` w.r.t. one parameter."""

    def f(value):
        params = dict(model.params)
        params[name] = value
        return loss_of_model(model.with_params(params))

    return finite_diff_gradient(f, model.params[name], h)


def random_model(seed, d_in=5, M=4, d=3, hidden=4, s=4.0):
    """Small model with non-unit classifier rows so their gradient is exercised.

    The scale is kept small: at s=30 with d=3 random logits saturate and the
    central-difference oracle drowns in round-off.
    """
    m = Model.init(d_in, M, d=d, hidden=hidden, s=s, seed=seed)
    rng = np.random.default_rng(seed + 1000)
    m.params["Wc"] = m.params["Wc"] * rng.uniform(0.5, 2.0, size=(M, 1))
    return m
