"""Sample selection: probability cross-entropy scores, the ramped drop rate,
global / per-mini-batch / loss-based selection and the overlap-rate metric."""
import math
from dataclasses import dataclass

import numpy as np

from softdrop import _backend
from softdrop.errors import ContractViolation

EPS_LOG = 1e-12


@dataclass(frozen=True)
class DropSchedule:
    tau: float = 0.25
    t_k: int = 10

    def __post_init__(self):
        if not 0.0 <= self.tau < 1.0:
            raise ContractViolation("tau must lie in [0, 1)")
        if self.t_k < 1:
            raise ContractViolation("t_k must be >= 1")


@dataclass
class SelectionOutcome:
    epoch: int
    kept: np.ndarray
    dropped: np.ndarray
    scores: np.ndarray
    rate: float

    @property
    def kept_mask(self):
        m = np.zeros(self.scores.size, dtype=bool)
        m[self.kept] = True
        return m


def prob_cross_entropy(p_prev1, p_prev2, eps=EPS_LOG):
    """``-sum_j p_prev1[j] * log(p_prev2[j])`` with the log argument clamped."""
    p1 = np.asarray(p_prev1, dtype=np.float64)
    p2 = np.asarray(p_prev2, dtype=np.float64)
    if p1.shape != p2.shape or p1.ndim != 1:
        raise ContractViolation("probability vectors must have equal length")
    return float(_backend.prob_cross_entropy_rows(p1[None, :], p2[None, :], eps)[0])


def prob_cross_entropy_rows(P1, P2, eps=EPS_LOG):
    """Row-wise :func:`prob_cross_entropy` over ``(N, M)`` probability arrays."""
    P1 = np.asarray(P1, dtype=np.float64)
    P2 = np.asarray(P2, dtype=np.float64)
    if P1.shape != P2.shape or P1.ndim != 2:
        raise ContractViolation("probability matrices must have equal shape")
    return _backend.prob_cross_entropy_rows(P1, P2, eps)


def drop_rate(t, sched):
    if t < 1:
        raise ContractViolation("epoch numbering starts at 1")
    return sched.tau * min(t / sched.t_k, 1.0)


def n_keep(n, r):
    # round first so (1 - r) * n landing a hair above an integer doesn't bump the ceiling
    return min(n, math.ceil(round((1.0 - r) * n, 9)))


def _outcome(scores, kept, epoch, r):
    kept = np.sort(np.asarray(kept, dtype=np.int64))
    mask = np.ones(scores.size, dtype=bool)
    mask[kept] = False
    return SelectionOutcome(epoch, kept, np.flatnonzero(mask), scores, float(r))


def _check(scores, r):
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1 or scores.size == 0:
        raise ContractViolation("selection needs a nonempty score vector")
    if not np.all(np.isfinite(scores)):
        raise ContractViolation("scores must be finite")
    if not 0.0 <= r < 1.0:
        raise ContractViolation("drop rate must lie in [0, 1)")
    return scores


def select_global(scores, r, epoch=0):
    """Keep the ``ceil((1 - r) N)`` lowest scores; ties go to the lower index."""
    scores = _check(scores, r)
    order = np.argsort(scores, kind="stable")
    return _outcome(scores, order[: n_keep(scores.size, r)], epoch, r)


def select_by_loss(losses, r, epoch=0):
    """Same rule as :func:`select_global`, applied to per-sample losses."""
    return select_global(losses, r, epoch)


def select_minibatch(scores, r, batches, epoch=0):
    """Apply the keep-lowest rule independently inside each batch."""
    scores = _check(scores, r)
    seen = np.zeros(scores.size, dtype=np.int64)
    kept = []
    for b in batches:
        b = np.asarray(b, dtype=np.int64)
        seen[b] += 1
        order = np.lexsort((b, scores[b]))
        kept.append(b[order[: n_keep(b.size, r)]])
    if np.any(seen != 1):
        raise ContractViolation("batches must cover every index exactly once")
    return _outcome(scores, np.concatenate(kept) if kept else [], epoch, r)


def overlap_rate(dropped_by_epoch, mode, t, sched, n):
    """Fraction of the dropped set shared by every epoch in a window.

    ``dropped_by_epoch`` maps epoch -> dropped indices. ``mode`` is
    ``"window3"`` (epochs t-2..t) or ``"all"`` (every epoch from ``t_k``,
    where the drop rate first saturates, through ``t``).
    """
    if t <= sched.t_k:
        raise ContractViolation("overlap is defined for epochs after t_k")
    if mode == "window3":
        window = range(t - 2, t + 1)
    elif mode == "all":
        window = range(sched.t_k, t + 1)
    else:
        raise ContractViolation(f"unknown overlap mode {mode!r}")
    missing = [e for e in window if e not in dropped_by_epoch]
    if missing:
        raise ContractViolation(f"no dropped set recorded for epochs {missing}")
    common = None
    for e in window:
        s = set(np.asarray(dropped_by_epoch[e]).tolist())
        common = s if common is None else common & s
    denom = n * drop_rate(t, sched)
    if denom <= 0:
        raise ContractViolation("overlap undefined at zero drop rate")
    return len(common) / denom
