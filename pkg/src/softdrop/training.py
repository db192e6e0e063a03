"""Epoch loop for update-drop training and the baseline pipelines."""
import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from softdrop.data import CLEAN, CLOSE, OPEN, DatasetBundle, random_partition
from softdrop.errors import ConfigError, ContractViolation, TrainingDiverged
from softdrop.losses import SmoothingConfig, final_loss
from softdrop.model import Model, OptimizerState, forward, lr_at_epoch, sgd_step
from softdrop.selection import (DropSchedule, SelectionOutcome, drop_rate,
                                overlap_rate, prob_cross_entropy_rows,
                                select_by_loss, select_global, select_minibatch)
from softdrop.tensor import softmax_rows

log = logging.getLogger(__name__)

STRATEGIES = ("global-probCE", "global-lossCE", "minibatch-probCE", "none")


@dataclass
class TrainConfig:
    strategy: str = "global-probCE"
    tau: float = 0.25
    t_k: int = 10
    omega: float = 0.5
    base_lr: float = 0.01
    momentum: float = 0.9
    warmup: int = 5
    t_max: int = 80
    batch_size: int = 32
    val_fraction: float = 1 / 6
    hidden: int = 32
    d: int = 16
    scale: float = 30.0
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}")
        if self.t_max < self.t_k:
            raise ConfigError("t_max must be >= t_k")
        if not 0.0 <= self.val_fraction <= 0.5:
            raise ConfigError("val_fraction must lie in [0, 0.5]")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        try:
            self.schedule
            self.optimizer_state()
        except ContractViolation as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def label(self):
        return self.name or self.strategy

    @property
    def schedule(self):
        return DropSchedule(self.tau, self.t_k)

    def smoothing(self, n_classes):
        return SmoothingConfig(self.omega, n_classes)

    def optimizer_state(self):
        return OptimizerState(self.base_lr, self.momentum, self.warmup, self.t_max)

    @classmethod
    def from_dict(cls, obj):
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown training keys: {sorted(unknown)}")
        return cls(**obj)

    def to_dict(self):
        return asdict(self)


class ProbabilityHistory:
    """Softmax outputs of the two most recent epochs for every sample."""

    def __init__(self):
        self.prev1 = None
        self.prev2 = None

    def push(self, probs):
        self.prev2, self.prev1 = self.prev1, probs

    @property
    def ready(self):
        return self.prev2 is not None


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    drop_rate: float
    n_kept: int
    train_loss: float
    train_acc: float
    val_acc: float
    test_acc: float
    score_kept: float = float("nan")
    score_dropped: float = float("nan")
    c_clean: float = float("nan")
    c_close: float = float("nan")
    c_open: float = float("nan")
    ce_clean: float = float("nan")
    ce_close: float = float("nan")
    ce_open: float = float("nan")
    open_recall: float = float("nan")
    overlap_all: float = float("nan")
    overlap_window3: float = float("nan")


EPOCH_FIELDS = [f.name for f in fields(EpochRecord)]


@dataclass
class TrainResult:
    config: TrainConfig
    model: Model
    best_model: Model
    best_epoch: int
    best_val_acc: float
    records: list
    selections: list = field(default_factory=list)
    train: object = None

    @property
    def final(self):
        return self.records[-1]

    def best_record(self):
        return self.records[self.best_epoch - 1]


def evaluate(model, dataset):
    """Accuracy against assigned labels and per-sample probabilities."""
    if len(dataset) == 0:
        raise ContractViolation("cannot evaluate on an empty dataset")
    logits = forward(model, dataset.X)
    pred = np.argmax(logits, axis=1)
    return float(np.mean(pred == dataset.labels)), softmax_rows(logits)


def _group_mean(values, provenance, code):
    m = provenance == code
    return float(np.mean(values[m])) if np.any(m) else float("nan")


def _split_validation(bundle, cfg, rng):
    if bundle.val is not None:
        return bundle.train, bundle.val
    n = len(bundle.train)
    n_val = int(round(cfg.val_fraction * n))
    if n_val == 0:
        raise ConfigError("no validation set available and val_fraction is 0")
    perm = rng.permutation(n)
    return bundle.train.subset(np.sort(perm[n_val:])), bundle.train.subset(np.sort(perm[:n_val]))


def _overlap(dropped_by_epoch, mode, t, sched, n):
    try:
        return overlap_rate(dropped_by_epoch, mode, t, sched, n)
    except ContractViolation:  # window reaches back before selection started
        return float("nan")


def run_training(bundle, cfg, per_sample_log=False):
    """Train one pipeline; returns a :class:`TrainResult`.

    Each epoch starts with an inference pass over the whole training set.
    From epoch 3 on, the scores compare the two previous passes and the
    configured selector picks the samples used for this epoch's updates.
    """
    if len(bundle.train) == 0:
        raise ContractViolation("training set is empty")
    rng = np.random.default_rng([cfg.seed, 1])
    train, val = _split_validation(bundle, cfg, rng)
    N = len(train)
    if cfg.batch_size > N:
        raise ConfigError("batch_size exceeds training set size")
    M = int(max(train.labels.max(), val.labels.max(), bundle.test.labels.max())) + 1
    if bundle.spec is not None:
        M = max(M, bundle.spec.n_classes)
    model = Model.init(train.X.shape[1], M, d=cfg.d, hidden=cfg.hidden,
                       s=cfg.scale, seed=cfg.seed)
    opt = cfg.optimizer_state()
    smoothing = cfg.smoothing(M)
    sched = cfg.schedule
    history = ProbabilityHistory()
    idx_all = np.arange(N)
    ce_rows = np.arange(N)

    records, selections, dropped_by_epoch = [], [], {}
    best_model, best_epoch, best_val = model.copy(), 0, -1.0

    for t in range(1, cfg.t_max + 1):
        lr = lr_at_epoch(opt, t)
        logits = forward(model, train.X)
        probs = softmax_rows(logits)
        ce = -np.log(np.maximum(probs[ce_rows, train.labels], 1e-300))
        scores = None
        if history.ready:
            scores = prob_cross_entropy_rows(history.prev1, history.prev2)
        history.push(probs)
        r = drop_rate(t, sched)

        partition = None
        if scores is None or cfg.strategy == "none":
            outcome = SelectionOutcome(
                t, idx_all.copy(), np.empty(0, dtype=np.int64),
                scores if scores is not None else np.full(N, np.nan), 0.0)
        elif cfg.strategy == "global-probCE":
            outcome = select_global(scores, r, t)
        elif cfg.strategy == "global-lossCE":
            outcome = select_by_loss(ce, r, t)
        else:
            partition = random_partition(N, cfg.batch_size, rng)
            outcome = select_minibatch(scores, r, partition, t)

        if partition is None:
            kept = rng.permutation(outcome.kept)
            batches = [kept[i:i + cfg.batch_size] for i in range(0, kept.size, cfg.batch_size)]
        else:
            mask = outcome.kept_mask
            batches = [b[mask[b]] for b in partition]
            batches = [b for b in batches if b.size]

        loss_sum = 0.0
        for b in batches:
            loss, grads, _ = final_loss(model, train.X[b], train.labels[b], smoothing)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {t}", best_model)
            try:
                model = model.with_params(sgd_step(opt, model.params, grads, lr))
            except TrainingDiverged as exc:
                raise TrainingDiverged(f"epoch {t}: {exc}", best_model) from exc
            loss_sum += loss * b.size

        train_acc, _ = evaluate(model, train)
        val_acc, _ = evaluate(model, val)
        test_acc, _ = evaluate(model, bundle.test)
        if val_acc > best_val:
            best_model, best_epoch, best_val = model.copy(), t, val_acc

        rec = EpochRecord(t, lr, outcome.rate, int(outcome.kept.size),
                          loss_sum / max(outcome.kept.size, 1), train_acc,
                          val_acc, test_acc)
        for code, name in ((CLEAN, "clean"), (CLOSE, "close"), (OPEN, "open")):
            setattr(rec, f"ce_{name}", _group_mean(ce, train.provenance, code))
            if scores is not None:
                setattr(rec, f"c_{name}", _group_mean(scores, train.provenance, code))
        if outcome.dropped.size:
            sel = outcome.scores
            rec.score_kept = float(np.mean(sel[outcome.kept]))
            rec.score_dropped = float(np.mean(sel[outcome.dropped]))
            n_open = int(np.sum(train.provenance == OPEN))
            if n_open:
                rec.open_recall = float(np.sum(train.provenance[outcome.dropped] == OPEN)) / n_open
            dropped_by_epoch[t] = outcome.dropped
            if t > sched.t_k:
                rec.overlap_all = _overlap(dropped_by_epoch, "all", t, sched, N)
                rec.overlap_window3 = _overlap(dropped_by_epoch, "window3", t, sched, N)
        records.append(rec)
        if per_sample_log:
            selections.append(outcome)
        log.debug("%s epoch %d: loss %.4f val %.4f test %.4f", cfg.label, t,
                  rec.train_loss, val_acc, test_acc)

    return TrainResult(cfg, model, best_model, best_epoch, best_val, records,
                       selections, train)


def run_comparison(bundle, configs):
    """Run several pipelines on the same data; returns ``(results, report)``."""
    if not configs:
        raise ContractViolation("no configurations to compare")
    labels = [c.label for c in configs]
    if len(set(labels)) != len(labels):
        raise ConfigError("pipeline names must be unique")
    results = {c.label: run_training(bundle, c) for c in configs}
    report = {
        "pipelines": labels,
        "final": {
            name: {
                "best_epoch": res.best_epoch,
                "best_val_acc": res.best_val_acc,
                "best_test_acc": res.best_record().test_acc,
                "best_train_acc": res.best_record().train_acc,
                "final_test_acc": res.final.test_acc,
                "final_train_acc": res.final.train_acc,
            }
            for name, res in results.items()
        },
        "epochs": {
            name: [asdict(r) for r in res.records] for name, res in results.items()
        },
    }
    return results, report
