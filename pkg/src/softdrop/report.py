"""Figure data from a finished run directory.

Reads ``epochs.csv``, ``selection.csv`` and ``summary.json`` and writes one
CSV per figure series. Detection quality (precision, recall, AUROC) is scored
against the provenance tags stored in ``selection.csv``; AUROC is not part of
the original method's evaluation and is offered as an extra diagnostic.
"""
import csv
import json
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from softdrop.data import HIST_BINS, random_partition
from softdrop.errors import ContractViolation
from softdrop.selection import DropSchedule, overlap_rate

SELECTION_FIELDS = ["epoch", "sample_id", "score", "kept", "true_provenance"]


class MissingSelectionLog(FileNotFoundError):
    pass


def auroc(scores, positive):
    """Area under the ROC curve via the rank-sum statistic (ties count half).

    NaN when either class is empty.
    """
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0 or not np.all(np.isfinite(scores)):
        return float("nan")
    ranks = rankdata(scores)
    return float((ranks[positive].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if not isinstance(v, str) else v for v in row])


def read_epochs(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (int(v) if k in ("epoch", "n_kept") else float(v)) for k, v in r.items()}
            for r in rows]


def read_selection(path):
    """Per-epoch arrays ``{epoch: (sample_ids, scores, kept, provenance)}``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != SELECTION_FIELDS:
            raise ValueError(f"{path}: unexpected header {header}")
        rows = list(reader)
    by_epoch = {}
    for e, sid, score, kept, prov in rows:
        by_epoch.setdefault(int(e), []).append((int(sid), float(score), kept == "1", prov))
    out = {}
    for e, items in sorted(by_epoch.items()):
        items.sort()
        out[e] = (np.array([i[0] for i in items]), np.array([i[1] for i in items]),
                  np.array([i[2] for i in items]), np.array([i[3] for i in items]))
    return out


def _precision_recall(dropped, positive):
    n_drop = int(dropped.sum())
    n_pos = int(positive.sum())
    hit = int(np.sum(dropped & positive))
    precision = hit / n_drop if n_drop else float("nan")
    recall = hit / n_pos if n_pos else float("nan")
    return precision, recall


def detection_rows(selection):
    rows = []
    for e, (_, scores, kept, prov) in selection.items():
        dropped = ~kept
        row = [e]
        for positive in (prov == "open", prov != "clean"):
            p, r = _precision_recall(dropped, positive)
            row += [p, r, auroc(scores, positive)]
        rows.append(row)
    return rows


def overlap_rows(selection, epochs, sched):
    dropped = {e: ids[~kept] for e, (ids, _, kept, _) in selection.items() if np.any(~kept)}
    rows = []
    for e in epochs:
        n = selection[e][0].size if e in selection else 0
        vals = []
        for mode in ("all", "window3"):
            try:
                vals.append(overlap_rate(dropped, mode, e, sched, n))
            except ContractViolation:  # window not filled yet, or nothing dropped
                vals.append(float("nan"))
        rows.append([e] + vals)
    return rows


def noise_histogram(selection, batch_size, seed, bins=HIST_BINS):
    """Histogram of per-batch drop rates, treating dropped samples as noisy.

    Each epoch with an active selection is cut into random batches of
    ``batch_size``; only full batches are counted.
    """
    rng = np.random.default_rng([seed, 2])
    rates = []
    for _, (ids, _, kept, _) in selection.items():
        if np.all(kept):
            continue
        for b in random_partition(ids.size, batch_size, rng):
            if b.size == batch_size:
                rates.append(np.sum(~kept[b]) / batch_size)
    hist, edges = np.histogram(np.asarray(rates, dtype=float), bins=bins, range=(0.0, 1.0))
    return [[edges[i], edges[i + 1], int(hist[i])] for i in range(bins)]


def build_report(run_dir, out_dir=None):
    """Write the figure CSVs; returns ``{name: path}``."""
    run_dir = Path(run_dir)
    sel_path = run_dir / "selection.csv"
    if not sel_path.exists():
        raise MissingSelectionLog(
            f"{sel_path} not found; rerun training with --per-sample-log")
    out_dir = Path(out_dir) if out_dir is not None else run_dir / "report"
    out_dir.mkdir(parents=True, exist_ok=True)
    epochs = read_epochs(run_dir / "epochs.csv")
    with open(run_dir / "summary.json") as fh:
        cfg = json.load(fh)["config"]["train"]
    selection = read_selection(sel_path)
    sched = DropSchedule(cfg["tau"], cfg["t_k"])
    ep_ids = [r["epoch"] for r in epochs]

    files = {}

    def emit(name, header, rows):
        p = out_dir / name
        write_csv(p, header, rows)
        files[name] = p

    emit("accuracy.csv", ["epoch", "train_acc", "val_acc", "test_acc"],
         [[r["epoch"], r["train_acc"], r["val_acc"], r["test_acc"]] for r in epochs])
    emit("overlap.csv", ["epoch", "overlap_all", "overlap_window3"],
         overlap_rows(selection, ep_ids, sched))
    groups = ("clean", "close", "open")
    emit("scores.csv", ["epoch"] + [f"c_{g}" for g in groups] + [f"ce_{g}" for g in groups],
         [[r["epoch"]] + [r[f"c_{g}"] for g in groups] + [r[f"ce_{g}"] for g in groups]
          for r in epochs])
    emit("noise_histogram.csv", ["rate_lo", "rate_hi", "count"],
         noise_histogram(selection, cfg["batch_size"], cfg["seed"]))
    emit("detection.csv",
         ["epoch", "precision_open", "recall_open", "auroc_open",
          "precision_noise", "recall_noise", "auroc_noise"],
         detection_rows({e: selection[e] for e in ep_ids if e in selection}))
    return files
