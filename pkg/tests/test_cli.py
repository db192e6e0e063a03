import csv
import json

import numpy as np
import pytest

from softdrop.cli import main
from softdrop.report import auroc, build_report, noise_histogram, overlap_rows, read_selection
from softdrop.selection import DropSchedule

TINY_DATA = {"n_classes": 6, "per_class": 40, "val_per_class": 10, "test_per_class": 10,
             "open_rate": 0.2, "close_rate": 0.1}
TINY_TRAIN = {"t_k": 4, "t_max": 10, "warmup": 2}


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def train_cfg(tmp_path):
    return write_json(tmp_path / "train.json", {"data": TINY_DATA, "train": TINY_TRAIN})


# --- generate -------------------------------------------------------------

def test_generate_zero_noise(tmp_path, capsys):
    cfg = write_json(tmp_path / "d.json", {"n_classes": 4, "per_class": 10})
    code, out, err = run(capsys, "generate", "--config", cfg, "--out", tmp_path / "d")
    assert code == 0
    assert out.strip() == str(tmp_path / "d" / "manifest.json")
    assert "0 close, 0 open" in err


def test_generate_open_count(tmp_path, capsys):
    cfg = write_json(tmp_path / "d.json", {"n_classes": 20, "per_class": 100, "open_rate": 0.2})
    code, _, err = run(capsys, "generate", "--config", cfg, "--out", tmp_path / "d")
    assert code == 0
    assert "400 open" in err
    rows = read_rows(tmp_path / "d" / "train.csv")
    assert sum(r["provenance"] == "open" for r in rows) == 400


def test_generate_rerun_same_checksums(tmp_path, capsys):
    cfg = write_json(tmp_path / "d.json", {"n_classes": 4, "per_class": 10, "open_rate": 0.1})
    run(capsys, "generate", "--config", cfg, "--out", tmp_path / "a")
    first = json.loads((tmp_path / "a" / "manifest.json").read_text())["artifacts"]
    run(capsys, "generate", "--config", cfg, "--out", tmp_path / "a")
    second = json.loads((tmp_path / "a" / "manifest.json").read_text())["artifacts"]
    assert first == second
    assert set(first) == {"train.csv", "val.csv", "test.csv", "dataset.json"}


def test_generate_seed_override(tmp_path, capsys):
    cfg = write_json(tmp_path / "d.json", {"n_classes": 4, "per_class": 10, "seed": 1})
    run(capsys, "generate", "--config", cfg, "--out", tmp_path / "a", "--seed", "9")
    m = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert m["seed"] == 9 and m["config"]["seed"] == 9


@pytest.mark.parametrize("content", ['{"n_clases": 4}', "{not json", "[1, 2]",
                                     '{"open_rate": 1.5}', '{"per_class": "many"}'])
def test_generate_malformed_config(tmp_path, capsys, content):
    cfg = tmp_path / "bad.json"
    cfg.write_text(content)
    code, out, err = run(capsys, "generate", "--config", cfg, "--out", tmp_path / "d")
    assert code == 2
    assert out == "" and "error" in err


def test_generate_missing_config(tmp_path, capsys):
    code, _, _ = run(capsys, "generate", "--config", tmp_path / "nope.json", "--out", tmp_path)
    assert code == 3


def test_generate_unwritable_output(tmp_path, capsys):
    cfg = write_json(tmp_path / "d.json", {"n_classes": 4, "per_class": 10})
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, _ = run(capsys, "generate", "--config", cfg, "--out", blocker / "sub")
    assert code == 3


# --- train ----------------------------------------------------------------

def test_train_outputs(tmp_path, capsys, train_cfg):
    out = tmp_path / "run"
    code, stdout, _ = run(capsys, "train", "--config", train_cfg, "--out", out)
    assert code == 0
    assert stdout.strip() == str(out / "manifest.json")
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["artifacts"]) == {"epochs.csv", "best_model.json", "summary.json"}
    assert not (out / "selection.csv").exists()
    rows = read_rows(out / "epochs.csv")
    assert [int(r["epoch"]) for r in rows] == list(range(1, 11))
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config"]["train"]["t_k"] == 4
    assert summary["best_val_acc"] == max(float(r["val_acc"]) for r in rows)


def test_train_is_byte_identical(tmp_path, capsys, train_cfg):
    for name in ("a", "b"):
        run(capsys, "train", "--config", train_cfg, "--out", tmp_path / name, "--per-sample-log")
    for f in ("epochs.csv", "summary.json", "selection.csv", "best_model.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_train_none_keeps_everything(tmp_path, capsys):
    cfg = write_json(tmp_path / "t.json",
                     {"data": TINY_DATA, "train": {**TINY_TRAIN, "strategy": "none"}})
    run(capsys, "train", "--config", cfg, "--out", tmp_path / "r")
    rows = read_rows(tmp_path / "r" / "epochs.csv")
    assert len({r["n_kept"] for r in rows}) == 1


def test_train_two_epochs_no_selection(tmp_path, capsys):
    cfg = write_json(tmp_path / "t.json",
                     {"data": TINY_DATA, "train": {"t_k": 1, "t_max": 2, "warmup": 1}})
    run(capsys, "train", "--config", cfg, "--out", tmp_path / "r", "--per-sample-log")
    rows = read_rows(tmp_path / "r" / "selection.csv")
    assert rows and all(r["kept"] == "1" for r in rows)


def test_train_from_generated_dir(tmp_path, capsys):
    write_json(tmp_path / "d.json", TINY_DATA)
    run(capsys, "generate", "--config", tmp_path / "d.json", "--out", tmp_path / "data")
    cfg = write_json(tmp_path / "t.json", {"data_dir": "data", "train": TINY_TRAIN})
    code, _, _ = run(capsys, "train", "--config", cfg, "--out", tmp_path / "r")
    assert code == 0
    cfg2 = write_json(tmp_path / "t2.json", {"data": TINY_DATA, "train": TINY_TRAIN})
    run(capsys, "train", "--config", cfg2, "--out", tmp_path / "r2")
    a = read_rows(tmp_path / "r" / "epochs.csv")
    b = read_rows(tmp_path / "r2" / "epochs.csv")
    assert a == b  # CSV round trip is lossless


@pytest.mark.parametrize("obj", [
    {"data": TINY_DATA, "train": {"stratgy": "none"}},
    {"data": TINY_DATA, "extra": 1},
    {"train": TINY_TRAIN},
    {"data": TINY_DATA, "data_dir": "x"},
    {"data": TINY_DATA, "train": {"strategy": "coteaching"}},
    {"data": TINY_DATA, "train": {"t_k": 10, "t_max": 3}},
])
def test_train_malformed_config(tmp_path, capsys, obj):
    cfg = write_json(tmp_path / "t.json", obj)
    code, out, _ = run(capsys, "train", "--config", cfg, "--out", tmp_path / "r")
    assert code == 2 and out == ""


def test_train_missing_data_dir(tmp_path, capsys):
    cfg = write_json(tmp_path / "t.json", {"data_dir": "absent", "train": TINY_TRAIN})
    code, _, _ = run(capsys, "train", "--config", cfg, "--out", tmp_path / "r")
    assert code == 3


def test_train_divergence_exit_code(tmp_path, capsys):
    cfg = write_json(tmp_path / "t.json",
                     {"data": TINY_DATA, "train": {**TINY_TRAIN, "base_lr": 1e200, "warmup": 0}})
    code, out, err = run(capsys, "train", "--config", cfg, "--out", tmp_path / "r")
    assert code == 4 and out == ""
    assert "diverged" in err
    assert (tmp_path / "r" / "best_model.json").exists()


# --- compare --------------------------------------------------------------

def test_compare(tmp_path, capsys):
    cfg = write_json(tmp_path / "c.json", {
        "data": TINY_DATA, "train": TINY_TRAIN,
        "pipelines": [{"strategy": "none"}, {"strategy": "global-probCE"},
                      {"strategy": "minibatch-probCE", "name": "mb"}]})
    code, _, _ = run(capsys, "compare", "--config", cfg, "--out", tmp_path / "a")
    assert code == 0
    rep = json.loads((tmp_path / "a" / "comparison.json").read_text())
    assert rep["pipelines"] == ["none", "global-probCE", "mb"]
    rows = read_rows(tmp_path / "a" / "comparison_epochs.csv")
    assert len(rows) == 30
    run(capsys, "compare", "--config", cfg, "--out", tmp_path / "b")
    for f in ("comparison.json", "comparison_epochs.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


@pytest.mark.parametrize("pipelines", [[], "none", [{"strategy": "none"}, {"strategy": "none"}],
                                       [{"strategy": "none", "bogus": 1}], [3]])
def test_compare_malformed(tmp_path, capsys, pipelines):
    cfg = write_json(tmp_path / "c.json", {"data": TINY_DATA, "pipelines": pipelines})
    code, _, _ = run(capsys, "compare", "--config", cfg, "--out", tmp_path / "a")
    assert code == 2


# --- report ---------------------------------------------------------------

def brute_auroc(scores, positive):
    pos = [s for s, p in zip(scores, positive) if p]
    neg = [s for s, p in zip(scores, positive) if not p]
    wins = sum(1.0 if a > b else 0.5 if a == b else 0.0 for a in pos for b in neg)
    return wins / (len(pos) * len(neg))


def test_auroc_matches_pairwise_oracle():
    r = np.random.default_rng(0)
    for _ in range(50):
        n = int(r.integers(2, 60))
        scores = r.integers(0, 6, size=n).astype(float) if r.random() < 0.5 else r.normal(size=n)
        positive = r.random(n) < 0.3
        if positive.all() or not positive.any():
            continue
        assert auroc(scores, positive) == pytest.approx(brute_auroc(scores, positive), abs=1e-9)


def test_auroc_perfect_and_degenerate():
    truth = np.array([0, 1, 0, 1, 1], dtype=bool)
    assert auroc(truth.astype(float), truth) == 1.0
    assert auroc(-truth.astype(float), truth) == 0.0
    assert np.isnan(auroc([1.0, 2.0], [True, True]))
    assert np.isnan(auroc([np.nan, 2.0], [True, False]))


def test_overlap_series_constant_for_fixed_drops():
    n, ids = 20, np.arange(20)
    kept = np.ones(n, dtype=bool)
    kept[:4] = False
    sel = {e: (ids, np.zeros(n), kept if e > 2 else np.ones(n, dtype=bool), np.array(["clean"] * n))
           for e in range(1, 16)}
    rows = overlap_rows(sel, range(1, 16), DropSchedule(0.2, 10))
    assert [r[1] for r in rows[10:]] == [1.0] * 5
    assert [r[2] for r in rows[10:]] == [1.0] * 5
    assert all(np.isnan(r[1]) for r in rows[:10])


def test_noise_histogram_bins():
    n = 64
    kept = np.arange(n) >= 16
    sel = {3: (np.arange(n), np.zeros(n), kept, np.array(["clean"] * n))}
    rows = noise_histogram(sel, 16, seed=0)
    assert len(rows) == 24
    assert sum(r[2] for r in rows) == 4


def test_report_end_to_end(tmp_path, capsys, train_cfg):
    run(capsys, "train", "--config", train_cfg, "--out", tmp_path / "r", "--per-sample-log")
    code, out, _ = run(capsys, "report", tmp_path / "r")
    assert code == 0
    rep = tmp_path / "r" / "report"
    assert out.strip() == str(rep / "manifest.json")
    for name in ("accuracy.csv", "overlap.csv", "scores.csv", "detection.csv"):
        assert len(read_rows(rep / name)) == 10
    assert len(read_rows(rep / "noise_histogram.csv")) == 24

    # report recomputes what the training loop logged
    epochs = read_rows(tmp_path / "r" / "epochs.csv")
    overlap = read_rows(rep / "overlap.csv")
    for e, o in zip(epochs, overlap):
        for k in ("overlap_all", "overlap_window3"):
            a, b = float(e[k]), float(o[k])
            assert (np.isnan(a) and np.isnan(b)) or a == pytest.approx(b, abs=1e-12)
    det = read_rows(rep / "detection.csv")
    sel = read_selection(tmp_path / "r" / "selection.csv")
    for e, d in zip(epochs, det):
        if not np.isnan(float(e["open_recall"])):
            assert float(d["recall_open"]) == pytest.approx(float(e["open_recall"]))
        ids, scores, kept, prov = sel[int(d["epoch"])]
        if np.all(np.isfinite(scores)):
            assert float(d["auroc_open"]) == pytest.approx(brute_auroc(scores, prov == "open"), abs=1e-9)

    first = (rep / "manifest.json").read_bytes()
    run(capsys, "report", tmp_path / "r")
    assert (rep / "manifest.json").read_bytes() == first


def test_report_without_selection_log(tmp_path, capsys, train_cfg):
    run(capsys, "train", "--config", train_cfg, "--out", tmp_path / "r")
    code, out, err = run(capsys, "report", tmp_path / "r")
    assert code == 5 and out == ""
    assert "--per-sample-log" in err
    with pytest.raises(FileNotFoundError):
        build_report(tmp_path / "r")
