"""``softdrop`` command line: generate, train, compare, report.

stdout carries only the path of the manifest written by the command;
diagnostics go to stderr. Exit codes:

    0  success
    2  malformed or invalid configuration
    3  file system error
    4  training diverged (the last good checkpoint is still written)
    5  report requested but the run has no per-sample selection log
"""
import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

from softdrop.data import PROVENANCE_NAMES, DatasetSpec, generate, load_bundle, save_bundle
from softdrop.errors import ConfigError, ContractViolation, TrainingDiverged
from softdrop.model import save_checkpoint
from softdrop.report import MissingSelectionLog, build_report, write_csv
from softdrop.training import EPOCH_FIELDS, TrainConfig, run_comparison, run_training

log = logging.getLogger("softdrop")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_DIVERGED, EXIT_NO_LOG = 0, 2, 3, 4, 5

RUN_KEYS = {"data", "data_dir", "train"}
COMPARE_KEYS = RUN_KEYS | {"pipelines"}


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _dump_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _read_config(path):
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_CONFIG, f"{path}: not valid JSON ({exc})") from exc
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read config {path}: {exc}") from exc
    if not isinstance(obj, dict):
        raise CliError(EXIT_CONFIG, f"{path}: top level must be a JSON object")
    return obj


def _build(factory, obj, what):
    if not isinstance(obj, dict):
        raise CliError(EXIT_CONFIG, f"{what} must be a JSON object")
    try:
        return factory(obj)
    except (ConfigError, ContractViolation, TypeError, ValueError) as exc:
        raise CliError(EXIT_CONFIG, f"invalid {what}: {exc}") from exc


def _check_keys(obj, allowed, what):
    unknown = set(obj) - allowed
    if unknown:
        raise CliError(EXIT_CONFIG, f"unknown {what} keys: {sorted(unknown)}")


def _with_seed(obj, seed):
    return obj if seed is None else {**obj, "seed": seed}


def _resolve_data(obj, config_path, seed):
    """Dataset bundle plus the config snapshot that reproduces it."""
    if ("data" in obj) == ("data_dir" in obj):
        raise CliError(EXIT_CONFIG, "give exactly one of 'data' or 'data_dir'")
    if "data" in obj:
        spec = _build(DatasetSpec.from_dict, _with_seed(obj["data"], seed), "data section")
        return generate(spec), {"data": spec.to_dict()}
    data_dir = Path(obj["data_dir"])
    if not data_dir.is_absolute():
        data_dir = Path(config_path).parent / data_dir
    try:
        bundle = load_bundle(data_dir)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot load dataset from {data_dir}: {exc}") from exc
    except (ContractViolation, ConfigError) as exc:
        raise CliError(EXIT_CONFIG, f"bad dataset in {data_dir}: {exc}") from exc
    return bundle, {"data_dir": str(obj["data_dir"])}


def _write_manifest(out, command, config_path, snapshot, seed, files):
    manifest = {
        "command": command,
        "config_path": str(config_path) if config_path else None,
        "config": snapshot,
        "seed": seed,
        "out_dir": str(out),
        "artifacts": {Path(p).relative_to(out).as_posix(): _sha256(p)
                      for p in sorted(files, key=str)},
    }
    path = out / "manifest.json"
    _dump_json(manifest, path)
    return path


def write_epochs(records, path):
    write_csv(path, EPOCH_FIELDS, [[getattr(r, f) for f in EPOCH_FIELDS] for r in records])


def write_selection(result, path):
    ids = result.train.sample_ids
    prov = [PROVENANCE_NAMES[c] for c in result.train.provenance]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "sample_id", "score", "kept", "true_provenance"])
        for out in result.selections:
            mask = out.kept_mask
            for i in range(ids.size):
                w.writerow([out.epoch, int(ids[i]), repr(float(out.scores[i])),
                            int(mask[i]), prov[i]])


def _summary(result, snapshot):
    best = result.best_record()
    return {
        "config": snapshot,
        "seed": result.config.seed,
        "strategy": result.config.strategy,
        "epochs": len(result.records),
        "n_train": len(result.train),
        "best_epoch": result.best_epoch,
        "best_val_acc": result.best_val_acc,
        "best_test_acc": best.test_acc,
        "best_train_acc": best.train_acc,
        "final_val_acc": result.final.val_acc,
        "final_test_acc": result.final.test_acc,
        "final_train_acc": result.final.train_acc,
    }


def _prepare_out(out):
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot create {out}: {exc}") from exc


# --- commands -------------------------------------------------------------

def cmd_generate(args):
    obj = _read_config(args.config)
    spec = _build(DatasetSpec.from_dict, _with_seed(obj, args.seed), "dataset config")
    bundle = generate(spec)
    out = Path(args.out)
    _prepare_out(out)
    paths = save_bundle(bundle, out)
    counts = bundle.train.counts()
    n_val = len(bundle.val) if bundle.val is not None else 0
    print(f"train: {len(bundle.train)} samples ({counts['clean']} clean, "
          f"{counts['close']} close, {counts['open']} open); val {n_val}, "
          f"test {len(bundle.test)}", file=sys.stderr)
    return _write_manifest(out, "generate", args.config, spec.to_dict(), spec.seed,
                           paths.values())


def cmd_train(args):
    obj = _read_config(args.config)
    _check_keys(obj, RUN_KEYS, "top-level")
    cfg = _build(TrainConfig.from_dict, _with_seed(obj.get("train", {}), args.seed),
                 "train section")
    bundle, snapshot = _resolve_data(obj, args.config, args.seed)
    snapshot["train"] = cfg.to_dict()
    out = Path(args.out)
    _prepare_out(out)

    try:
        result = run_training(bundle, cfg, per_sample_log=args.per_sample_log)
    except TrainingDiverged as exc:
        if exc.checkpoint is not None:
            save_checkpoint(exc.checkpoint, out / "best_model.json")
        raise CliError(EXIT_DIVERGED, f"training diverged: {exc}") from exc
    except (ConfigError, ContractViolation) as exc:
        raise CliError(EXIT_CONFIG, f"cannot train: {exc}") from exc

    files = [out / "epochs.csv", out / "best_model.json", out / "summary.json"]
    write_epochs(result.records, files[0])
    save_checkpoint(result.best_model, files[1], result.best_epoch)
    _dump_json(_summary(result, snapshot), files[2])
    if args.per_sample_log:
        files.append(out / "selection.csv")
        write_selection(result, files[-1])
    log.info("%s: best epoch %d, val %.4f, test %.4f", cfg.label, result.best_epoch,
             result.best_val_acc, result.best_record().test_acc)
    return _write_manifest(out, "train", args.config, snapshot, cfg.seed, files)


def cmd_compare(args):
    obj = _read_config(args.config)
    _check_keys(obj, COMPARE_KEYS, "top-level")
    pipelines = obj.get("pipelines")
    if not isinstance(pipelines, list) or not pipelines:
        raise CliError(EXIT_CONFIG, "'pipelines' must be a nonempty list")
    shared = obj.get("train", {})
    if not isinstance(shared, dict):
        raise CliError(EXIT_CONFIG, "train section must be a JSON object")
    configs = []
    for i, p in enumerate(pipelines):
        if not isinstance(p, dict):
            raise CliError(EXIT_CONFIG, f"pipeline {i} must be a JSON object")
        configs.append(_build(TrainConfig.from_dict, _with_seed({**shared, **p}, args.seed),
                              f"pipeline {i}"))
    bundle, snapshot = _resolve_data(obj, args.config, args.seed)
    snapshot["pipelines"] = [c.to_dict() for c in configs]
    out = Path(args.out)
    _prepare_out(out)
    try:
        _, report = run_comparison(bundle, configs)
    except TrainingDiverged as exc:
        raise CliError(EXIT_DIVERGED, f"training diverged: {exc}") from exc
    except (ConfigError, ContractViolation) as exc:
        raise CliError(EXIT_CONFIG, f"cannot compare: {exc}") from exc

    files = [out / "comparison.json", out / "comparison_epochs.csv"]
    _dump_json({"config": snapshot, "pipelines": report["pipelines"],
                "final": report["final"]}, files[0])
    rows = [[name] + [rec[f] for f in EPOCH_FIELDS]
            for name in report["pipelines"] for rec in report["epochs"][name]]
    write_csv(files[1], ["pipeline"] + EPOCH_FIELDS, rows)
    for name in report["pipelines"]:
        f = report["final"][name]
        log.info("%-20s best test %.4f  best train %.4f", name, f["best_test_acc"],
                 f["best_train_acc"])
    seeds = sorted({c.seed for c in configs})
    return _write_manifest(out, "compare", args.config, snapshot,
                           seeds[0] if len(seeds) == 1 else seeds, files)


def cmd_report(args):
    run_dir = Path(args.run_dir)
    out = Path(args.out) if args.out else run_dir / "report"
    try:
        files = build_report(run_dir, out)
    except MissingSelectionLog as exc:
        raise CliError(EXIT_NO_LOG, f"{exc}") from exc
    except (KeyError, ValueError) as exc:
        raise CliError(EXIT_CONFIG, f"cannot read run in {run_dir}: {exc}") from exc
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot build report: {exc}") from exc
    return _write_manifest(out, "report", None, {"run_dir": str(run_dir)}, None,
                           files.values())


def build_parser():
    parser = argparse.ArgumentParser(
        prog="softdrop", description="Update-drop training on synthetic noisy data.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", required=needs_config, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")

    p = sub.add_parser("generate", help="write a synthetic dataset")
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train one pipeline")
    common(p)
    p.add_argument("--per-sample-log", action="store_true",
                   help="also write selection.csv (needed by 'report')")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("compare", help="train several pipelines on the same data")
    common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("report", help="figure data from a training run")
    p.add_argument("run_dir", help="directory written by 'train --per-sample-log'")
    p.add_argument("--out", default=None, help="output directory (default RUN_DIR/report)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if getattr(args, "seed", None) is not None and args.seed < 0:
        print("error: --seed must be non-negative", file=sys.stderr)
        return EXIT_CONFIG
    try:
        manifest = args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(manifest)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
