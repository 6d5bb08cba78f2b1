"""``taxcal`` command line: simulate, calibrate, evaluate, infer, config.

Data goes to stdout (or files under ``--out``); progress and diagnostics go
to stderr. Every command that writes artifacts also writes ``manifest.json``
recording its inputs, seed, config snapshot and artifact checksums; passing
that manifest back with ``--manifest`` reruns the command identically.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from taxcal import __version__
from taxcal.acquisition import (ALIGNED_HEADER, RAW_HEADER, CsvFormatError, align_log, read_dataset_csv,
                                read_raw_log, write_dataset_csv, write_raw_log)
from taxcal.calibration import (ModelFileError, calibrate, dataset_digest, format_report, load_model, save_model,
                                score, split)
from taxcal.config import ConfigError, RigConfig
from taxcal.inference import StreamError, predict, run_stream
from taxcal.sensor import HallSample
from taxcal.session import simulate_session

log = logging.getLogger("taxcal")


class CliError(Exception):
    pass


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out: Path, command: str, seed, params: dict, inputs: dict, artifacts: dict,
                   config: RigConfig | None = None) -> Path:
    manifest = {
        "tool": "taxcal",
        "version": __version__,
        "command": command,
        "seed": seed,
        "params": params,
        "config": None if config is None else config.values,
        "inputs": {k: {"path": str(p), "sha256": sha256_file(p)} for k, p in inputs.items()},
        "artifacts": {k: {"path": Path(p).name, "sha256": sha256_file(p)} for k, p in artifacts.items()},
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_manifest(path, command: str) -> dict:
    m = json.loads(Path(path).read_text(encoding="utf-8"))
    if m.get("tool") != "taxcal" or m.get("command") != command:
        raise CliError(f"{path}: not a taxcal '{command}' manifest")
    return m


# commands ---------------------------------------------------------------------

def cmd_config(args) -> int:
    if args.check:
        RigConfig.load(args.check)
        print(f"{args.check}: ok", file=sys.stderr)
        return 0
    sys.stdout.write(RigConfig().to_text())
    return 0


def cmd_simulate(args) -> int:
    if args.manifest:
        m = read_manifest(args.manifest, "simulate")
        config, seed = RigConfig(m["config"]), m["seed"]
    else:
        config = RigConfig.load(args.config) if args.config else RigConfig()
        seed = args.seed if args.seed is not None else config.rng_seed
    out = _outdir(args.out)
    result = simulate_session(config, seed)
    raw = out / "raw_log.csv"
    write_raw_log(result.log, raw)
    snapshot = out / "config.txt"
    config.save(snapshot)
    if result.estimate is not None:
        tip = result.estimate.tip_position
        log.info("phase=done probe_estimate=%s taxels=%s", np.array2string(tip, precision=6), result.log.taxels)
    write_manifest(out, "simulate", seed, {}, {}, {"raw_log": raw, "config": snapshot}, config)
    print(raw)
    return 0


def cmd_calibrate(args) -> int:
    if args.manifest:
        m = read_manifest(args.manifest, "calibrate")
        raw_path, seed = Path(m["inputs"]["raw_log"]["path"]), m["seed"]
        window, split_mode = m["params"]["window"], m["params"]["split_mode"]
        if sha256_file(raw_path) != m["inputs"]["raw_log"]["sha256"]:
            raise CliError(f"{raw_path}: contents differ from the manifest's recorded input")
    else:
        raw_path, seed, window, split_mode = Path(args.raw_log), args.seed, args.window, args.split_mode
    out = _outdir(args.out)
    raw = read_raw_log(raw_path)
    if not raw.hall:
        raise CliError(f"{raw_path}: no Hall samples to calibrate")
    datasets = align_log(raw, window)
    model, metrics = calibrate(datasets, seed=seed, split_mode=split_mode, workers=args.workers,
                               fingerprint=sha256_file(raw_path))
    aligned = out / "aligned.csv"
    write_dataset_csv(datasets, aligned)
    model_path = out / "model.json"
    save_model(model, model_path, metrics)
    report = format_report(metrics)
    report_path = out / "metrics.txt"
    report_path.write_text(report, encoding="utf-8")
    write_manifest(out, "calibrate", seed, {"window": window, "split_mode": split_mode}, {"raw_log": raw_path},
                   {"model": model_path, "aligned": aligned, "metrics": report_path})
    sys.stdout.write(report)
    return 0


def _load_eval_data(path, window: int):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    if header == RAW_HEADER:
        return align_log(read_raw_log(path), window)
    if header == ALIGNED_HEADER:
        return read_dataset_csv(path)
    raise CliError(f"{path}: unrecognised dataset header {','.join(header)!r}")


def cmd_evaluate(args) -> int:
    model = load_model(args.model)
    datasets = _load_eval_data(args.dataset, args.window)
    if not datasets or all(len(ds) == 0 for ds in datasets.values()):
        raise CliError(f"{args.dataset}: dataset is empty")
    missing = sorted(set(datasets) - set(model.taxels))
    if missing:
        raise CliError(f"model has no calibration for taxel(s) {missing}")
    out = _outdir(args.out)
    metrics = {}
    pred_path = out / "predictions.csv"
    with open(pred_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["taxel", "row", "t", "fx_true", "fy_true", "fz_true", "fx_pred", "fy_pred", "fz_pred"])
        for taxel, ds in sorted(datasets.items()):
            tm = model.taxels[taxel]
            if args.subset != "all":
                meta = tm.meta
                if meta.get("rows_sha256") != dataset_digest(ds):
                    raise CliError(f"taxel {taxel}: dataset differs from the one the model was trained on; "
                                   f"--subset {args.subset} needs the training data")
                train, test = split(len(ds), meta["test_fraction"], meta["seed"], meta["split_mode"])
                ds = ds.subset(test if args.subset == "test" else train)
            pred = predict(tm, ds.b)
            metrics[taxel] = score(ds.f, pred)
            for i in range(len(ds)):
                t = "" if ds.t is None else repr(float(ds.t[i]))
                w.writerow([taxel, i, t, *map(repr, map(float, ds.f[i])), *map(repr, map(float, pred[i]))])
    report = format_report(metrics)
    (out / "metrics.txt").write_text(report, encoding="utf-8")
    sys.stdout.write(report)
    return 0


def _iter_hall_rows(fh, name: str):
    reader = csv.reader(fh)
    header = next(reader, None)
    if header != RAW_HEADER:
        raise CliError(f"{name}: expected raw log header {','.join(RAW_HEADER)!r}")
    for row in reader:
        if len(row) != len(RAW_HEADER):
            raise CsvFormatError(f"expected {len(RAW_HEADER)} columns, got {len(row)}", reader.line_num, name)
        if row[1] != "hall":
            continue
        try:
            yield HallSample(float(row[0]), int(row[2]), np.array([float(row[3]), float(row[4]), float(row[5])]))
        except ValueError as exc:
            raise CsvFormatError(str(exc), reader.line_num, name) from None


def cmd_infer(args) -> int:
    model = load_model(args.model)
    pipe = args.input in (None, "-")
    fh = sys.stdin if pipe else open(args.input, encoding="utf-8", newline="")
    dest = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
    errors = 0
    try:
        writer = csv.writer(dest, lineterminator="\n")
        if args.format == "csv":
            writer.writerow(["t", "taxel", "fx", "fy", "fz"])
        for item in run_stream(model, _iter_hall_rows(fh, "<stdin>" if pipe else args.input), tare=args.tare):
            if isinstance(item, StreamError):
                errors += 1
                print(f"error t={item.t!r} taxel={item.taxel}: {item.message}", file=sys.stderr)
                continue
            if args.format == "csv":
                writer.writerow([repr(item.t), item.taxel, *(repr(float(v)) for v in item.f)])
            else:
                dest.write(json.dumps({"t": item.t, "taxel": item.taxel, "f": [float(v) for v in item.f]}) + "\n")
            if pipe:
                dest.flush()
    finally:
        if not pipe:
            fh.close()
        if args.out:
            dest.close()
    if errors:
        print(f"{errors} sample(s) skipped for unknown taxels", file=sys.stderr)
    return 0


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="taxcal", description="Magnetic tactile fingertip calibration toolkit")
    p.add_argument("--version", action="version", version=f"taxcal {__version__}")
    p.add_argument("-q", "--quiet", action="store_true", help="only print warnings and errors on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("config", help="print the default configuration or check a config file")
    c.add_argument("--print-default", action="store_true", help="print every key with its default (the default action)")
    c.add_argument("--check", metavar="PATH", help="validate a config file")
    c.set_defaults(func=cmd_config)

    s = sub.add_parser("simulate", help="run touch-localize-press on the simulated rig and write raw logs")
    s.add_argument("--config", help="config file (defaults when omitted)")
    s.add_argument("--seed", type=int, help="RNG seed (overrides sim.seed)")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--manifest", help="rerun from a previous simulate manifest")
    s.set_defaults(func=cmd_simulate)

    k = sub.add_parser("calibrate", help="align, split, fit and score every taxel")
    k.add_argument("raw_log", nargs="?", help="raw log CSV written by simulate or by a hardware logger")
    k.add_argument("--seed", type=int, default=0, help="master split seed")
    k.add_argument("--out", required=True)
    k.add_argument("--window", type=int, default=100, help="F/T moving-average window in samples")
    k.add_argument("--split-mode", choices=["row", "block"], default="row")
    k.add_argument("--workers", type=int, default=1, help="parallel per-taxel fits")
    k.add_argument("--manifest", help="rerun from a previous calibrate manifest")
    k.set_defaults(func=cmd_calibrate)

    e = sub.add_parser("evaluate", help="score a model on a raw log or aligned dataset")
    e.add_argument("model")
    e.add_argument("dataset")
    e.add_argument("--out", required=True)
    e.add_argument("--window", type=int, default=100)
    e.add_argument("--subset", choices=["all", "test", "train"], default="all",
                   help="re-derive the model's own split (requires the training dataset)")
    e.set_defaults(func=cmd_evaluate)

    i = sub.add_parser("infer", help="stream force estimates from Hall rows of a raw log (file or stdin)")
    i.add_argument("model")
    i.add_argument("input", nargs="?", help="raw log path, or - / omitted for stdin")
    i.add_argument("--tare", type=int, default=0, help="zero each taxel on its first N samples")
    i.add_argument("--format", choices=["csv", "jsonl"], default="csv")
    i.add_argument("--out", help="write estimates here instead of stdout")
    i.set_defaults(func=cmd_infer)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "calibrate" and not (args.raw_log or args.manifest):
        parser.error("calibrate needs a raw log path or --manifest")
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(message)s"))
    root = logging.getLogger("taxcal")
    root.handlers[:] = [handler]
    root.setLevel(logging.WARNING if args.quiet else logging.INFO)
    root.propagate = False
    try:
        return args.func(args)
    except BrokenPipeError:
        # downstream reader closed early (e.g. `| head`)
        sys.stderr.close()
        return 0
    except (CliError, ConfigError, CsvFormatError, ModelFileError, ValueError, OSError, RuntimeError) as exc:
        print(f"taxcal {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
