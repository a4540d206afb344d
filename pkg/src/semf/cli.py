"""Command line entry point: ``semf {simulate,train,evaluate,benchmark,sweep}``."""

from __future__ import annotations

import argparse
import csv
import logging
import os
import pickle
import sys

import numpy as np

from . import rng as rngs
from .conformal import conformalize
from .context import build_context
from .engine import train
from .errors import ConfigError, DataError, SemfError
from .harness import RunConfig, load_config, parse_config_text, run_experiment, semf_config_for, sweep
from .inference import predict_interval
from .simulation import generate, to_csv

ARTIFACT_FORMAT = "semf-model"
ARTIFACT_VERSION = 1


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _add_common(p, out_help):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", type=int, help="single seed (overrides the seeds list)")
    p.add_argument("--alpha", type=float, help="miscoverage level, default 0.05")
    p.add_argument("--out", help=out_help)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")


def build_parser():
    p = _Parser(prog="semf", description="SEMF prediction intervals")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    _add_common(sub.add_parser("simulate", help="write a synthetic CSV"), "CSV path (default stdout)")
    _add_common(sub.add_parser("train", help="fit SEMF and save a model artifact"), "artifact path")
    ev = sub.add_parser("evaluate", help="predict intervals for a CSV with a saved model")
    _add_common(ev, "CSV path (default stdout)")
    ev.add_argument("--model", required=True, help="artifact written by `train`")
    ev.add_argument("--data", required=True, help="CSV with the training feature columns")
    ev.add_argument("--raw", action="store_true", help="skip the conformal correction")
    _add_common(sub.add_parser("benchmark", help="paired SEMF/baseline run over all seeds"), "output directory")
    sw = sub.add_parser("sweep", help="random search over the hyper-parameter grid")
    _add_common(sw, "output directory")
    sw.add_argument("--budget", type=int, default=500)
    return p


def _config(args) -> RunConfig:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    if args.seed is not None:
        overrides["seeds"] = str(args.seed)
        if args.command == "simulate":
            overrides.setdefault("data_seed", str(args.seed))
    if args.alpha is not None:
        overrides["alpha"] = repr(args.alpha)
    if args.out is not None and args.command in ("benchmark", "sweep"):
        overrides["out"] = args.out
    if args.config:
        return load_config(args.config, overrides)
    return parse_config_text("", overrides)


def cmd_simulate(args, cfg):
    if cfg.dataset != "sim":
        raise ConfigError("simulate needs a simulated dataset (dataset = sim)")
    ds = generate(cfg.sim)
    to_csv(ds, args.out or sys.stdout)


def cmd_train(args, cfg):
    if not args.out:
        raise ConfigError("train needs --out for the model artifact")
    seed = cfg.seeds[0]
    ctx = build_context(cfg.load(), seed, cfg.alpha)
    model = train(semf_config_for(cfg, seed), ctx.dataset, cfg.family, dict(cfg.learner_params))
    Xv, yv = ctx.Xy("valid")
    artifact = {"format": ARTIFACT_FORMAT, "version": ARTIFACT_VERSION, "model": model, "scaler": ctx.scaler,
                "feature_names": ctx.dataset.feature_names, "outcome_name": ctx.dataset.outcome_name,
                "partition": ctx.dataset.source_partition, "alpha": cfg.alpha, "seed": seed,
                "calib_X": Xv, "calib_y": yv, "calib_rows": ctx.rows("valid"), "config_hash": cfg.config_hash()}
    with open(args.out, "wb") as fh:
        pickle.dump(artifact, fh)


def load_artifact(path):
    try:
        with open(path, "rb") as fh:
            art = pickle.load(fh)
    except (OSError, pickle.UnpicklingError, EOFError) as exc:
        raise DataError(f"cannot read model artifact {path}: {exc}") from None
    if not isinstance(art, dict) or art.get("format") != ARTIFACT_FORMAT:
        raise DataError(f"{path} is not a SEMF model artifact")
    if art.get("version") != ARTIFACT_VERSION:
        raise DataError(f"unsupported artifact version {art.get('version')}")
    return art


def _read_features(path, names):
    if not os.path.isfile(path):
        raise DataError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [n for n in names if n not in (reader.fieldnames or [])]
        if missing:
            raise DataError(f"{path}: missing feature columns {missing}")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            try:
                rows.append([float(rec[n]) for n in names])
            except (TypeError, ValueError):
                raise DataError(f"{path}:{lineno}: non-numeric feature value") from None
    X = np.array(rows, dtype=float).reshape(-1, len(names))
    if not np.all(np.isfinite(X)):
        raise DataError(f"{path}: non-finite feature value")
    return X


def cmd_evaluate(args, cfg):
    art = load_artifact(args.model)
    alpha = art["alpha"] if args.alpha is None else args.alpha
    model, scaler, part = art["model"], art["scaler"], art["partition"]
    X = scaler.transform_features(_read_features(args.data, list(art["feature_names"])))
    seed = rngs.derive_seed(art["seed"], rngs.INFER)
    blocks = [X[:, list(g)] for g in part]
    res = predict_interval(model, blocks, alpha, seed=seed, rows=np.arange(len(X)), keep_samples=False)
    lo, hi = res.lower, res.upper
    if not args.raw:
        Xc = art["calib_X"]
        cal = predict_interval(model, [Xc[:, list(g)] for g in part], alpha, seed=seed, rows=art["calib_rows"],
                               keep_samples=False)
        _, lo, hi = conformalize(cal.lower, cal.upper, art["calib_y"], lo, hi, alpha)
    point, lo, hi = (scaler.inverse_outcome(v) for v in (res.point, lo, hi))
    fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row_id", "point", "lower", "upper"])
        for i in range(len(point)):
            w.writerow([i, repr(float(point[i])), repr(float(lo[i])), repr(float(hi[i]))])
    finally:
        if fh is not sys.stdout:
            fh.close()


def cmd_benchmark(args, cfg):
    record = run_experiment(cfg)
    for (side, metric), st in record.aggregates().items():
        print(f"{side:9s} {metric:8s} {st['mean']:.4f} [{st['min']:.4f}:{st['max']:.4f}] ± {st['std']:.4f}")
    if not record.completed:
        raise SemfError("every seed failed")
    if record.partial:
        print(f"partial: {len(record.completed)}/{len(record.seeds)} seeds completed", file=sys.stderr)


def cmd_sweep(args, cfg):
    best, floor, cands = sweep(cfg, budget=args.budget, seed=cfg.seeds[0], out_dir=cfg.out)
    print(f"{len(cands)} candidates, PICP floor {floor:+g}%")
    print(" ".join(f"{k}={v}" for k, v in sorted(best.items())))


COMMANDS = {"simulate": cmd_simulate, "train": cmd_train, "evaluate": cmd_evaluate, "benchmark": cmd_benchmark,
            "sweep": cmd_sweep}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"semf: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        COMMANDS[args.command](args, _config(args))
    except SemfError as exc:
        print(f"semf: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
