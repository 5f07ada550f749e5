"""Command-line entry point: ``vcprune {train,prune,quantize,experiment,report}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import dataio
from .experiment import (
    ConfigError,
    ExperimentConfig,
    RunReport,
    StageError,
    _csv_text,
    _fmt,
    _write,
    emit_tables,
    load_splits,
    run_experiment,
)
from .modelio import load_model, save_model
from .network import accuracy
from .objective import RegularizerSpec, Scope
from .pruner import PruneSweepConfig, fine_tune, sweep_and_select
from .quantizer import Rounding, bits_sweep
from .trainer import Combo, TrainConfig, grid_search

# CLI flag -> ExperimentConfig key
FLAG_KEYS = {
    "data": "data", "splits": "splits", "arch": "hidden", "combo": "combos",
    "grid_c": "grid_c", "grid_d": "grid_d", "grid_lr": "grid_lr", "epochs": "epochs",
    "batch": "batch_size", "seed": "seed", "tolerance": "tolerance", "out": "out",
    "jobs": "jobs",
}


def _add_data_flags(p):
    p.add_argument("--data", help="LIBSVM file (training file when --splits names files)")
    p.add_argument("--splits", help="'a,b,c' fractions, 'VAL,TEST' files, or 'f,TEST' holdout")
    p.add_argument("--seed", help="root seed (default 0)")


def _add_common(p):
    _add_data_flags(p)
    p.add_argument("--arch", help="hidden widths, e.g. 50 or 50,50 (empty for linear)")
    p.add_argument("--combo", help="regularizer combo(s), e.g. H+W1 or H,H+W2+LCA")
    p.add_argument("--grid-c", dest="grid_c")
    p.add_argument("--grid-d", dest="grid_d")
    p.add_argument("--grid-lr", dest="grid_lr")
    p.add_argument("--epochs")
    p.add_argument("--batch")
    p.add_argument("--tolerance")
    p.add_argument("--jobs", help="parallel grid cells")
    p.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vcprune", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("train", help="grid-search one combo and save the best model")
    _add_common(p)

    p = sub.add_parser("prune", help="threshold sweep on a saved model")
    _add_data_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--tolerance", default="0.01")
    p.add_argument("--steps", default="50")
    p.add_argument("--t-min", dest="t_min", default="1e-3")
    p.add_argument("--fine-tune-epochs", dest="fine_tune_epochs", type=int, default=0,
                   help="retrain the selected pruned model with its mask fixed (default off)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("quantize", help="fixed-point bit-width sweep on a saved model")
    _add_data_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--tolerance", default="0.01")
    p.add_argument("--select", choices=("val", "test"), default="val",
                   help="split used to pick fraction bits (test picks F on the reported split)")
    p.add_argument("--rounding", choices=[r.value for r in Rounding], default="toward_zero")
    p.add_argument("--out", required=True)

    p = sub.add_parser("experiment", help="full train/prune/quantize pipeline")
    p.add_argument("--config", help="flat key = value config file; flags override it")
    _add_common(p)

    p = sub.add_parser("report", help="assemble tables from report.json files")
    p.add_argument("reports", nargs="+", help="report.json files or run directories")
    p.add_argument("--out", required=True)
    return parser


def _config_from_args(args) -> ExperimentConfig:
    values = {}
    base_dir = "."
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        base = ExperimentConfig.from_file(path)
        base_dir = str(path.parent)
        values = {k: line.split("=", 1)[1].strip()
                  for line in base.to_text().splitlines() for k in [line.split("=", 1)[0].strip()]}
    for flag, key in FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            # paths typed on the command line are relative to the working directory
            values[key] = str(Path(value).resolve()) if key in ("data", "out") else value
    return ExperimentConfig.from_strings(values, base_dir)


def _scaled_splits(args, model, provenance):
    if not args.data:
        raise ConfigError("--data is required")
    train, val, test = load_splits(args.data, args.splits or "0.7,0.15,0.15", int(args.seed or 0),
                                   n_features=model.n_inputs)
    scaler = (provenance or {}).get("scaler")
    if scaler:
        s = dataio.Scaler(np.array([float.fromhex(v) for v in scaler["mean"]]),
                          np.array([float.fromhex(v) for v in scaler["std"]]))
        train, val, test = (s.transform(d) for d in (train, val, test))
    return train, val, test


def _spec_from(provenance) -> RegularizerSpec:
    d = (provenance or {}).get("spec")
    if not d:
        return RegularizerSpec()
    return RegularizerSpec(d["C"], d["D"], d["l1"], Scope(d["scope"]))


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    if len(cfg.combos) != 1:
        raise ConfigError("train takes exactly one --combo")
    stage = "load"
    try:
        train, val, test = load_splits(cfg.data, cfg.splits, cfg.seed, cfg.resolve, cfg.n_features)
        scaler = None
        if cfg.standardize:
            train, (val, test), scaler = dataio.standardize(train, [val, test])
        stage = "train"
        combo = Combo.parse(cfg.combos[0])
        widths = [train.n_features, *cfg.hidden, train.n_classes]
        base = TrainConfig(epochs=cfg.epochs, batch_size=cfg.batch_size, seed=cfg.seed,
                           objective_form=cfg.objective_form)
        grid = grid_search(train, val, widths, base, combo, cfg.grid_c, cfg.grid_d, cfg.grid_lr, cfg.jobs)
    except Exception as exc:
        raise StageError(stage, str(exc)) from exc
    out = cfg.resolve(cfg.out)
    prov = {"combo": combo.name, "spec": grid.config.spec.as_dict(), "lr0": grid.config.lr0,
            "seed": cfg.seed, "config_sha256": cfg.digest(),
            "scaler": None if scaler is None else {"mean": [float(v).hex() for v in scaler.mean],
                                                   "std": [float(v).hex() for v in scaler.std]}}
    save_model(out / "model.json", grid.model, prov)
    _write(out / "history.csv", grid.history.to_csv())
    _write(out / "grid.csv", _csv_text([["C", "D", "lr", "val_acc", "best_epoch", "error"]] + [
        [_fmt(r.c), _fmt(r.d), _fmt(r.lr), _fmt(r.val_acc), _fmt(r.best_epoch), r.error or ""]
        for r in grid.runs]))
    print(f"{combo.name}: C={grid.c:g} D={grid.d:g} lr={grid.config.lr0:g} "
          f"val={grid.val_acc:.4f} test={accuracy(grid.model, test):.4f} -> {out / 'model.json'}")
    return 0


def cmd_prune(args) -> int:
    try:
        model, prov = load_model(args.model)
        train, val, test = _scaled_splits(args, model, prov)
    except Exception as exc:
        raise StageError("load", str(exc)) from exc
    try:
        cfg = PruneSweepConfig(float(args.t_min), int(args.steps), float(args.tolerance))
        result = sweep_and_select(model, val, cfg, test)
    except Exception as exc:
        raise StageError("prune", str(exc)) from exc
    out = Path(args.out)
    _write(out / "prune_sweep.csv", result.to_csv())
    pruned = result.pruned_model
    prov = {**prov, "prune_step": result.selected_step, "thresholds": list(result.selected.thresholds)}
    if args.fine_tune_epochs > 0:
        try:
            tc = TrainConfig(epochs=args.fine_tune_epochs, lr0=prov.get("lr0", 0.01),
                             seed=int(args.seed or 0), spec=_spec_from(prov))
            pruned, history = fine_tune(pruned, train, val, tc)
        except Exception as exc:
            raise StageError("fine_tune", str(exc)) from exc
        _write(out / "fine_tune_history.csv", history.to_csv())
        prov["fine_tune_epochs"] = args.fine_tune_epochs
        print(f"fine-tuned: val {accuracy(pruned, val):.4f}, test {accuracy(pruned, test):.4f}")
    save_model(out / "pruned.json", pruned, prov)
    flag = " (no step within tolerance)" if result.degenerate else ""
    print(f"step {result.selected_step}: ratio {result.ratio:.1f}, val {result.selected.val_acc:.4f}, "
          f"test {result.selected.test_acc:.4f}{flag}")
    return 0


def cmd_quantize(args) -> int:
    try:
        model, prov = load_model(args.model)
        train, val, test = _scaled_splits(args, model, prov)
    except Exception as exc:
        raise StageError("load", str(exc)) from exc
    try:
        select = val if args.select == "val" else test
        report = bits_sweep(model, select, float(args.tolerance), test, _spec_from(prov),
                            rounding=Rounding(args.rounding))
    except Exception as exc:
        raise StageError("quantize", str(exc)) from exc
    out = Path(args.out)
    _write(out / "quant.csv", report.to_csv())
    best = report.smallest_within_tolerance()
    if best is None:
        print("no bit width within tolerance")
    else:
        print(f"smallest T within tolerance: {best.total_bits} (F={best.frac_bits}), test acc {best.accuracy:.4f}")
    return 0


def cmd_experiment(args) -> int:
    cfg = _config_from_args(args)
    report = run_experiment(cfg)
    for r in report.results:
        print(f"{r.combo:10s} unpruned {_fmt(r.unpruned_test_acc):>20s} pruned {_fmt(r.pruned_test_acc):>20s} "
              f"ratio {_fmt(r.prune_ratio)}")
    if report.failures:
        for f in report.failures:
            print(f"FAILED {f['combo']} in stage {f['stage']}: {f['error']}", file=sys.stderr)
        return 1
    return 0


def cmd_report(args) -> int:
    reports = []
    for item in args.reports:
        path = Path(item)
        if path.is_dir():
            path = path / "report.json"
        reports.append(RunReport.from_json(path.read_text(encoding="utf-8")))
    for path in emit_tables(reports, args.out):
        print(path)
    return 0


COMMANDS = {"train": cmd_train, "prune": cmd_prune, "quantize": cmd_quantize,
            "experiment": cmd_experiment, "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.verb](args)
    except StageError as exc:
        print(f"vcprune {args.verb}: stage {exc}", file=sys.stderr)
        return 2
    except (ConfigError, OSError, ValueError) as exc:
        print(f"vcprune {args.verb}: stage config: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
