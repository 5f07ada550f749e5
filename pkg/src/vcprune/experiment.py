"""Experiment orchestration: grid search, pruning and quantization per combo.

Configuration is a flat ``key = value`` file. Every number written to the
output directory comes from a stored artifact (model file, CSV) and no
timestamps are recorded, so a rerun with the same config is byte-identical.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import re
from dataclasses import asdict, dataclass, field, fields
from os import PathLike
from pathlib import Path

import numpy as np

from . import dataio
from .modelio import file_sha256, load_model, save_model
from .network import accuracy
from .pruner import PruneSweepConfig, sweep_and_select
from .quantizer import QuantReport, QuantRow, Rounding, bits_sweep, quantized_compression_ratio
from .seeds import sub_seed
from .trainer import C_GRID, D_GRID, LR_GRID, Combo, TrainConfig, grid_search

log = logging.getLogger(__name__)

DEFAULT_COMBOS = ("H", "H+W2", "H+W1", "H+LCA", "H+W2+LCA", "H+W1+LCA")


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"{stage}: {message}")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.replace(" ", "").split(",") if t)


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.replace(" ", "").split(",") if t)


def _bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    data: str = ""
    splits: str = "0.7,0.15,0.15"
    n_features: int = 0
    hidden: tuple[int, ...] = (50,)
    combos: tuple[str, ...] = DEFAULT_COMBOS
    grid_c: tuple[float, ...] = C_GRID
    grid_d: tuple[float, ...] = D_GRID
    grid_lr: tuple[float, ...] = LR_GRID
    epochs: int = 500
    batch_size: int = 128
    objective_form: str = "mean"
    standardize: bool = True
    seed: int = 0
    prune_t_min: float = 1e-3
    prune_steps: int = 50
    tolerance: float = 0.01
    quant_select: str = "val"
    quant_rounding: str = "toward_zero"
    gamma_c: float = 1.0
    jobs: int = 1
    out: str = "runs"
    base_dir: str = field(default=".", repr=False)

    _parsers = {
        "n_features": int, "hidden": _ints, "combos": lambda s: tuple(c.strip() for c in s.split(",") if c.strip()),
        "grid_c": _floats, "grid_d": _floats, "grid_lr": _floats, "epochs": int, "batch_size": int,
        "standardize": _bool, "seed": int, "prune_t_min": float, "prune_steps": int,
        "tolerance": float, "gamma_c": float, "jobs": int,
    }

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls) if f.name != "base_dir"]

    @classmethod
    def from_text(cls, text: str, base_dir: str | PathLike = ".") -> "ExperimentConfig":
        values = {}
        for line_no, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key = key.strip()
            if not sep:
                raise ConfigError(f"line {line_no}: expected key = value")
            if key not in cls.keys():
                raise ConfigError(f"line {line_no}: unknown key {key!r}")
            if key in values:
                raise ConfigError(f"line {line_no}: duplicate key {key!r}")
            values[key] = value.strip()
        return cls.from_strings(values, base_dir)

    @classmethod
    def from_strings(cls, values: dict, base_dir: str | PathLike = ".") -> "ExperimentConfig":
        kwargs = {}
        for key, value in values.items():
            parse = cls._parsers.get(key, str)
            try:
                kwargs[key] = parse(value)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from None
        cfg = cls(**kwargs, base_dir=str(base_dir))
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path: str | PathLike) -> "ExperimentConfig":
        path = Path(path)
        return cls.from_text(path.read_text(encoding="utf-8"), path.parent)

    def validate(self):
        if not self.data:
            raise ConfigError("data is required")
        for combo in self.combos:
            Combo.parse(combo)
        if not self.combos:
            raise ConfigError("at least one combo is required")
        if self.quant_select not in ("val", "test"):
            raise ConfigError("quant_select must be 'val' or 'test'")
        Rounding(self.quant_rounding)
        if self.objective_form not in ("mean", "sum"):
            raise ConfigError("objective_form must be 'mean' or 'sum'")
        if any(h <= 0 for h in self.hidden):
            raise ConfigError("hidden widths must be positive")

    def to_text(self) -> str:
        lines = []
        for key in self.keys():
            value = getattr(self, key)
            if isinstance(value, tuple):
                value = ",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, float):
                value = repr(float(value))
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    @property
    def depth(self) -> int:
        return len(self.hidden)


# -- data -----------------------------------------------------------------------

def _is_float(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def load_splits(data: str, splits: str, seed: int, resolve=Path, n_features: int = 0):
    """Build (train, val, test) from a data path and a split description.

    ``splits`` is one of
      * ``a,b,c``          fractions of ``data`` for train/val/test,
      * ``VAL,TEST``       separate files for validation and test,
      * ``f,TEST``         validation carved off ``data`` as fraction f, test file given.
    """
    tokens = [t.strip() for t in splits.split(",") if t.strip()]
    hint = n_features or None
    data_path = resolve(data)
    if len(tokens) == 3 and all(_is_float(t) for t in tokens):
        paths = [data_path]
    elif len(tokens) == 2 and not _is_float(tokens[1]):
        paths = [data_path] + [resolve(t) for t in tokens if not _is_float(t)]
    else:
        raise ConfigError(f"cannot interpret splits {splits!r}")
    missing = [str(p) for p in paths if not Path(p).is_file()]
    if missing:
        raise FileNotFoundError(f"dataset file(s) not found: {', '.join(missing)}")

    if len(paths) == 1:
        full = dataio.load_libsvm(paths[0], hint)
        fracs = [float(t) for t in tokens]
        return dataio.split(full, dataio.SplitSpec(*fracs, seed=sub_seed(seed, "split")))
    loaded = dataio.load_libsvm_files(paths, hint)
    if len(loaded) == 3:
        return tuple(loaded)
    train_full, test = loaded
    train, val = dataio.holdout(train_full, float(tokens[0]), sub_seed(seed, "split"))
    return train, val, test


# -- reports --------------------------------------------------------------------

def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", text).strip("_")


@dataclass
class QuantSummary:
    bits: int | None
    frac_bits: int | None
    test_acc: float | None
    ratio: float | None
    curve: list[dict] = field(default_factory=list)

    @classmethod
    def from_report(cls, report: QuantReport, nz_before: int, nz_after: int) -> "QuantSummary":
        best = report.smallest_within_tolerance()
        curve = [_row_dict(r) for r in [report.baseline, *report.rows]]
        if best is None:
            return cls(None, None, None, None, curve)
        return cls(best.total_bits, best.frac_bits, best.accuracy,
                   quantized_compression_ratio(nz_before, nz_after, best.total_bits), curve)


def _row_dict(r: QuantRow) -> dict:
    return {
        "T": r.total_bits, "F": r.frac_bits, "acc": r.accuracy, "select_acc": r.select_accuracy,
        "margin": None if math.isinf(r.margin) else r.margin, "loss": r.loss,
        "gamma": r.gamma, "gamma_q": r.gamma_q, "cond": r.condition_holds,
        "within_tolerance": r.within_tolerance,
    }


@dataclass
class ComboResult:
    combo: str
    C: float | None = None
    D: float | None = None
    lr: float | None = None
    best_epoch: int | None = None
    unpruned_val_acc: float | None = None
    unpruned_test_acc: float | None = None
    pruned_val_acc: float | None = None
    pruned_test_acc: float | None = None
    prune_ratio: float | None = None
    prune_step: int | None = None
    prune_degenerate: bool | None = None
    nonzeros_before: int | None = None
    nonzeros_after: int | None = None
    quant_unpruned: QuantSummary | None = None
    quant_pruned: QuantSummary | None = None
    artifacts: dict = field(default_factory=dict)


@dataclass
class RunReport:
    dataset: str
    depth: int
    arch: list[int]
    results: list[ComboResult]
    failures: list[dict] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def result(self, combo: str) -> ComboResult:
        for r in self.results:
            if r.combo == combo:
                return r
        raise KeyError(combo)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=1, default=_json_default) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        doc = json.loads(text)
        results = []
        for r in doc["results"]:
            for key in ("quant_unpruned", "quant_pruned"):
                if r.get(key) is not None:
                    r[key] = QuantSummary(**r[key])
            results.append(ComboResult(**r))
        doc["results"] = results
        return cls(**doc)


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _csv_text(rows) -> str:
    out = io.StringIO()
    csv.writer(out, lineterminator="\n").writerows(rows)
    return out.getvalue()


def emit_tables(reports: list[RunReport], out_dir: str | PathLike) -> list[Path]:
    """Write accuracy and compression tables per depth plus one quant curve per model.

    Accuracy tables have one row per dataset and an unpruned and a pruned
    column per combo; compression tables one column per combo.
    """
    if not reports:
        raise ValueError("no reports to tabulate")
    out_dir = Path(out_dir)
    written = []
    for depth in sorted({r.depth for r in reports}):
        group = sorted((r for r in reports if r.depth == depth), key=lambda r: r.dataset)
        combos = []
        for r in group:
            for res in r.results:
                if res.combo not in combos:
                    combos.append(res.combo)

        def cell(report, combo, attr):
            try:
                return _fmt(getattr(report.result(combo), attr))
            except KeyError:
                return ""

        acc_rows = [["dataset", *[f"unpruned:{c}" for c in combos], *[f"pruned:{c}" for c in combos]]]
        comp_rows = [["dataset", *combos]]
        quant_rows = [["dataset", *[f"{stage}:{c}:{k}" for stage in ("unpruned", "pruned")
                                    for c in combos for k in ("bits", "acc", "ratio")]]]
        for r in group:
            acc_rows.append([r.dataset, *[cell(r, c, "unpruned_test_acc") for c in combos],
                             *[cell(r, c, "pruned_test_acc") for c in combos]])
            comp_rows.append([r.dataset, *[cell(r, c, "prune_ratio") for c in combos]])
            qrow = [r.dataset]
            for stage in ("quant_unpruned", "quant_pruned"):
                for c in combos:
                    try:
                        q = getattr(r.result(c), stage)
                    except KeyError:
                        q = None
                    qrow += ["", "", ""] if q is None else [_fmt(q.bits), _fmt(q.test_acc), _fmt(q.ratio)]
            quant_rows.append(qrow)
        for stem, rows in (("accuracy", acc_rows), ("compression", comp_rows), ("quantization", quant_rows)):
            path = out_dir / f"{stem}_fnn{depth}.csv"
            _write(path, _csv_text(rows))
            written.append(path)

        for r in group:
            for res in r.results:
                for stage in ("unpruned", "pruned"):
                    q = getattr(res, f"quant_{stage}")
                    if q is None or not q.curve:
                        continue
                    rows = [["T", "F", "acc", "margin", "loss", "gamma", "gamma_q", "cond"]]
                    for c in q.curve:
                        rows.append([
                            "inf" if c["T"] is None else c["T"], _fmt(c["F"]), _fmt(c["acc"]),
                            "inf" if c["margin"] is None else _fmt(c["margin"]),
                            _fmt(c["loss"]), _fmt(c["gamma"]), _fmt(c["gamma_q"]), int(c["cond"]),
                        ])
                    path = out_dir / "curves" / f"quant_{_slug(r.dataset)}_fnn{depth}_{_slug(res.combo)}_{stage}.csv"
                    _write(path, _csv_text(rows))
                    written.append(path)
    return written


# -- orchestration ----------------------------------------------------------------

def run_experiment(config: ExperimentConfig) -> RunReport:
    """Grid-search, prune and quantize every combo in ``config``.

    Stage failures are recorded in ``report.failures`` and the remaining
    combos still run. A missing dataset aborts before any training.
    """
    config.validate()
    out = config.resolve(config.out)
    try:
        train, val, test = load_splits(config.data, config.splits, config.seed, config.resolve, config.n_features)
    except (OSError, ValueError) as exc:
        raise StageError("load", str(exc)) from exc

    scaler_doc = None
    if config.standardize:
        train, (val, test), scaler = dataio.standardize(train, [val, test])
        scaler_doc = {"mean": [float(v).hex() for v in scaler.mean],
                      "std": [float(v).hex() for v in scaler.std]}
    widths = [train.n_features, *config.hidden, train.n_classes]
    provenance = {
        "config_sha256": config.digest(),
        "seed": config.seed,
        "feature_scaling": "standardize(train mean/std)" if config.standardize else "none",
        "objective_form": config.objective_form,
        "sizes": {"train": train.n_samples, "val": val.n_samples, "test": test.n_samples},
    }
    report = RunReport(config.name, config.depth, widths, [], [], provenance)
    _write(out / "config.txt", config.to_text())

    base = TrainConfig(epochs=config.epochs, batch_size=config.batch_size,
                       seed=config.seed, objective_form=config.objective_form)
    prune_cfg = PruneSweepConfig(config.prune_t_min, config.prune_steps, config.tolerance)
    rounding = Rounding(config.quant_rounding)

    for combo_name in config.combos:
        combo = Combo.parse(combo_name)
        res = ComboResult(combo.name)
        report.results.append(res)
        cdir = out / "models" / _slug(combo.name)
        stage = "train"
        try:
            grid = grid_search(train, val, widths, base, combo, config.grid_c, config.grid_d,
                               config.grid_lr, jobs=config.jobs)
            res.C = grid.c if combo.uses_c else None
            res.D = grid.d if combo.uses_d else None
            res.lr = grid.config.lr0
            res.best_epoch = grid.history.best_epoch
            model = grid.model
            res.unpruned_val_acc = accuracy(model, val)
            res.unpruned_test_acc = accuracy(model, test)
            model_prov = {**provenance, "combo": combo.name, "spec": grid.config.spec.as_dict(),
                          "lr0": grid.config.lr0, "scaler": scaler_doc}
            res.artifacts["unpruned_model"] = str((cdir / "unpruned.json").relative_to(out))
            res.artifacts["unpruned_sha256"] = save_model(cdir / "unpruned.json", model, model_prov)
            _write(cdir / "history.csv", grid.history.to_csv())
            _write(cdir / "grid.csv", _csv_text(
                [["C", "D", "lr", "val_acc", "best_epoch", "error"]]
                + [[_fmt(r.c), _fmt(r.d), _fmt(r.lr), _fmt(r.val_acc), _fmt(r.best_epoch), r.error or ""]
                   for r in grid.runs]))

            stage = "prune"
            pr = sweep_and_select(model, val, prune_cfg, test)
            _write(cdir / "prune_sweep.csv", pr.to_csv())
            pruned_path = cdir / "pruned.json"
            res.artifacts["pruned_model"] = str(pruned_path.relative_to(out))
            res.artifacts["pruned_sha256"] = save_model(
                pruned_path, pr.pruned_model,
                {**model_prov, "pruned_from_sha256": res.artifacts["unpruned_sha256"],
                 "prune_step": pr.selected_step, "thresholds": list(pr.selected.thresholds)})
            res.pruned_val_acc = pr.selected.val_acc
            res.pruned_test_acc = pr.selected.test_acc
            res.prune_ratio = pr.ratio
            res.prune_step = pr.selected_step
            res.prune_degenerate = pr.degenerate
            res.nonzeros_before = model.nonzero_weights()
            res.nonzeros_after = pr.pruned_model.nonzero_weights()

            stage = "quantize"
            select = val if config.quant_select == "val" else test
            q = bits_sweep(model, select, config.tolerance, test, grid.config.spec,
                           config.gamma_c, rounding)
            res.quant_unpruned = QuantSummary.from_report(q, res.nonzeros_before, res.nonzeros_before)
            # the pruned pipeline quantizes the artifact on disk, not the in-memory copy
            if file_sha256(pruned_path) != res.artifacts["pruned_sha256"]:
                raise StageError("quantize", "pruned model file changed on disk")
            pruned_model, _ = load_model(pruned_path)
            q = bits_sweep(pruned_model, select, config.tolerance, test, grid.config.spec,
                           config.gamma_c, rounding)
            res.quant_pruned = QuantSummary.from_report(q, res.nonzeros_before, res.nonzeros_after)
            res.artifacts["quant_source_sha256"] = res.artifacts["pruned_sha256"]
        except Exception as exc:  # partial report; the failure is recorded, not swallowed
            log.exception("combo %s failed during %s", combo.name, stage)
            report.failures.append({"combo": combo.name, "stage": stage, "error": f"{type(exc).__name__}: {exc}"})

    _write(out / "report.json", report.to_json())
    emit_tables([report], out)
    return report
