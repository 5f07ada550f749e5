"""Mini-batch SGD with a 1/epoch learning-rate decay and (C, D, lr) grid search."""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from .network import MLP, accuracy, init_mlp
from .objective import RegularizerSpec, Scope, full_objective, loss_and_gradients
from .seeds import sub_seed

log = logging.getLogger(__name__)

C_GRID = (1e-4, 1e-3, 1e-2, 1e-1)
D_GRID = (1e-8, 1e-7, 1e-6, 1e-5, 1e-4)
LR_GRID = (1e-2, 1e-1)


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    batch_size: int = 128
    lr0: float = 0.01
    seed: int = 0
    spec: RegularizerSpec = field(default_factory=RegularizerSpec)
    # "mean": per-sample terms averaged over the batch, penalties added once per
    # step. "sum": per-sample terms rescaled by M/|batch| (sum-form objective).
    objective_form: str = "mean"

    def __post_init__(self):
        if self.objective_form not in ("mean", "sum"):
            raise ValueError(f"objective_form must be 'mean' or 'sum', got {self.objective_form!r}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.lr0 > 0:
            raise ValueError("lr0 must be > 0")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    lr: float
    hinge: float
    l2: float
    l1: float
    data_dep: float
    total: float
    train_acc: float
    val_acc: float


HISTORY_COLUMNS = ("epoch", "lr", "hinge", "l2", "l1", "data_dep", "total", "train_acc", "val_acc")


@dataclass
class TrainHistory:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0

    def __len__(self):
        return len(self.epochs)

    @property
    def val_accuracy(self) -> list[float]:
        return [e.val_acc for e in self.epochs]

    @property
    def best_val_acc(self) -> float:
        return self.epochs[self.best_epoch - 1].val_acc

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(HISTORY_COLUMNS)
        for e in self.epochs:
            values = (e.lr, e.hinge, e.l2, e.l1, e.data_dep, e.total, e.train_acc, e.val_acc)
            writer.writerow([e.epoch, *[repr(float(v)) for v in values]])
        return out.getvalue()


def lr_at_epoch(lr0: float, epoch: int) -> float:
    if epoch < 1:
        raise ValueError("epochs are counted from 1")
    return lr0 / epoch


class _Batch(NamedTuple):
    features: np.ndarray
    labels: np.ndarray

    @property
    def n_samples(self):
        return self.labels.shape[0]


def sgd_step(model: MLP, batch, spec: RegularizerSpec, lr: float, data_scale: float):
    """One in-place SGD update; returns the pre-update loss breakdown."""
    loss, grads = loss_and_gradients(model, batch, spec, data_scale)
    if not np.isfinite(loss.total):
        return loss
    for layer, g in zip(model.layers, grads):
        layer.weights -= lr * g.weights
        layer.biases -= lr * g.biases
        if layer.mask is not None:
            layer.weights *= layer.mask
    return loss


def train(model: MLP, train_data, val_data, config: TrainConfig) -> tuple[MLP, TrainHistory]:
    """Train a copy of ``model``; return the best-validation-accuracy snapshot.

    With ``objective_form="mean"`` each step descends
    mean-batch(hinge + data term) + weight penalties; with ``"sum"`` the batch
    terms are rescaled by M/|batch| so one step's expected gradient is that of
    the sum-form objective. The logged loss is the matching full-data
    objective. Ties in validation accuracy keep the earlier epoch.
    """
    if train_data.n_features != model.n_inputs or val_data.n_features != model.n_inputs:
        raise ValueError("dataset width does not match the model input width")
    if train_data.n_classes > model.n_classes or val_data.n_classes > model.n_classes:
        raise ValueError("dataset has more classes than the model outputs")

    model = model.copy()
    rng = np.random.default_rng(sub_seed(config.seed, "shuffle"))
    X, y = train_data.features, train_data.labels
    m = X.shape[0]
    bs = config.batch_size
    history = TrainHistory()
    best_model, best_val = None, -1.0

    total_scale = 1.0 if config.objective_form == "sum" else 1.0 / m

    for epoch in range(1, config.epochs + 1):
        lr = lr_at_epoch(config.lr0, epoch)
        order = rng.permutation(m)
        with np.errstate(over="ignore", invalid="ignore"):
            for start in range(0, m, bs):
                idx = order[start:start + bs]
                scale = total_scale * m / idx.size
                loss = sgd_step(model, _Batch(X[idx], y[idx]), config.spec, lr, scale)
                if not np.isfinite(loss.total):
                    raise TrainingDiverged(
                        f"non-finite loss at epoch {epoch} (lr={lr:g}, spec={config.spec}); "
                        "learning rate or D is too high"
                    )
            loss = full_objective(model, train_data, config.spec, total_scale)
        if not np.isfinite(loss.total):
            raise TrainingDiverged(f"non-finite training loss after epoch {epoch} (lr={lr:g})")
        val_acc = accuracy(model, val_data)
        history.epochs.append(EpochRecord(
            epoch, lr, loss.hinge, loss.l2_term, loss.l1_term, loss.data_dep_term, loss.total,
            accuracy(model, train_data), val_acc,
        ))
        if val_acc > best_val:
            best_val, best_model = val_acc, model.copy()
            history.best_epoch = epoch
    return best_model, history


# -- regularizer combinations -------------------------------------------------

@dataclass(frozen=True)
class Combo:
    """A regularizer combination such as ``H+W1+LCA``.

    W2 / W1 attach the grid value C to the L2 / L1 weight penalty; LCL / LCA
    switch on the pre-activation penalty D for the last / all layers.
    """

    name: str
    l2: bool = False
    l1: bool = False
    scope: Scope = Scope.NONE

    @classmethod
    def parse(cls, name: str) -> "Combo":
        tokens = [t.strip().upper() for t in name.replace(" ", "").split("+")]
        if not tokens or tokens[0] != "H":
            raise ValueError(f"combo {name!r} must start with H (hinge loss)")
        seen = set()
        l2 = l1 = False
        scope = Scope.NONE
        for tok in tokens[1:]:
            if tok in seen:
                raise ValueError(f"duplicate term {tok} in combo {name!r}")
            seen.add(tok)
            if tok in ("W2", "W"):
                l2 = True
            elif tok == "W1":
                l1 = True
            elif tok == "LCA":
                scope = Scope.ALL_LAYERS
            elif tok == "LCL":
                scope = Scope.LAST_LAYER
            else:
                raise ValueError(f"unknown term {tok!r} in combo {name!r}")
        if l1 and l2:
            raise ValueError(f"combo {name!r} mixes W1 and W2; they would share one C")
        if "LCA" in seen and "LCL" in seen:
            raise ValueError(f"combo {name!r} sets both LCA and LCL")
        return cls("+".join(tokens), l2, l1, scope)

    @property
    def uses_c(self) -> bool:
        return self.l2 or self.l1

    @property
    def uses_d(self) -> bool:
        return self.scope is not Scope.NONE

    def spec(self, c: float = 0.0, d: float = 0.0) -> RegularizerSpec:
        return RegularizerSpec(
            C=c if self.l2 else 0.0,
            l1=c if self.l1 else 0.0,
            D=d if self.uses_d else 0.0,
            scope=self.scope,
        )


@dataclass(frozen=True)
class GridRun:
    c: float
    d: float
    lr: float
    val_acc: float | None
    best_epoch: int | None
    error: str | None = None


@dataclass(eq=False)
class GridResult:
    model: MLP
    config: TrainConfig
    history: TrainHistory
    c: float
    d: float
    runs: list[GridRun]

    @property
    def val_acc(self) -> float:
        return self.history.best_val_acc


def grid_cells(combo: Combo, c_grid=C_GRID, d_grid=D_GRID, lr_grid=LR_GRID):
    cs = sorted(c_grid) if combo.uses_c else [0.0]
    ds = sorted(d_grid) if combo.uses_d else [0.0]
    lrs = sorted(lr_grid)
    if not cs or not ds or not lrs:
        raise ValueError("hyperparameter grids must be nonempty")
    return [(c, d, lr) for c in cs for d in ds for lr in lrs]


def _run_cell(args):
    init, train_data, val_data, config = args
    try:
        model, history = train(init, train_data, val_data, config)
    except TrainingDiverged as exc:
        return None, None, str(exc)
    return model, history, None


def grid_search(train_data, val_data, widths: Sequence[int], base_config: TrainConfig,
                combo: Combo | str, c_grid=C_GRID, d_grid=D_GRID, lr_grid=LR_GRID,
                jobs: int = 1) -> GridResult:
    """Train one model per applicable (C, D, lr) cell and keep the best on validation.

    All cells start from the same initialization. Ties go to the smaller C,
    then the smaller D, then the smaller learning rate.
    """
    if isinstance(combo, str):
        combo = Combo.parse(combo)
    cells = grid_cells(combo, c_grid, d_grid, lr_grid)
    init = init_mlp(widths, sub_seed(base_config.seed, "init"))
    configs = [replace(base_config, lr0=lr, spec=combo.spec(c, d)) for c, d, lr in cells]
    jobs_args = [(init, train_data, val_data, cfg) for cfg in configs]

    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_cell, jobs_args))
    else:
        outcomes = [_run_cell(a) for a in jobs_args]

    runs = []
    best = None
    for (c, d, lr), cfg, (model, history, error) in zip(cells, configs, outcomes):
        if error is not None:
            log.warning("grid cell C=%g D=%g lr=%g diverged: %s", c, d, lr, error)
            runs.append(GridRun(c, d, lr, None, None, error))
            continue
        runs.append(GridRun(c, d, lr, history.best_val_acc, history.best_epoch))
        key = (-history.best_val_acc, c, d, lr)
        if best is None or key < best[0]:
            best = (key, GridResult(model, cfg, history, c, d, runs))
    if best is None:
        raise TrainingDiverged(f"all {len(cells)} grid runs diverged for {combo.name}")
    return best[1]
