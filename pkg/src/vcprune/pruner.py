"""Post-training magnitude pruning with a per-layer threshold sweep.

For each layer the interval between a minimum threshold and the layer's
largest |w| is cut into ``steps`` equal pieces. Step k prunes, in every layer
at once, the weights whose magnitude is below that layer's k-th threshold.
Step 0 prunes only below the minimum threshold.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field

import numpy as np

from .network import MLP, Layer, accuracy
from .trainer import TrainConfig, TrainHistory, train


class DegenerateCompressionWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PruneSweepConfig:
    t_min: float = 1e-3
    steps: int = 50
    tolerance: float = 0.01

    def __post_init__(self):
        if not self.t_min > 0:
            raise ValueError("t_min must be > 0")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.tolerance < 0:
            raise ValueError("tolerance must be >= 0")


def threshold_schedule(layer: Layer, config: PruneSweepConfig = PruneSweepConfig()) -> list[float]:
    if layer.weights.size == 0:
        raise ValueError("layer has no weights")
    top = float(np.max(np.abs(layer.weights)))
    if top <= config.t_min:
        return [config.t_min]
    width = (top - config.t_min) / config.steps
    thresholds = [config.t_min + k * width for k in range(1, config.steps + 1)]
    # pin the last step to max|w| exactly so rounding cannot prune the largest weight
    thresholds[-1] = top
    return thresholds


def layer_threshold(schedule: list[float], step: int, t_min: float) -> float:
    if step == 0:
        return t_min
    return schedule[min(step, len(schedule)) - 1]


def prune_at(model: MLP, step: int, config: PruneSweepConfig = PruneSweepConfig()) -> MLP:
    """Copy of ``model`` with weights below the step-``step`` thresholds zeroed and masked."""
    if not 0 <= step <= config.steps:
        raise ValueError(f"step {step} outside [0, {config.steps}]")
    pruned = model.copy()
    for layer in pruned.layers:
        t = layer_threshold(threshold_schedule(layer, config), step, config.t_min)
        keep = np.abs(layer.weights) >= t
        if layer.mask is not None:
            keep &= layer.mask
        layer.weights = np.where(keep, layer.weights, 0.0)
        layer.mask = keep
    return pruned


def prune_with_thresholds(model: MLP, thresholds) -> MLP:
    pruned = model.copy()
    for layer, t in zip(pruned.layers, thresholds):
        keep = np.abs(layer.weights) >= t
        layer.weights = np.where(keep, layer.weights, 0.0)
        layer.mask = keep
    return pruned


def compression_ratio(before: MLP, after: MLP) -> float:
    """Nonzero weights before / after (biases excluded)."""
    if before.widths != after.widths:
        raise ValueError("models have different architectures")
    nz_before = before.nonzero_weights()
    nz_after = after.nonzero_weights()
    if nz_after == 0:
        warnings.warn(
            "pruned model has no nonzero weights; reporting the unpruned count as the ratio",
            DegenerateCompressionWarning,
            stacklevel=2,
        )
        return float(nz_before)
    return nz_before / nz_after


@dataclass(frozen=True)
class SweepStep:
    step: int
    thresholds: tuple[float, ...]
    nonzeros: int
    val_acc: float
    test_acc: float | None = None


@dataclass(eq=False)
class PruneResult:
    steps: list[SweepStep]
    selected_step: int
    pruned_model: MLP
    ratio: float
    baseline_val_acc: float
    baseline_test_acc: float | None = None
    degenerate: bool = False
    config: PruneSweepConfig = field(default_factory=PruneSweepConfig)

    @property
    def selected(self) -> SweepStep:
        return self.steps[self.selected_step]

    def to_csv(self) -> str:
        n_layers = len(self.steps[0].thresholds)
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["step", *[f"threshold_{i}" for i in range(n_layers)],
                         "nonzeros", "val_acc", "test_acc"])
        for s in self.steps:
            writer.writerow([s.step, *[repr(float(t)) for t in s.thresholds], s.nonzeros,
                             repr(float(s.val_acc)), "" if s.test_acc is None else repr(float(s.test_acc))])
        return out.getvalue()


def sweep_and_select(model: MLP, val, config: PruneSweepConfig = PruneSweepConfig(),
                     test=None) -> PruneResult:
    """Evaluate every sweep step and keep the sparsest one within tolerance.

    The selected step is the largest one whose validation accuracy is at
    least the unpruned validation accuracy minus ``config.tolerance``. If
    none qualifies, step 0 is returned with ``degenerate=True``.
    """
    if val.n_samples == 0:
        raise ValueError("validation set is empty")
    baseline = accuracy(model, val)
    baseline_test = accuracy(model, test) if test is not None else None
    schedules = [threshold_schedule(layer, config) for layer in model.layers]
    steps, models = [], []
    for k in range(config.steps + 1):
        thresholds = tuple(layer_threshold(s, k, config.t_min) for s in schedules)
        pruned = prune_with_thresholds(model, thresholds)
        steps.append(SweepStep(
            k, thresholds, pruned.nonzero_weights(), accuracy(pruned, val),
            accuracy(pruned, test) if test is not None else None,
        ))
        models.append(pruned)

    ok = [s.step for s in steps if s.val_acc >= baseline - config.tolerance]
    degenerate = not ok
    selected = 0 if degenerate else max(ok)
    chosen = models[selected]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateCompressionWarning)
        ratio = compression_ratio(model, chosen)
    return PruneResult(steps, selected, chosen, ratio, baseline, baseline_test, degenerate, config)


def fine_tune(pruned: MLP, train_data, val_data, config: TrainConfig) -> tuple[MLP, TrainHistory]:
    """Optional retraining of a pruned model; masks keep pruned weights at zero.

    Off by default in the pipeline, which reports direct post-hoc pruning.
    """
    pruned = pruned.copy()
    for layer in pruned.layers:
        if layer.mask is None:
            layer.mask = layer.weights != 0
    return train(pruned, train_data, val_data, config)
