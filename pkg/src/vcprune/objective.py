"""Training objective: multiclass hinge plus weight and pre-activation penalties.

The objective for a batch of samples is

    sum_i sum_{j != y_i} max(0, 1 - net_{y_i} + net_j)
      + (C/2) * sum ||W||^2 + l1 * sum |W|
      + (D/2) * sum_i (||net^i||^2 [+ sum_h ||a_h^i||^2 for all-layer scope])

in sum form (no per-sample averaging). Biases are not penalized directly,
they enter the data-dependent term through the pre-activations.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .network import MLP, ForwardTrace, forward


class Scope(str, Enum):
    NONE = "none"
    LAST_LAYER = "last_layer"
    ALL_LAYERS = "all_layers"


@dataclass(frozen=True)
class RegularizerSpec:
    C: float = 0.0
    D: float = 0.0
    l1: float = 0.0
    scope: Scope = Scope.NONE

    def __post_init__(self):
        object.__setattr__(self, "scope", Scope(self.scope))
        for name in ("C", "D", "l1"):
            value = float(getattr(self, name))
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {value}")
            object.__setattr__(self, name, value)

    @property
    def effective_D(self) -> float:
        return 0.0 if self.scope is Scope.NONE else self.D

    def as_dict(self) -> dict:
        return {"C": self.C, "D": self.D, "l1": self.l1, "scope": self.scope.value}


@dataclass(frozen=True)
class LossBreakdown:
    hinge: float
    l2_term: float
    l1_term: float
    data_dep_term: float

    @property
    def total(self) -> float:
        return self.hinge + self.l2_term + self.l1_term + self.data_dep_term

    def as_dict(self) -> dict:
        return {
            "hinge": self.hinge,
            "l2": self.l2_term,
            "l1": self.l1_term,
            "data_dep": self.data_dep_term,
            "total": self.total,
        }


def multiclass_hinge(scores, label: int) -> float:
    scores = np.asarray(scores, dtype=np.float64)
    if not 0 <= label < scores.shape[0]:
        raise ValueError(f"label {label} out of range for {scores.shape[0]} classes")
    margins = 1.0 - scores[label] + scores
    margins[label] = 0.0
    return float(np.maximum(margins, 0.0).sum())


def _hinge_margins(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    rows = np.arange(scores.shape[0])
    margins = 1.0 - scores[rows, labels][:, None] + scores
    margins[rows, labels] = 0.0
    return margins


def data_dependent_penalty(trace: ForwardTrace, spec: RegularizerSpec) -> float:
    D = spec.effective_D
    if D == 0.0:
        return 0.0
    total = float(np.sum(np.square(trace.scores)))
    if spec.scope is Scope.ALL_LAYERS:
        total += sum(float(np.sum(np.square(a))) for a in trace.pre_activations)
    return 0.5 * D * total


def weight_penalties(model: MLP, spec: RegularizerSpec) -> tuple[float, float]:
    l2 = 0.0
    l1 = 0.0
    for layer in model.layers:
        if spec.C:
            l2 += float(np.sum(np.square(layer.weights)))
        if spec.l1:
            l1 += float(np.sum(np.abs(layer.weights)))
    return 0.5 * spec.C * l2, spec.l1 * l1


def full_objective(model: MLP, batch, spec: RegularizerSpec,
                   data_scale: float = 1.0) -> LossBreakdown:
    """Objective over ``batch``.

    ``data_scale`` multiplies the per-sample terms (hinge and data-dependent)
    but not the weight penalties; mini-batch training passes M/|batch|.
    """
    if batch.n_samples == 0:
        raise ValueError("objective of an empty batch")
    trace = forward(model, batch.features)
    hinge = float(np.maximum(_hinge_margins(trace.scores, batch.labels), 0.0).sum())
    l2, l1 = weight_penalties(model, spec)
    return LossBreakdown(
        hinge=data_scale * hinge,
        l2_term=l2,
        l1_term=l1,
        data_dep_term=data_scale * data_dependent_penalty(trace, spec),
    )


@dataclass(eq=False)
class LayerGradient:
    weights: np.ndarray
    biases: np.ndarray


def loss_and_gradients(model: MLP, batch, spec: RegularizerSpec,
                       data_scale: float = 1.0) -> tuple[LossBreakdown, list[LayerGradient]]:
    """Objective value and its subgradient, one entry per layer (hidden first).

    Subgradients at kinks are zero: an inactive hinge term at margin exactly
    0, a ReLU unit at pre-activation exactly 0, and |w| at w = 0.
    """
    if batch.n_samples == 0:
        raise ValueError("gradient of an empty batch")
    X, y = batch.features, batch.labels
    trace = forward(model, X)
    S = trace.scores
    D = spec.effective_D

    margins = _hinge_margins(S, y)
    active = margins > 0.0
    dS = active.astype(np.float64)
    dS[np.arange(S.shape[0]), y] = -active.sum(axis=1)
    if D:
        dS += D * S
    dS *= data_scale

    inputs = [X, *trace.activations]
    grads = []
    delta = dS
    layers = model.layers
    for h in range(len(layers) - 1, -1, -1):
        layer = layers[h]
        grads.append(LayerGradient(delta.T @ inputs[h], delta.sum(axis=0)))
        if h == 0:
            break
        a = trace.pre_activations[h - 1]
        delta = (delta @ layer.weights) * (a > 0.0)
        if D and spec.scope is Scope.ALL_LAYERS:
            delta = delta + data_scale * D * a
    grads.reverse()

    for layer, g in zip(layers, grads):
        if spec.C:
            g.weights += spec.C * layer.weights
        if spec.l1:
            g.weights += spec.l1 * np.sign(layer.weights)

    l2, l1 = weight_penalties(model, spec)
    loss = LossBreakdown(
        hinge=data_scale * float(np.maximum(margins, 0.0).sum()),
        l2_term=l2,
        l1_term=l1,
        data_dep_term=data_scale * data_dependent_penalty(trace, spec),
    )
    return loss, grads


def gradients(model: MLP, batch, spec: RegularizerSpec,
              data_scale: float = 1.0) -> list[LayerGradient]:
    return loss_and_gradients(model, batch, spec, data_scale)[1]


def vc_gamma(weights, bias, data, C: float) -> float:
    """Data-dependent VC bound  sum_i (w.x_i + b)^2 + C ||w||^2.

    ``weights`` may be one hyperplane (n,) or a stack of K rows (K, n) with a
    matching bias vector, in which case the per-row bounds are summed.
    ``data`` is a Dataset or a plain (M, n) array.
    """
    X = np.asarray(getattr(data, "features", data), dtype=np.float64)
    W = np.atleast_2d(np.asarray(weights, dtype=np.float64))
    b = np.broadcast_to(np.asarray(bias, dtype=np.float64), (W.shape[0],))
    if X.ndim != 2 or X.shape[1] != W.shape[1]:
        raise ValueError(f"weights of length {W.shape[1]} do not match data width {X.shape[-1]}")
    if C < 0:
        raise ValueError("C must be >= 0")
    proj = X @ W.T + b
    return float(np.sum(np.square(proj)) + C * np.sum(np.square(W)))
