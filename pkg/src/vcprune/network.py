"""Feedforward ReLU network with a linear classifier layer."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass(eq=False)
class Layer:
    """Affine layer. ``weights`` has shape (fan_out, fan_in).

    ``mask`` marks the weights that are allowed to be nonzero; ``None`` means
    dense. Pruning sets it so later fine-tuning cannot revive a pruned weight.
    """

    weights: np.ndarray
    biases: np.ndarray
    mask: np.ndarray | None = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[0],):
            raise ValueError(
                f"inconsistent layer shapes {self.weights.shape} / {self.biases.shape}"
            )
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != self.weights.shape:
                raise ValueError("mask shape must match weights")

    @property
    def fan_in(self) -> int:
        return self.weights.shape[1]

    @property
    def fan_out(self) -> int:
        return self.weights.shape[0]

    def copy(self) -> "Layer":
        mask = None if self.mask is None else self.mask.copy()
        return Layer(self.weights.copy(), self.biases.copy(), mask)


@dataclass(eq=False)
class MLP:
    hidden: list[Layer]
    classifier: Layer
    activation: str = "relu"

    def __post_init__(self):
        self.hidden = list(self.hidden)
        width = None
        for layer in self.layers:
            if width is not None and layer.fan_in != width:
                raise ValueError(f"layer expects {layer.fan_in} inputs, previous layer has {width}")
            width = layer.fan_out
        if self.activation != "relu":
            raise ValueError("only ReLU hidden activations are supported")

    @property
    def layers(self) -> list[Layer]:
        return [*self.hidden, self.classifier]

    @property
    def n_inputs(self) -> int:
        return self.layers[0].fan_in

    @property
    def n_classes(self) -> int:
        return self.classifier.fan_out

    @property
    def widths(self) -> list[int]:
        return [self.n_inputs] + [layer.fan_out for layer in self.layers]

    def copy(self) -> "MLP":
        return MLP([h.copy() for h in self.hidden], self.classifier.copy(), self.activation)

    def nonzero_weights(self) -> int:
        return int(sum(np.count_nonzero(layer.weights) for layer in self.layers))

    def n_weights(self) -> int:
        return int(sum(layer.weights.size for layer in self.layers))


@dataclass(eq=False)
class ForwardTrace:
    """Per-layer quantities of one forward pass.

    Each array has a leading sample axis when the input was a matrix.
    """

    pre_activations: list[np.ndarray]
    activations: list[np.ndarray]
    scores: np.ndarray
    inputs: np.ndarray | None = field(default=None, repr=False)


def init_mlp(layer_widths: Sequence[int], seed: int) -> MLP:
    """Glorot-uniform weights, zero biases.

    ``layer_widths`` runs from the input width to the number of classes, so
    ``[n, K]`` gives a linear classifier and ``[n, 50, K]`` one hidden layer.
    """
    widths = [int(w) for w in layer_widths]
    if len(widths) < 2:
        raise ValueError("need at least input and output widths")
    if any(w <= 0 for w in widths):
        raise ValueError(f"layer widths must be positive, got {widths}")
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        s = np.sqrt(6.0 / (fan_in + fan_out))
        layers.append(Layer(rng.uniform(-s, s, size=(fan_out, fan_in)), np.zeros(fan_out)))
    return MLP(layers[:-1], layers[-1])


def forward(model: MLP, x) -> ForwardTrace:
    """Run ``x`` (one sample or a matrix of samples) through the network."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    z = np.atleast_2d(x)
    if z.ndim != 2 or z.shape[1] != model.n_inputs:
        raise ValueError(f"input width {x.shape[-1]} != model input width {model.n_inputs}")
    pre, act = [], []
    inputs = z
    for layer in model.hidden:
        a = z @ layer.weights.T + layer.biases
        z = np.maximum(a, 0.0)
        pre.append(a)
        act.append(z)
    scores = z @ model.classifier.weights.T + model.classifier.biases
    if single:
        return ForwardTrace([a[0] for a in pre], [h[0] for h in act], scores[0], inputs[0])
    return ForwardTrace(pre, act, scores, inputs)


def classifier_inputs(model: MLP, X) -> np.ndarray:
    """Activations feeding the classifier layer (the inputs themselves when P=0)."""
    trace = forward(model, np.atleast_2d(X))
    return trace.activations[-1] if trace.activations else trace.inputs


def predict(model: MLP, X) -> np.ndarray:
    # argmax returns the first maximum, i.e. ties go to the lowest class index
    return np.argmax(forward(model, np.atleast_2d(X)).scores, axis=1)


def accuracy(model: MLP, data) -> float:
    if data.n_samples == 0:
        raise ValueError("accuracy of an empty dataset is undefined")
    return float(np.mean(predict(model, data.features) == data.labels))
