"""Feedforward classifiers with a VC-bound regularizer, magnitude pruning and fixed-point quantization."""

from .dataio import Dataset, load_libsvm, split, standardize
from .network import MLP, Layer, accuracy, forward, init_mlp, predict
from .objective import RegularizerSpec, Scope, full_objective, gradients, vc_gamma
from .pruner import PruneSweepConfig, compression_ratio, prune_at, sweep_and_select
from .quantizer import FixedPointFormat, Rounding, bits_sweep, quantize_model, quantize_value, theorem1_check
from .trainer import Combo, TrainConfig, grid_search, train

__version__ = "0.1.0"

__all__ = [
    "Dataset", "load_libsvm", "split", "standardize",
    "MLP", "Layer", "accuracy", "forward", "init_mlp", "predict",
    "RegularizerSpec", "Scope", "full_objective", "gradients", "vc_gamma",
    "PruneSweepConfig", "compression_ratio", "prune_at", "sweep_and_select",
    "FixedPointFormat", "Rounding", "bits_sweep", "quantize_model", "quantize_value", "theorem1_check",
    "Combo", "TrainConfig", "grid_search", "train",
]
