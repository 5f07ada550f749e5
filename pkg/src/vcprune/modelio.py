"""Versioned JSON model files.

Floats are written with ``float.hex`` so a save/load round trip is bit-exact,
including quantized values and signed zeros.
"""

from __future__ import annotations

import hashlib
import json
from os import PathLike
from pathlib import Path

import numpy as np

from .network import MLP, Layer

FORMAT = "vcprune.mlp"
VERSION = 1


class ModelFormatError(ValueError):
    pass


def _encode(values: np.ndarray) -> list[str]:
    return [float(v).hex() for v in np.asarray(values, dtype=np.float64).ravel()]


def _decode(values, shape) -> np.ndarray:
    try:
        flat = np.array([float.fromhex(v) for v in values], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ModelFormatError(f"bad float encoding: {exc}") from None
    if flat.size != int(np.prod(shape)):
        raise ModelFormatError(f"expected {int(np.prod(shape))} values for shape {shape}, got {flat.size}")
    return flat.reshape(shape)


def model_to_dict(model: MLP, provenance: dict | None = None) -> dict:
    layers = []
    for i, layer in enumerate(model.layers):
        entry = {
            "role": "classifier" if i == len(model.hidden) else "hidden",
            "shape": list(layer.weights.shape),
            "weights": _encode(layer.weights),
            "biases": _encode(layer.biases),
        }
        if layer.mask is not None:
            entry["mask"] = "".join("1" if m else "0" for m in layer.mask.ravel())
        layers.append(entry)
    return {
        "format": FORMAT,
        "version": VERSION,
        "activation": model.activation,
        "layers": layers,
        "provenance": provenance or {},
    }


def model_from_dict(doc: dict) -> tuple[MLP, dict]:
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise ModelFormatError("not a vcprune model file")
    if doc.get("version") != VERSION:
        raise ModelFormatError(f"unsupported model file version {doc.get('version')!r} (expected {VERSION})")
    try:
        layers = []
        for entry in doc["layers"]:
            shape = tuple(int(s) for s in entry["shape"])
            mask = None
            if "mask" in entry:
                bits = entry["mask"]
                if len(bits) != shape[0] * shape[1] or set(bits) - {"0", "1"}:
                    raise ModelFormatError("corrupt mask")
                mask = np.array([b == "1" for b in bits]).reshape(shape)
            layers.append(Layer(_decode(entry["weights"], shape), _decode(entry["biases"], (shape[0],)), mask))
        if not layers or doc["layers"][-1].get("role") != "classifier":
            raise ModelFormatError("last layer must be the classifier")
        model = MLP(layers[:-1], layers[-1], doc.get("activation", "relu"))
    except (KeyError, TypeError) as exc:
        raise ModelFormatError(f"corrupt model file: {exc!r}") from None
    except ValueError as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"corrupt model file: {exc}") from None
    return model, doc.get("provenance", {})


def dumps_model(model: MLP, provenance: dict | None = None) -> str:
    return json.dumps(model_to_dict(model, provenance), sort_keys=True, indent=1) + "\n"


def save_model(path: str | PathLike, model: MLP, provenance: dict | None = None) -> str:
    """Write ``model`` to ``path``; returns the sha256 of the written bytes."""
    text = dumps_model(model, provenance)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def load_model(path: str | PathLike) -> tuple[MLP, dict]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not valid JSON ({exc})") from None
    return model_from_dict(doc)


def file_sha256(path: str | PathLike) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
