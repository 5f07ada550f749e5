import json

import numpy as np
import pytest

from vcprune.modelio import (
    ModelFormatError,
    dumps_model,
    file_sha256,
    load_model,
    model_from_dict,
    model_to_dict,
    save_model,
)
from vcprune.network import init_mlp
from vcprune.pruner import prune_at
from vcprune.quantizer import FixedPointFormat, quantize_model


class TestRoundTrip:
    def test_bit_exact_with_mask(self, tmp_path):
        m = prune_at(init_mlp([7, 5, 4, 3], 2), 20)
        m.hidden[0].biases[:] = np.random.default_rng(0).normal(size=5)
        digest = save_model(tmp_path / "m.json", m, {"combo": "H+W1"})
        assert digest == file_sha256(tmp_path / "m.json")
        back, prov = load_model(tmp_path / "m.json")
        assert prov == {"combo": "H+W1"}
        for a, b in zip(m.layers, back.layers):
            assert a.weights.tobytes() == b.weights.tobytes()
            assert a.biases.tobytes() == b.biases.tobytes()
            np.testing.assert_array_equal(a.mask, b.mask)

    def test_quantized_values_survive(self):
        m = quantize_model(init_mlp([4, 3], 1), FixedPointFormat(5, 3))
        back, _ = model_from_dict(json.loads(dumps_model(m)))
        np.testing.assert_array_equal(back.classifier.weights, m.classifier.weights)

    def test_linear_model(self):
        m = init_mlp([3, 2], 0)
        back, _ = model_from_dict(model_to_dict(m))
        assert back.hidden == [] and back.widths == [3, 2]

    def test_serialization_is_deterministic(self):
        assert dumps_model(init_mlp([4, 3, 2], 9), {"b": 1, "a": 2}) == dumps_model(init_mlp([4, 3, 2], 9), {"a": 2, "b": 1})


class TestErrors:
    def _doc(self):
        return model_to_dict(prune_at(init_mlp([3, 2], 0), 10))

    def test_wrong_version(self):
        doc = self._doc()
        doc["version"] = 99
        with pytest.raises(ModelFormatError, match="version"):
            model_from_dict(doc)

    def test_not_a_model(self):
        with pytest.raises(ModelFormatError):
            model_from_dict({"format": "something else"})

    def test_value_count(self):
        doc = self._doc()
        doc["layers"][0]["weights"].pop()
        with pytest.raises(ModelFormatError):
            model_from_dict(doc)

    def test_corrupt_mask(self):
        doc = self._doc()
        doc["layers"][0]["mask"] = "01x"
        with pytest.raises(ModelFormatError, match="mask"):
            model_from_dict(doc)

    def test_bad_json(self, tmp_path):
        (tmp_path / "bad.json").write_text("{")
        with pytest.raises(ModelFormatError):
            load_model(tmp_path / "bad.json")

    def test_missing_classifier_role(self):
        doc = self._doc()
        doc["layers"][-1]["role"] = "hidden"
        with pytest.raises(ModelFormatError):
            model_from_dict(doc)
