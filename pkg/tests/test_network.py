import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vcprune.dataio import Dataset
from vcprune.network import MLP, Layer, accuracy, forward, init_mlp, predict

from oracles import loop_forward, random_model


class TestInit:
    def test_shapes(self):
        m = init_mlp([180, 50, 3], seed=1)
        assert m.hidden[0].weights.shape == (50, 180)
        assert m.classifier.weights.shape == (3, 50)
        assert all(not layer.biases.any() for layer in m.layers)

    def test_deterministic(self):
        a = init_mlp([10, 7, 4], seed=5)
        b = init_mlp([10, 7, 4], seed=5)
        for la, lb in zip(a.layers, b.layers):
            assert la.weights.tobytes() == lb.weights.tobytes()
        c = init_mlp([10, 7, 4], seed=6)
        assert not np.array_equal(a.hidden[0].weights, c.hidden[0].weights)

    def test_linear_model_bound(self):
        m = init_mlp([4, 2], seed=0)
        assert m.hidden == []
        assert np.all(np.abs(m.classifier.weights) <= 1.0)

    @pytest.mark.parametrize("widths", [[], [3], [3, 0, 2]])
    def test_bad_widths(self, widths):
        with pytest.raises(ValueError):
            init_mlp(widths, seed=0)

    def test_mismatched_layers_rejected(self):
        with pytest.raises(ValueError):
            MLP([Layer(np.zeros((3, 2)), np.zeros(3))], Layer(np.zeros((2, 4)), np.zeros(2)))


class TestForward:
    def test_zero_model(self):
        m = MLP([Layer(np.zeros((3, 2)), np.zeros(3))], Layer(np.zeros((2, 3)), np.zeros(2)))
        np.testing.assert_array_equal(forward(m, [4.0, -1.0]).scores, [0.0, 0.0])

    def test_identity_classifier(self):
        m = MLP([], Layer(np.eye(2), np.zeros(2)))
        np.testing.assert_array_equal(forward(m, [2.0, -3.0]).scores, [2.0, -3.0])

    def test_relu_kills_negative_unit(self):
        m = MLP([Layer([[1.0, -1.0]], [-1.0])], Layer([[2.0], [-1.0]], [0.25, 0.5]))
        t = forward(m, [0.5, 0.2])
        np.testing.assert_allclose(t.pre_activations[0], [-0.7])
        np.testing.assert_array_equal(t.activations[0], [0.0])
        np.testing.assert_array_equal(t.scores, [0.25, 0.5])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            forward(init_mlp([3, 2], 0), [1.0, 2.0])

    def test_batch_matches_single(self):
        rng = np.random.default_rng(0)
        m = random_model(rng, [4, 5, 3])
        X = rng.normal(size=(6, 4))
        batch = forward(m, X).scores
        for i in range(6):
            np.testing.assert_allclose(forward(m, X[i]).scores, batch[i], rtol=1e-14)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**31), st.integers(0, 3))
    def test_trace_consistency_and_loop_oracle(self, seed, depth):
        rng = np.random.default_rng(seed)
        widths = [int(w) for w in rng.integers(1, 6, size=depth + 2)]
        m = random_model(rng, widths)
        x = rng.normal(size=widths[0])
        t = forward(m, x)
        for a, z in zip(t.pre_activations, t.activations):
            np.testing.assert_array_equal(z, np.maximum(0.0, a))
        pre, scores = loop_forward(m, x)
        np.testing.assert_allclose(t.scores, scores, rtol=1e-12, atol=1e-12)
        for a, ref in zip(t.pre_activations, pre):
            np.testing.assert_allclose(a, ref, rtol=1e-12, atol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-100, 100, allow_nan=False), st.integers(0, 2**31))
    def test_linear_scaling(self, alpha, seed):
        rng = np.random.default_rng(seed)
        m = MLP([], Layer(rng.normal(size=(3, 4)), np.zeros(3)))
        x = rng.normal(size=4)
        np.testing.assert_allclose(forward(m, alpha * x).scores, alpha * forward(m, x).scores,
                                   rtol=1e-12, atol=1e-12)


class TestAccuracy:
    def _constant(self):
        return MLP([], Layer(np.zeros((3, 2)), [1.0, 0.0, 0.0]))

    def test_constant_predictor(self):
        X = np.ones((4, 2))
        assert accuracy(self._constant(), Dataset(X, [0] * 4, 3)) == 1.0
        assert accuracy(self._constant(), Dataset(X, [1] * 4, 3)) == 0.0

    def test_ties_go_to_lowest_index(self):
        m = MLP([], Layer(np.zeros((3, 1)), [0.5, 0.5, 0.5]))
        assert predict(m, [[1.0]]).tolist() == [0]

    def test_empty(self):
        with pytest.raises(ValueError):
            accuracy(self._constant(), Dataset(np.zeros((0, 2)), [], 3))

    def test_nonzero_count(self):
        m = MLP([], Layer([[0.0, 1.0], [2.0, 0.0]], [5.0, 5.0]))
        assert m.nonzero_weights() == 2
        assert m.n_weights() == 4
