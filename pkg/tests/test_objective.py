import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vcprune.dataio import Dataset
from vcprune.network import MLP, Layer, forward
from vcprune.objective import (
    RegularizerSpec,
    Scope,
    data_dependent_penalty,
    full_objective,
    gradients,
    loss_and_gradients,
    multiclass_hinge,
    vc_gamma,
    weight_penalties,
)

from oracles import (
    kink_distance,
    loop_objective,
    numeric_gradient,
    random_batch,
    random_model,
    random_spec,
    relative_error,
)


class TestHinge:
    @pytest.mark.parametrize("scores,label,expected", [
        ([2.0, 0.0], 0, 0.0),
        ([0.5, 1.0, -0.2], 0, 1.8),
        ([0.0, 0.0, 0.0], 2, 2.0),
    ])
    def test_examples(self, scores, label, expected):
        assert multiclass_hinge(scores, label) == pytest.approx(expected, abs=1e-15)

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            multiclass_hinge([0.0, 1.0], 2)


class TestPenalties:
    def test_scope_none_is_zero(self):
        trace = forward(MLP([], Layer([[1.0]], [3.0])), [[1.0]])
        assert data_dependent_penalty(trace, RegularizerSpec(D=5.0)) == 0.0

    def test_last_layer(self):
        trace = forward(MLP([], Layer(np.eye(2), np.zeros(2))), [1.0, -2.0])
        assert data_dependent_penalty(trace, RegularizerSpec(D=2.0, scope="last_layer")) == 5.0

    def test_all_layers(self):
        m = MLP([Layer([[1.0, -1.0]], [-1.0])], Layer(np.zeros((2, 1)), np.zeros(2)))
        trace = forward(m, [0.5, 0.2])
        value = data_dependent_penalty(trace, RegularizerSpec(D=1.0, scope="all_layers"))
        assert value == pytest.approx(0.245, abs=1e-15)

    def test_weight_penalties(self):
        zero = MLP([], Layer(np.zeros((2, 2)), [1.0, 1.0]))
        assert weight_penalties(zero, RegularizerSpec(C=1.0, l1=1.0)) == (0.0, 0.0)
        single = MLP([], Layer([[3.0]], [7.0]))
        assert weight_penalties(single, RegularizerSpec(C=2.0)) == (9.0, 0.0)
        pair = MLP([], Layer([[1.0, -2.0]], [9.0]))
        assert weight_penalties(pair, RegularizerSpec(l1=0.5))[1] == 1.5

    @pytest.mark.parametrize("bad", [{"C": -1.0}, {"D": float("nan")}, {"l1": float("inf")}])
    def test_invalid_coefficients(self, bad):
        with pytest.raises(ValueError):
            RegularizerSpec(**bad)


class TestFullObjective:
    def test_zero_model(self):
        m = MLP([], Layer(np.zeros((2, 3)), np.zeros(2)))
        loss = full_objective(m, Dataset(np.ones((1, 3)), [0], 2), RegularizerSpec())
        assert loss.total == loss.hinge == 1.0

    def test_parts_sum_to_total(self):
        m = MLP([], Layer(np.eye(3), np.zeros(3)))
        data = Dataset(np.array([[0.5, 1.0, -0.2]]), [0], 3)
        loss = full_objective(m, data, RegularizerSpec(C=0.3))
        assert loss.hinge == pytest.approx(1.8)
        assert loss.l2_term == pytest.approx(0.45)
        assert loss.total == loss.hinge + loss.l2_term + loss.l1_term + loss.data_dep_term

    def test_empty_batch(self):
        with pytest.raises(ValueError):
            full_objective(MLP([], Layer([[1.0]], [0.0])), Dataset(np.zeros((0, 1)), [], 1), RegularizerSpec())

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 2**31))
    def test_matches_loop_oracle(self, seed):
        rng = np.random.default_rng(seed)
        widths = [3, 4] if rng.random() < 0.5 else [3, int(rng.integers(1, 4)), 4]
        m = random_model(rng, widths)
        batch = random_batch(rng, 5, widths[0], widths[-1])
        spec = random_spec(rng)
        ours = full_objective(m, batch, spec)
        ref = loop_objective(m, batch.features, batch.labels, spec.C, spec.D, spec.l1, spec.scope.value)
        assert relative_error(ours.total, ref["total"], 1e-300) <= 1e-12
        assert ours.hinge == pytest.approx(ref["hinge"], rel=1e-12, abs=1e-15)
        assert ours.data_dep_term == pytest.approx(ref["data"], rel=1e-12, abs=1e-15)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**31))
    def test_nonnegative_and_scope_monotone(self, seed):
        rng = np.random.default_rng(seed)
        m = random_model(rng, [3, 4, 2])
        batch = random_batch(rng, 4, 3, 2)
        D = float(rng.uniform(0, 5))
        last = full_objective(m, batch, RegularizerSpec(D=D, scope="last_layer"))
        every = full_objective(m, batch, RegularizerSpec(D=D, scope="all_layers"))
        assert every.data_dep_term >= last.data_dep_term
        for part in (*last.as_dict().values(), *every.as_dict().values()):
            assert part >= 0

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**31), st.integers(1, 6), st.integers(1, 6))
    def test_additive_over_samples(self, seed, ma, mb):
        rng = np.random.default_rng(seed)
        m = random_model(rng, [3, 4, 3])
        spec = random_spec(rng)
        a = random_batch(rng, ma, 3, 3)
        b = random_batch(rng, mb, 3, 3)
        both = Dataset(np.vstack([a.features, b.features]), np.concatenate([a.labels, b.labels]), 3)
        la, lb, lab = (full_objective(m, d, spec) for d in (a, b, both))
        penalties = la.l2_term + la.l1_term
        assert lab.total == pytest.approx(la.total + lb.total - penalties, rel=1e-12)


class TestGradients:
    def test_inactive_terms(self):
        m = MLP([], Layer([[10.0, 0.0], [0.0, -10.0]], [0.0, 0.0]))
        data = Dataset(np.array([[1.0, 1.0]]), [0], 2)
        for g in gradients(m, data, RegularizerSpec()):
            assert not g.weights.any() and not g.biases.any()

    def test_l2_only(self):
        m = MLP([], Layer([[3.0]], [0.0]))
        data = Dataset(np.array([[0.0]]), [0], 1)
        assert gradients(m, data, RegularizerSpec(C=0.5))[0].weights[0, 0] == 1.5

    def test_l1_sign_is_zero_at_zero(self):
        m = MLP([], Layer([[0.0, 2.0, -2.0]], [0.0]))
        data = Dataset(np.zeros((1, 3)), [0], 1)
        g = gradients(m, data, RegularizerSpec(l1=0.25))[0].weights
        np.testing.assert_array_equal(g, [[0.0, 0.25, -0.25]])

    def test_hinge_kink_is_inactive(self):
        # margin exactly 0: 1 - net_y + net_j = 1 - 1 + 0
        m = MLP([], Layer([[1.0], [0.0]], [0.0, 0.0]))
        data = Dataset(np.array([[1.0]]), [0], 2)
        for g in gradients(m, data, RegularizerSpec()):
            assert not g.weights.any()

    def test_loss_matches_objective(self):
        rng = np.random.default_rng(3)
        m = random_model(rng, [4, 3, 3])
        batch = random_batch(rng, 6, 4, 3)
        spec = RegularizerSpec(C=0.1, D=0.2, l1=0.05, scope=Scope.ALL_LAYERS)
        loss, _ = loss_and_gradients(m, batch, spec, data_scale=2.5)
        assert loss.total == pytest.approx(full_objective(m, batch, spec, 2.5).total, rel=1e-14)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**31))
    def test_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        for _ in range(50):
            depth = int(rng.integers(0, 3))
            widths = [int(w) for w in rng.integers(2, 5, size=depth + 2)]
            m = random_model(rng, widths)
            batch = random_batch(rng, int(rng.integers(1, 5)), widths[0], widths[-1])
            spec = random_spec(rng)
            if kink_distance(m, batch, spec) > 1e-3:
                break
        else:
            pytest.skip("no kink-free draw")
        scale = float(rng.uniform(0.1, 3.0))
        analytic = gradients(m, batch, spec, scale)
        numeric = numeric_gradient(m, batch, spec, data_scale=scale)
        for a, n in zip(analytic, numeric):
            assert relative_error(a.weights, n["weights"]).max() <= 1e-5
            assert relative_error(a.biases, n["biases"]).max() <= 1e-5


class TestGamma:
    def test_example(self):
        X = np.array([[1.0, 0.0], [0.0, 1.0]])
        assert vc_gamma([1.0, 0.0], 0.0, X, 1.0) == 2.0

    def test_zero(self):
        assert vc_gamma([0.0, 0.0], 0.0, np.ones((5, 2)), 3.0) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            vc_gamma([1.0, 2.0, 3.0], 0.0, np.ones((2, 2)), 1.0)

    def test_multiclass_sums_rows(self):
        rng = np.random.default_rng(0)
        W, b, X = rng.normal(size=(3, 4)), rng.normal(size=3), rng.normal(size=(7, 4))
        total = sum(vc_gamma(W[k], b[k], X, 0.5) for k in range(3))
        assert vc_gamma(W, b, X, 0.5) == pytest.approx(total, rel=1e-13)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 2**31), st.floats(-50, 50, allow_nan=False))
    def test_homogeneity(self, seed, alpha):
        rng = np.random.default_rng(seed)
        w, b, X, C = rng.normal(size=3), rng.normal(), rng.normal(size=(5, 3)), rng.uniform(0, 2)
        base = vc_gamma(w, b, X, C)
        assert vc_gamma(alpha * w, alpha * b, X, C) == pytest.approx(alpha**2 * base, rel=1e-11, abs=1e-300)
