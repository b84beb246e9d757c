import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import dense_net, random_net
from lrprune import _kernels
from lrprune.data import DataConfig, draw_reference
from lrprune.nn import NetworkError, build_toy_network, forward
from lrprune.relevance import LrpConfig, lrp_backward, relevance_for, unit_relevance, write_relevance_csv

TINY = LrpConfig(epsilon=1e-300)


def single_layer(a, w):
    net = dense_net([np.asarray(w, dtype=float).reshape(-1, 1)])
    _, trace = forward(net, np.asarray([a], dtype=float))
    return net, trace


def one_class_net(w_hidden, w_out):
    """Hidden layer followed by a single-output dense layer (seed always on class 0)."""
    return dense_net([w_hidden, np.asarray(w_out, dtype=float).reshape(-1, 1)])


class TestHandExamples:
    def test_proportional_split(self):
        net, trace = single_layer([1.0, 3.0], [1.0, 1.0])
        r = lrp_backward(net, trace, 0, TINY).levels[0][0]
        assert np.abs(r - [0.25, 0.75]).max() < 1e-12

    def test_negative_contribution_excluded(self):
        net, trace = single_layer([1.0, 1.0], [2.0, -1.0])
        r = lrp_backward(net, trace, 0, TINY).levels[0][0]
        assert np.abs(r - [1.0, 0.0]).max() < 1e-12

    def test_default_epsilon_leak_is_tracked(self):
        net, trace = single_layer([1.0, 3.0], [1.0, 1.0])
        m = lrp_backward(net, trace, 0)
        assert m.levels[0][0].sum() + m.absorbed[0][0] == pytest.approx(1.0, abs=1e-15)
        assert m.absorbed[0][0] == pytest.approx(1e-9 / 4, rel=1e-6)

    def test_dead_denominator_absorbs(self):
        net, trace = single_layer([1.0, 1.0], [-1.0, -2.0])
        m = lrp_backward(net, trace, 0)
        assert np.all(m.levels[0] == 0.0)
        assert m.absorbed[0][0] == 1.0

    def test_seed_ignores_logit_value(self):
        net = one_class_net(np.eye(2), [-5.0, 1.0])
        x = np.array([[1.0, 2.0]])
        _, trace = forward(net, x)
        m = lrp_backward(net, trace, 0, TINY)
        assert m.levels[-1][0, 0] == 1.0
        np.testing.assert_allclose(m.hidden(0)[0], [0.0, 1.0], atol=1e-12)


class TestProperties:
    @pytest.mark.parametrize("seed", range(10))
    def test_conservation_and_nonnegativity(self, seed):
        rng = np.random.default_rng(seed)
        widths = [2] + list(rng.integers(1, 12, rng.integers(1, 4))) + [int(rng.integers(2, 5))]
        net = random_net(rng, widths)
        x = rng.normal(size=(8, 2))
        m = relevance_for(net, x, rng.integers(0, widths[-1], 8))
        assert m.conservation_error() < 1e-6
        assert all(np.all(r >= 0) for r in m.levels)
        assert all(np.all(a >= 0) for a in m.absorbed)

    def test_scale_covariance(self):
        rng = np.random.default_rng(3)
        net = random_net(rng, [2, 7, 5, 3])
        _, trace = forward(net, rng.normal(size=(4, 2)))
        base = lrp_backward(net, trace, 1, TINY)
        scaled = lrp_backward(net, trace, 1, TINY, seed_value=3.5)
        for a, b in zip(base.levels, scaled.levels):
            np.testing.assert_allclose(b, 3.5 * a, rtol=1e-12, atol=1e-15)

    def test_dead_unit_gets_nothing(self):
        rng = np.random.default_rng(8)
        net = random_net(rng, [2, 30, 3])
        x = rng.normal(size=(20, 2))
        _, trace = forward(net, x)
        m = lrp_backward(net, trace, rng.integers(0, 3, 20))
        dead = trace.post(0) == 0
        assert dead.any()
        assert np.all(m.hidden(0)[dead] == 0.0)

    def test_continuity(self):
        rng = np.random.default_rng(4)
        net = random_net(rng, [2, 10, 10, 2])
        x = rng.normal(size=(1, 2))
        _, t0 = forward(net, x)
        _, t1 = forward(net, x + 1e-6)
        assert all(np.array_equal(t0.post(d) > 0, t1.post(d) > 0) for d in range(2))
        r0 = relevance_for(net, x, [0]).hidden(0)
        r1 = relevance_for(net, x + 1e-6, [0]).hidden(0)
        assert np.abs(r1 - r0).max() < 1e-4

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 6))
    def test_kernels_agree(self, seed, ni, nj):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(5, ni)) * (rng.random((5, ni)) > 0.3)
        w = rng.normal(size=(ni, nj))
        r = rng.random((5, nj))
        r1, l1 = _kernels.lrp_dense_numpy(a, w, r, 1e-9)
        r2, l2 = _kernels.lrp_dense_numba(a, w, r, 1e-9)
        np.testing.assert_allclose(r1, r2, rtol=1e-10, atol=1e-13)
        np.testing.assert_allclose(l1, l2, rtol=1e-8, atol=1e-13)

    def test_switch_routes(self):
        rng = np.random.default_rng(0)
        net = random_net(rng, [2, 20, 20, 3])
        x = rng.normal(size=(16, 2))
        y = rng.integers(0, 3, 16)
        a = relevance_for(net, x, y, use_numba=True)
        b = relevance_for(net, x, y, use_numba=False)
        for u, v in zip(a.levels, b.levels):
            np.testing.assert_allclose(u, v, rtol=1e-10, atol=1e-14)


class TestUnitRelevance:
    def test_sums_over_maps(self):
        net = one_class_net(np.eye(2), [1.0, 1.0])
        m1 = relevance_for(net, np.array([[1.0, 4.0]]), [0], TINY)
        m2 = relevance_for(net, np.array([[3.0, 1.0]]), [0], TINY)
        s = unit_relevance([m1, m2])
        np.testing.assert_allclose(s.scores[0], [0.2 + 0.75, 0.8 + 0.25], atol=1e-12)
        assert s.n_reference == 2 and not s.normalized

    def test_layer_sums_match_n_minus_absorbed(self):
        net = build_toy_network(2, 40, seed=1)
        refs = draw_reference(DataConfig("moon"), 10, seed=2)
        m = relevance_for(net, refs.inputs, refs.labels)
        s = unit_relevance([m])
        for d in range(3):
            expected = len(refs) - m.absorbed_above(d + 1).sum()
            assert s.scores[d].sum() == pytest.approx(expected, abs=1e-5)

    def test_empty(self):
        with pytest.raises(ValueError):
            unit_relevance([])

    def test_structure_mismatch(self):
        a = build_toy_network(2, 5, seed=0)
        b = build_toy_network(2, 6, seed=0)
        x = np.zeros((1, 2))
        with pytest.raises(ValueError):
            unit_relevance([relevance_for(a, x, [0]), relevance_for(b, x, [0])])


class TestErrors:
    def test_train_trace_rejected(self):
        net = build_toy_network(2, 5, seed=0).train_mode()
        _, trace = forward(net, np.zeros((2, 2)), rng=np.random.default_rng(0))
        with pytest.raises(NetworkError):
            lrp_backward(net, trace, [0, 1])

    def test_bad_target(self):
        net = build_toy_network(2, 5, seed=0)
        _, trace = forward(net, np.zeros((1, 2)))
        with pytest.raises(NetworkError):
            lrp_backward(net, trace, 2)

    def test_config(self):
        with pytest.raises(ValueError):
            LrpConfig(epsilon=0.0)
        with pytest.raises(ValueError):
            LrpConfig(alpha=2.0, beta=1.0)

    def test_csv_dump(self, tmp_path):
        net = build_toy_network(2, 4, seed=0)
        m = relevance_for(net, np.ones((1, 2)), [0])
        write_relevance_csv(m, tmp_path / "r.csv")
        lines = (tmp_path / "r.csv").read_text().splitlines()
        assert lines[0] == "layer_index,neuron_index,relevance"
        assert len(lines) == 1 + 12
