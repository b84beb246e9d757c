import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import spearmanr

from lrprune.analysis import (
    compare,
    cross_criterion_similarity,
    cross_n_consistency,
    self_consistency,
    set_similarity,
    spearman,
)
from lrprune.nn import UnitId


def universe(m, layers=3):
    return np.array([(i % layers, i // layers) for i in range(m)], dtype=np.int64)


def shuffled(rng, m):
    return universe(m)[rng.permutation(m)]


class TestSetSimilarity:
    def test_examples(self):
        assert set_similarity({1, 2, 3}, {1, 2, 3}) == 1.0
        assert set_similarity({1, 2}, {3, 4}) == 0.0
        assert set_similarity({1, 2, 3, 4}, {3, 4, 5, 6}) == 0.5

    def test_subset_against_min(self):
        assert set_similarity({1, 2}, {1, 2, 3, 4}) == 1.0

    def test_empty(self):
        with pytest.raises(ValueError):
            set_similarity(set(), {1})

    @given(st.sets(st.integers(0, 30), min_size=1), st.sets(st.integers(0, 30), min_size=1))
    def test_symmetric_and_bounded(self, a, b):
        s = set_similarity(a, b)
        assert s == set_similarity(b, a)
        assert 0.0 <= s <= 1.0


class TestSpearman:
    def test_identity_and_reversal(self):
        r = universe(50)
        assert spearman(r, r) == 1.0
        assert spearman(r, r[::-1]) == pytest.approx(-1.0)

    def test_accepts_unit_ids(self):
        r = [UnitId(0, 0), UnitId(0, 1), UnitId(1, 0)]
        assert spearman(r, r[::-1]) == pytest.approx(-1.0)

    @settings(max_examples=50)
    @given(st.integers(2, 60), st.integers(0, 2**32 - 1))
    def test_matches_scipy(self, m, seed):
        rng = np.random.default_rng(seed)
        a, b = shuffled(rng, m), shuffled(rng, m)
        pos_a = {tuple(u): i for i, u in enumerate(a)}
        pos_b = {tuple(u): i for i, u in enumerate(b)}
        keys = sorted(pos_a)
        ref = spearmanr([pos_a[k] for k in keys], [pos_b[k] for k in keys])[0]
        assert spearman(a, b) == pytest.approx(ref, abs=1e-12)

    def test_monte_carlo_null(self):
        rng = np.random.default_rng(0)
        rhos = [spearman(shuffled(rng, 3000), shuffled(rng, 3000)) for _ in range(50)]
        assert abs(np.mean(rhos)) < 0.05

    def test_universe_mismatch(self):
        with pytest.raises(ValueError):
            spearman(universe(5), universe(6)[1:])
        with pytest.raises(ValueError):
            spearman(universe(5), universe(4))


class TestCompare:
    def test_full_k_is_one(self):
        rng = np.random.default_rng(1)
        c = compare(shuffled(rng, 40), shuffled(rng, 40), 40)
        assert c.first_k_similarity == c.last_k_similarity == 1.0

    def test_first_and_last(self):
        a = universe(6)
        b = a[[1, 0, 2, 3, 5, 4]]
        c = compare(a, b, 2)
        assert c.first_k_similarity == 1.0 and c.last_k_similarity == 1.0
        c = compare(a, a[::-1], 2)
        assert c.first_k_similarity == 0.0 and c.last_k_similarity == 0.0

    def test_bad_k(self):
        with pytest.raises(ValueError):
            compare(universe(4), universe(4), 5)


class TestAggregates:
    def test_reference_column_is_one(self):
        rng = np.random.default_rng(2)
        runs = {c: [shuffled(rng, 30) for _ in range(3)] for c in ("lrp", "weight", "taylor")}
        out = cross_criterion_similarity(runs, 10)
        assert out["lrp"].first_k_similarity == out["lrp"].last_k_similarity == 1.0
        assert out["weight"].pairs == 3

    def test_missing_reference(self):
        with pytest.raises(ValueError):
            cross_criterion_similarity({"weight": [universe(4)]}, 2)

    def test_self_consistency_pairs(self):
        rng = np.random.default_rng(3)
        runs = {s: shuffled(rng, 20) for s in range(5)}
        assert self_consistency(runs, 5).pairs == 10
        ident = self_consistency({0: universe(9), 1: universe(9)}, 3)
        assert (ident.pairs, ident.first_k_similarity, ident.last_k_similarity, ident.spearman) == (1, 1, 1, 1)

    def test_self_consistency_needs_two(self):
        with pytest.raises(ValueError):
            self_consistency({0: universe(3)}, 1)

    def test_self_consistency_is_pair_mean(self):
        rng = np.random.default_rng(4)
        runs = {s: shuffled(rng, 25) for s in range(4)}
        want = np.mean([compare(runs[a], runs[b], 7).last_k_similarity
                        for a, b in itertools.combinations(range(4), 2)])
        assert self_consistency(runs, 7).last_k_similarity == pytest.approx(want)

    def test_cross_n(self):
        rng = np.random.default_rng(5)
        runs = {(n, s): shuffled(rng, 30) for n in (1, 10, 50) for s in range(4)}
        out = cross_n_consistency(runs, 10, 8)
        assert sorted(out) == [1, 10, 50]
        assert out[1].pairs == 12
        with_self = cross_n_consistency(runs, 10, 8, include_self=True)
        assert with_self[10].first_k_similarity >= out[10].first_k_similarity
        with pytest.raises(ValueError):
            cross_n_consistency(runs, 20, 8)

    def test_cross_n_with_identical_anchor(self):
        base = universe(12)
        runs = {(n, s): base for n in (2, 5) for s in range(3)}
        out = cross_n_consistency(runs, 5, 4)
        assert out[2].first_k_similarity == 1.0 and out[2].spearman == 1.0
