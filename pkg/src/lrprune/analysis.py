"""Set-overlap and rank-correlation analytics over unit rankings.

A ranking is a sequence of units ordered from most prunable to most
preserved, given either as a list of ``UnitId`` or an ``(m, 2)`` integer
array of (layer, neuron) rows.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

_STRIDE = 1 << 32


@dataclass(frozen=True)
class RankingComparison:
    k: int
    first_k_similarity: float
    last_k_similarity: float
    spearman: float
    pairs: int = 1


def _keys(ranking):
    arr = np.asarray(ranking, dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("ranking must be a sequence of (layer, neuron) units")
    return arr[:, 0] * _STRIDE + arr[:, 1]


def set_similarity(s1, s2):
    """|S1 & S2| / min(|S1|, |S2|)."""
    s1, s2 = set(s1), set(s2)
    if not s1 or not s2:
        raise ValueError("set similarity of an empty set is undefined")
    return len(s1 & s2) / min(len(s1), len(s2))


def _overlap(k1, k2):
    return len(np.intersect1d(k1, k2, assume_unique=True)) / min(len(k1), len(k2))


def spearman(rank1, rank2):
    """Spearman correlation of two total orders over the same units."""
    k1, k2 = _keys(rank1), _keys(rank2)
    return _spearman_keys(k1, k2)


def _spearman_keys(k1, k2):
    m = len(k1)
    if m != len(k2):
        raise ValueError("rankings cover different unit universes")
    o1, o2 = np.argsort(k1, kind="stable"), np.argsort(k2, kind="stable")
    if not np.array_equal(k1[o1], k2[o2]):
        raise ValueError("rankings cover different unit universes")
    if m < 2:
        return 1.0
    # o1[t] is the position of the t-th smallest key in rank1
    d = (o1 - o2).astype(np.float64)
    return 1.0 - 6.0 * float(d @ d) / (m * (m * m - 1.0))


def _check_k(k, m):
    if not 1 <= k <= m:
        raise ValueError(f"k={k} outside [1, {m}]")


def compare(rank1, rank2, k) -> RankingComparison:
    k1, k2 = _keys(rank1), _keys(rank2)
    _check_k(k, len(k1))
    return RankingComparison(
        k,
        _overlap(k1[:k], k2[:k]),
        _overlap(k1[-k:], k2[-k:]),
        _spearman_keys(k1, k2),
    )


def _mean_comparison(pairs, k):
    if not pairs:
        raise ValueError("no ranking pairs to compare")
    cmp = [compare(a, b, k) for a, b in pairs]
    return RankingComparison(
        k,
        float(np.mean([c.first_k_similarity for c in cmp])),
        float(np.mean([c.last_k_similarity for c in cmp])),
        float(np.mean([c.spearman for c in cmp])),
        len(cmp),
    )


def cross_criterion_similarity(rankings, k, reference="lrp"):
    """First-k / last-k similarity of every criterion against ``reference``.

    ``rankings`` maps criterion -> list of rankings, one per repetition (a
    single ranking is accepted too); repetitions are paired by position.
    Returns criterion -> RankingComparison averaged over repetitions.
    """
    runs = {c: (r if isinstance(r, (list, tuple)) and r and np.ndim(r[0]) == 2 else [r])
            for c, r in rankings.items()}
    if reference not in runs:
        raise ValueError(f"reference criterion {reference!r} missing")
    ref = runs[reference]
    out = {}
    for crit, reps in runs.items():
        if len(reps) != len(ref):
            raise ValueError(f"{crit}: repetition count differs from {reference}")
        out[crit] = _mean_comparison(list(zip(ref, reps)), k)
    return out


def self_consistency(rankings_by_seed, k) -> RankingComparison:
    """Mean comparison over all unordered pairs of distinct seeds."""
    seeds = sorted(rankings_by_seed)
    if len(seeds) < 2:
        raise ValueError("self-consistency needs at least two seeds")
    pairs = [(rankings_by_seed[a], rankings_by_seed[b]) for a, b in itertools.combinations(seeds, 2)]
    return _mean_comparison(pairs, k)


def cross_n_consistency(rankings, n_anchor, k, include_self=False):
    """Similarity of rankings from ``n_anchor`` references against every other ``m``.

    ``rankings`` maps (n, seed) -> ranking. Each unordered seed pair {i, j}
    contributes the mean of (anchor@i vs m@j) and (anchor@j vs m@i), so with
    50 seeds there are 1225 combinations. ``include_self`` adds the
    same-seed pairs (anchor@i vs m@i).
    Returns m -> RankingComparison.
    """
    anchor = {s: r for (n, s), r in rankings.items() if n == n_anchor}
    if not anchor:
        raise ValueError(f"anchor n={n_anchor} not present")
    out = {}
    for m in sorted({n for n, _ in rankings}):
        other = {s: r for (n, s), r in rankings.items() if n == m}
        seeds = sorted(set(anchor) & set(other))
        pairs = []
        for a, b in itertools.combinations(seeds, 2):
            pairs.append((anchor[a], other[b]))
            pairs.append((anchor[b], other[a]))
        if include_self:
            pairs.extend((anchor[s], other[s]) for s in seeds)
        if pairs:
            out[m] = _mean_comparison(pairs, k)
    return out
