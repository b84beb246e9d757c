"""LRP backward pass with the alpha1-beta0 rule.

The output is seeded with relevance 1 at the target class, independent of the
logit value. Every dense layer redistributes relevance in proportion to the
positive contributions ``(a_i w_ij)^+``; bias terms take no share. ReLU and
dropout pass relevance through unchanged.

Relevance that cannot be redistributed is tracked in ``absorbed``: all of
``R_j`` when neuron ``j`` receives no positive contribution, and the
``R_j * eps / (z_j + eps)`` leak of the stabilizer otherwise. With this
accounting ``R.sum() + absorbed == 1`` at every level, to rounding.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .nn import ActivationTrace, Network, NetworkError, forward


@dataclass(frozen=True)
class LrpConfig:
    epsilon: float = 1e-9
    alpha: float = 1.0
    beta: float = 0.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if self.alpha != 1.0 or self.beta != 0.0:
            raise ValueError("only the alpha=1, beta=0 rule is implemented")


@dataclass
class RelevanceMap:
    """Relevances of a batch of samples.

    ``levels[d]`` has shape ``(N, width)`` and holds the relevance of the
    inputs to dense layer ``d`` (level 0 is the input features, level ``d``
    for d >= 1 the hidden units of dense layer ``d - 1``); ``levels[-1]`` is
    the output seed. ``absorbed[d]`` is the per-sample relevance lost while
    propagating through dense layer ``d``.
    """

    levels: list[np.ndarray]
    absorbed: list[np.ndarray]
    target_class: np.ndarray
    unit_ids: list[np.ndarray]

    @property
    def n_samples(self):
        return self.levels[0].shape[0]

    def hidden(self, layer):
        """(N, width) relevance of the hidden units output by dense ``layer``."""
        return self.levels[layer + 1]

    def absorbed_above(self, level):
        """Per-sample relevance absorbed between the output and ``level``."""
        n_dense = len(self.absorbed)
        if level >= n_dense:
            return np.zeros(self.n_samples)
        return np.sum(self.absorbed[level:], axis=0)

    def total_absorbed(self):
        return np.sum(self.absorbed, axis=0)

    def conservation_error(self):
        """Max over samples and levels of |sum(R) + absorbed_above - seed|."""
        seed = self.levels[-1].sum(axis=1)
        err = 0.0
        for level, r in enumerate(self.levels):
            gap = r.sum(axis=1) + self.absorbed_above(level) - seed
            err = max(err, float(np.abs(gap).max()))
        return err


def lrp_backward(net: Network, trace: ActivationTrace, target_class, cfg: LrpConfig = LrpConfig(),
                 seed_value=1.0, use_numba=None) -> RelevanceMap:
    """Propagate a one-hot output seed back through ``trace``."""
    if trace.mode != "eval":
        raise NetworkError("LRP needs an eval-mode trace")
    if trace.structure != net.structure:
        raise NetworkError("stale trace: network structure changed since the forward pass")
    logits = trace.logits
    target = np.atleast_1d(np.asarray(target_class))
    if len(target) == 1 and len(logits) > 1:
        target = np.repeat(target, len(logits))
    if len(target) != len(logits):
        raise NetworkError("one target class per traced sample required")
    if target.min() < 0 or target.max() >= net.output_dim:
        raise NetworkError("target class outside the output range")

    r = np.zeros_like(logits)
    r[np.arange(len(target)), target] = seed_value
    levels = [r]
    absorbed = []
    for d in range(net.n_dense - 1, -1, -1):
        a = trace.dense_input(d)
        r, lost = _kernels.lrp_dense(a, net.weights[d], r, cfg.epsilon, use_numba=use_numba)
        levels.append(r)
        absorbed.append(lost)
    levels.reverse()
    absorbed.reverse()
    return RelevanceMap(levels, absorbed, target, [ids.copy() for ids in net.unit_ids])


def relevance_for(net: Network, x, labels, cfg: LrpConfig = LrpConfig(), use_numba=None) -> RelevanceMap:
    """Eval-mode forward then LRP at ``labels``; ``net.mode`` is restored."""
    saved, net.mode = net.mode, "eval"
    try:
        _, trace = forward(net, x)
    finally:
        net.mode = saved
    return lrp_backward(net, trace, labels, cfg, use_numba=use_numba)


def unit_relevance(maps, registry=None):
    """Sum hidden-unit relevance over all samples of all ``maps``.

    Returns one score array per hidden dense layer, aligned with the maps'
    unit ids. No normalization is applied.
    """
    from .criteria import CriterionScores

    maps = list(maps)
    if not maps:
        raise ValueError("unit_relevance needs at least one relevance map")
    first = maps[0]
    n_hidden = len(first.unit_ids)
    totals = [np.zeros(len(ids)) for ids in first.unit_ids]
    n_ref = 0
    for m in maps:
        if len(m.unit_ids) != n_hidden or any(
            not np.array_equal(a, b) for a, b in zip(m.unit_ids, first.unit_ids)
        ):
            raise ValueError("relevance maps computed on different network structures")
        for d in range(n_hidden):
            totals[d] += m.hidden(d).sum(axis=0)
        n_ref += m.n_samples
    scores = CriterionScores("lrp", totals, [ids.copy() for ids in first.unit_ids], n_ref, False)
    if registry is not None:
        expected = set(map(tuple, registry))
        if set(map(tuple, scores.units())) != expected:
            raise ValueError("relevance maps do not cover the given registry")
    return scores


def write_relevance_csv(rmap: RelevanceMap, path, sample=0):
    """Dump one sample's hidden-unit relevances as (layer_index, neuron_index, relevance)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["layer_index", "neuron_index", "relevance"])
        for d, ids in enumerate(rmap.unit_ids):
            for i, r in zip(ids, rmap.hidden(d)[sample]):
                w.writerow([d, int(i), repr(float(r))])
