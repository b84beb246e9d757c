"""Per-unit importance scores: weight norm, gradient, first-order Taylor and LRP."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .nn import Network, UnitId, backward, forward
from .relevance import LrpConfig, relevance_for, unit_relevance

CRITERIA = ("weight", "taylor", "gradient", "lrp")


@dataclass
class CriterionScores:
    criterion: str
    scores: list[np.ndarray]  # one array per hidden dense layer
    unit_ids: list[np.ndarray]
    n_reference: int = 0
    normalized: bool = False

    def __post_init__(self):
        if len(self.scores) != len(self.unit_ids):
            raise ValueError("one score array per hidden layer required")
        for s, ids in zip(self.scores, self.unit_ids):
            if s.shape != ids.shape:
                raise ValueError("score array does not match the layer's units")

    def units(self) -> list[UnitId]:
        return [UnitId(d, int(i)) for d, ids in enumerate(self.unit_ids) for i in ids]

    def flat(self):
        return np.concatenate(self.scores)

    def as_dict(self) -> dict[UnitId, float]:
        return dict(zip(self.units(), self.flat().tolist()))

    def __getitem__(self, unit):
        unit = UnitId(*unit)
        ids = self.unit_ids[unit.layer]
        pos = int(np.searchsorted(ids, unit.neuron))
        if pos >= len(ids) or ids[pos] != unit.neuron:
            raise KeyError(unit)
        return float(self.scores[unit.layer][pos])


def _eval_trace(net, refs):
    if len(refs) == 0:
        raise ValueError("reference set is empty")
    saved, net.mode = net.mode, "eval"
    try:
        _, trace = forward(net, refs.inputs)
    finally:
        net.mode = saved
    return trace


def score_weight(net: Network) -> CriterionScores:
    """L2 norm of each hidden unit's incoming weights (bias excluded)."""
    scores = [np.sqrt(np.sum(net.weights[d] ** 2, axis=0)) for d in range(net.n_dense - 1)]
    return CriterionScores("weight", scores, [ids.copy() for ids in net.unit_ids], 0, False)


def score_gradient(net: Network, refs) -> CriterionScores:
    """Mean over refs of |dL/dz| at each unit's (ReLU-gated) pre-activation."""
    trace = _eval_trace(net, refs)
    grads = backward(net, trace, refs.labels)
    scores = [np.abs(g).mean(axis=0) for g in grads.d_pre]
    return CriterionScores("gradient", scores, [ids.copy() for ids in net.unit_ids], len(refs), False)


def score_taylor(net: Network, refs) -> CriterionScores:
    """Mean over refs of |a * dL/da|, the first-order loss change of zeroing a unit."""
    trace = _eval_trace(net, refs)
    grads = backward(net, trace, refs.labels)
    scores = [np.abs(trace.post(d) * grads.d_post[d]).mean(axis=0) for d in range(net.n_dense - 1)]
    return CriterionScores("taylor", scores, [ids.copy() for ids in net.unit_ids], len(refs), False)


def score_lrp(net: Network, refs, cfg: LrpConfig = LrpConfig()) -> CriterionScores:
    """Summed alpha1-beta0 relevance of each unit over refs, seeded at the true class."""
    if len(refs) == 0:
        raise ValueError("reference set is empty")
    rmap = relevance_for(net, refs.inputs, refs.labels, cfg)
    return unit_relevance([rmap])


def normalize_per_layer(scores: CriterionScores) -> CriterionScores:
    """Divide each layer's score vector by its L2 norm (all-zero layers untouched)."""
    if scores.normalized:
        raise ValueError("scores are already normalized")
    out = []
    for s in scores.scores:
        norm = np.sqrt(np.sum(s ** 2))
        out.append(s / norm if norm > 0 else s.copy())
    return CriterionScores(scores.criterion, out, [ids.copy() for ids in scores.unit_ids],
                           scores.n_reference, True)


def compute_scores(criterion, net: Network, refs=None, normalize=None) -> CriterionScores:
    """Score ``net`` with ``criterion``; non-LRP criteria are layer-normalized by default."""
    if criterion == "weight":
        raw = score_weight(net)
    elif criterion == "gradient":
        raw = score_gradient(net, refs)
    elif criterion == "taylor":
        raw = score_taylor(net, refs)
    elif criterion == "lrp":
        raw = score_lrp(net, refs)
    else:
        raise ValueError(f"unknown criterion {criterion!r}; expected one of {CRITERIA}")
    if normalize is None:
        normalize = criterion != "lrp"
    return normalize_per_layer(raw) if normalize else raw


def ranking_array(scores: CriterionScores):
    """(m, 2) int array of (layer, neuron), least important first, ties by unit id."""
    values = scores.flat()
    if not np.all(np.isfinite(values)):
        raise ValueError(f"non-finite {scores.criterion} score")
    layers = np.concatenate([np.full(len(ids), d) for d, ids in enumerate(scores.unit_ids)])
    neurons = np.concatenate(scores.unit_ids)
    order = np.lexsort((neurons, layers, values))
    return np.stack([layers[order], neurons[order]], axis=1).astype(np.int64)


def rank_units(scores: CriterionScores) -> list[UnitId]:
    """Units in ascending score order (first = most prunable)."""
    return [UnitId(int(l), int(n)) for l, n in ranking_array(scores)]


def write_scores_csv(raw: CriterionScores, path, normalized: CriterionScores | None = None):
    if normalized is None:
        normalized = raw
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["criterion", "layer_index", "neuron_index", "raw_score", "normalized_score"])
        for d, ids in enumerate(raw.unit_ids):
            for i, r, s in zip(ids, raw.scores[d], normalized.scores[d]):
                w.writerow([raw.criterion, d, int(i), repr(float(r)), repr(float(s))])
