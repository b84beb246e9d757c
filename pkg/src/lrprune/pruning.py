"""Score, rank and remove hidden units; optionally fine-tune and repeat."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .criteria import CRITERIA, compute_scores, ranking_array
from .nn import Network, NetworkError, TrainConfig, UnitId, evaluate, remove_units, train

logger = logging.getLogger(__name__)


class PruningError(NetworkError):
    pass


@dataclass
class PrunePlan:
    criterion: str = "lrp"
    count: int | None = None
    ratio: float | None = None  # fraction of the original registry, used when count is None
    iterations: int = 1
    refs_per_class: int = 10
    fine_tune: TrainConfig | None = None
    protect_layers: bool = True

    def __post_init__(self):
        if self.criterion not in CRITERIA:
            raise ValueError(f"unknown criterion {self.criterion!r}")
        if (self.count is None) == (self.ratio is None):
            raise ValueError("give exactly one of count or ratio")
        if self.count is not None and self.count < 0:
            raise ValueError("count must be >= 0")
        if self.ratio is not None and not 0.0 < self.ratio < 1.0:
            raise ValueError("ratio must lie in (0, 1)")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")

    def amount(self, registry_size):
        """Units to remove per iteration, given the original registry size."""
        if self.count is not None:
            return int(self.count)
        return int(round(self.ratio * registry_size))


@dataclass
class IterationRecord:
    iteration: int
    criterion: str
    removed: list[UnitId]
    survivors: tuple[int, ...]
    params: int
    train_accuracy: float = float("nan")
    test_accuracy: float = float("nan")
    loss: float = float("nan")


@dataclass
class PruneReport:
    iterations: list[IterationRecord] = field(default_factory=list)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "criterion", "removed_count", "layer", "survivors",
                        "train_acc", "test_acc", "loss", "params"])
            for rec in self.iterations:
                for layer, surv in enumerate(rec.survivors):
                    w.writerow([rec.iteration, rec.criterion, len(rec.removed), layer, surv,
                                repr(rec.train_accuracy), repr(rec.test_accuracy), repr(rec.loss), rec.params])


def select_victims(ranking, amount, widths, protect_layers=True):
    """Bottom ``amount`` of a global ranking, checked against emptying a layer."""
    ranking = np.asarray(ranking)
    if amount >= len(ranking):
        raise PruningError(f"cannot remove {amount} of {len(ranking)} units")
    chosen = ranking[:amount]
    if protect_layers and amount:
        lost = np.bincount(chosen[:, 0], minlength=len(widths))
        for layer, (n_lost, width) in enumerate(zip(lost, widths)):
            if n_lost >= width:
                raise PruningError(
                    f"pruning would remove every unit of hidden layer {layer} and disconnect the model"
                )
    return [UnitId(int(l), int(n)) for l, n in chosen]


def _evaluate_into(rec, net, train_data, test_data):
    if train_data is not None:
        rec.train_accuracy, rec.loss = evaluate(net, train_data.inputs, train_data.labels)
    if test_data is not None:
        rec.test_accuracy, _ = evaluate(net, test_data.inputs, test_data.labels)


def prune_once(net: Network, plan: PrunePlan, refs, train_data=None, test_data=None, amount=None,
               iteration=1):
    """Remove the globally least important units according to ``plan``.

    Returns ``(pruned_net, report)``; ``net`` is left untouched.
    """
    if amount is None:
        amount = plan.amount(len(net.unit_registry))
    scores = compute_scores(plan.criterion, net, refs)
    victims = select_victims(ranking_array(scores), amount, net.hidden_widths, plan.protect_layers)
    pruned = remove_units(net, victims)
    rec = IterationRecord(iteration, plan.criterion, victims, pruned.hidden_widths, pruned.param_count())
    _evaluate_into(rec, pruned, train_data, test_data)
    logger.debug("iteration %d: removed %d units, survivors %s", iteration, len(victims), rec.survivors)
    return pruned, PruneReport([rec])


def prune_iteratively(net: Network, plan: PrunePlan, data, refs, test_data=None):
    """Loop: rescore on the current net, remove, optionally fine-tune.

    Removes ``plan.amount(original registry size)`` units per iteration.
    Returns ``(pruned_net, report)``.
    """
    per_step = plan.amount(len(net.unit_registry))
    if per_step * plan.iterations >= len(net.unit_registry):
        raise PruningError("total removal must leave at least one unit")
    report = PruneReport()
    current = net
    for it in range(1, plan.iterations + 1):
        current, step = prune_once(current, plan, refs, amount=per_step, iteration=it)
        rec = step.iterations[0]
        if plan.fine_tune is not None:
            train(current, data, plan.fine_tune)
        _evaluate_into(rec, current, data, test_data)
        report.iterations.append(rec)
    return current, report
