"""Pruning laboratory for small dense networks with an LRP criterion."""
__version__ = "0.1.0"

from .nn import (  # noqa: E402
    LayerSpec,
    Network,
    NetworkError,
    TrainConfig,
    UnitId,
    backward,
    build_toy_network,
    forward,
    load_network,
    remove_units,
    save_network,
    train,
)
from .data import DataConfig, Dataset, draw_reference, generate, noisy_test  # noqa: E402
from .relevance import LrpConfig, RelevanceMap, lrp_backward, unit_relevance  # noqa: E402
from .criteria import (  # noqa: E402
    CriterionScores,
    normalize_per_layer,
    rank_units,
    score_gradient,
    score_lrp,
    score_taylor,
    score_weight,
)
from .pruning import PrunePlan, PruneReport, prune_iteratively, prune_once  # noqa: E402
from .analysis import (  # noqa: E402
    cross_criterion_similarity,
    cross_n_consistency,
    self_consistency,
    set_similarity,
    spearman,
)
