"""Dense feed-forward network engine.

Networks are a flat list of :class:`LayerSpec` (dense / relu / dropout) with
one weight matrix and bias vector per dense layer. Weight matrices are stored
as ``(fan_in, fan_out)`` so a batch forward is ``x @ W + b``.

Hidden neurons keep their original index for the lifetime of a network, so a
:class:`UnitId` stays valid after other units have been removed.
"""
from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernels

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "lrprune-network"
CHECKPOINT_VERSION = 1


class NetworkError(ValueError):
    """Invalid network construction, shape mismatch or illegal surgery."""


class UnitId(NamedTuple):
    layer: int  # ordinal of the dense layer whose output the unit is
    neuron: int  # original index within that layer

    def __str__(self):
        return f"{self.layer}:{self.neuron}"


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    fan_in: int
    fan_out: int
    dropout_p: float = 0.0

    def __post_init__(self):
        if self.kind not in ("dense", "relu", "dropout"):
            raise NetworkError(f"unknown layer kind {self.kind!r}")
        if self.fan_in < 1 or self.fan_out < 1:
            raise NetworkError(f"layer dimensions must be positive, got {self.fan_in}x{self.fan_out}")
        if self.kind != "dense" and self.fan_in != self.fan_out:
            raise NetworkError(f"{self.kind} layer must preserve width")
        if not 0.0 <= self.dropout_p <= 1.0:
            raise NetworkError(f"dropout_p must lie in [0, 1], got {self.dropout_p}")


@dataclass
class Network:
    layers: list[LayerSpec]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    unit_ids: list[np.ndarray]  # original neuron indices of each hidden dense output
    mode: str = "eval"

    def __post_init__(self):
        self.validate()

    def validate(self):
        dense = [s for s in self.layers if s.kind == "dense"]
        if not dense:
            raise NetworkError("network needs at least one dense layer")
        if len(dense) != len(self.weights) or len(dense) != len(self.biases):
            raise NetworkError("one weight matrix and bias per dense layer required")
        if len(self.unit_ids) != len(dense) - 1:
            raise NetworkError("unit ids required for every hidden dense layer")
        width = self.layers[0].fan_in
        for spec in self.layers:
            if spec.fan_in != width:
                raise NetworkError(f"layer chain broken: expected fan_in {width}, got {spec.fan_in}")
            width = spec.fan_out
        for d, (spec, w, b) in enumerate(zip(dense, self.weights, self.biases)):
            if w.shape != (spec.fan_in, spec.fan_out) or b.shape != (spec.fan_out,):
                raise NetworkError(f"dense layer {d}: parameter shapes do not match spec")
        for d, ids in enumerate(self.unit_ids):
            if ids.shape != (dense[d].fan_out,):
                raise NetworkError(f"dense layer {d}: unit id count does not match width")
        if self.mode not in ("train", "eval"):
            raise NetworkError(f"mode must be 'train' or 'eval', got {self.mode!r}")

    @property
    def n_dense(self):
        return len(self.weights)

    @property
    def input_dim(self):
        return self.layers[0].fan_in

    @property
    def output_dim(self):
        return self.layers[-1].fan_out

    @property
    def hidden_widths(self):
        return tuple(len(ids) for ids in self.unit_ids)

    @property
    def structure(self):
        return tuple((s.kind, s.fan_in, s.fan_out) for s in self.layers)

    @property
    def unit_registry(self) -> list[UnitId]:
        return [UnitId(d, int(i)) for d, ids in enumerate(self.unit_ids) for i in ids]

    def param_count(self):
        return int(sum(w.size + b.size for w, b in zip(self.weights, self.biases)))

    def dense_positions(self):
        return [i for i, s in enumerate(self.layers) if s.kind == "dense"]

    def copy(self):
        return copy.deepcopy(self)

    def eval(self):
        self.mode = "eval"
        return self

    def train_mode(self):
        self.mode = "train"
        return self

    def locate(self, unit: UnitId):
        """Current column position of ``unit`` inside its dense layer."""
        if not 0 <= unit.layer < len(self.unit_ids):
            raise NetworkError(f"unit {unit} is not a hidden unit")
        ids = self.unit_ids[unit.layer]
        pos = np.searchsorted(ids, unit.neuron)
        if pos >= len(ids) or ids[pos] != unit.neuron:
            raise NetworkError(f"unit {unit} not in registry")
        return int(pos)


def build_network(widths, seed, dropout_after=(), dropout_p=0.5, init="glorot"):
    """Dense ReLU net over ``widths`` = (in, h1, ..., out) with zero biases.

    ``init`` is "glorot" (uniform, fan_in + fan_out) or "he" (uniform, fan_in).
    ``dropout_after`` lists hidden ordinals followed by a dropout layer.
    """
    if init not in ("glorot", "he"):
        raise NetworkError(f"unknown init {init!r}")
    widths = [int(w) for w in widths]
    if len(widths) < 2 or min(widths) < 1:
        raise NetworkError(f"invalid widths {widths}")
    rng = np.random.default_rng(seed)
    layers, weights, biases, unit_ids = [], [], [], []
    for d, (fi, fo) in enumerate(zip(widths[:-1], widths[1:])):
        layers.append(LayerSpec("dense", fi, fo))
        bound = np.sqrt(6.0 / (fi + fo)) if init == "glorot" else np.sqrt(6.0 / fi)
        weights.append(rng.uniform(-bound, bound, size=(fi, fo)))
        biases.append(np.zeros(fo))
        if d < len(widths) - 2:
            layers.append(LayerSpec("relu", fo, fo))
            if d in dropout_after:
                layers.append(LayerSpec("dropout", fo, fo, dropout_p))
            unit_ids.append(np.arange(fo))
    return Network(layers, weights, biases, unit_ids)


def build_toy_network(num_classes, hidden_width, seed, input_dim=2, init="glorot"):
    """Dense(w) -> ReLU -> DropOut(0.5) -> Dense(w) -> ReLU -> Dense(w) -> ReLU -> Dense(k)."""
    if num_classes < 2:
        raise NetworkError("num_classes must be >= 2")
    if hidden_width < 1:
        raise NetworkError("hidden_width must be >= 1")
    w = hidden_width
    return build_network((input_dim, w, w, w, num_classes), seed, dropout_after=(0,), dropout_p=0.5, init=init)


@dataclass
class ActivationTrace:
    """Per-layer outputs of one (batched) forward pass.

    ``outputs[i]`` is the output of ``layers[i]``; the input of layer ``i`` is
    ``outputs[i - 1]`` (or ``x`` for i = 0). For a dense layer the output is
    its pre-activation, for a relu layer the post-activation.
    """

    x: np.ndarray
    outputs: list[np.ndarray]
    masks: dict[int, np.ndarray]
    mode: str
    structure: tuple
    sample_id: object = None

    def layer_input(self, i):
        return self.x if i == 0 else self.outputs[i - 1]

    @property
    def logits(self):
        return self.outputs[-1]

    def _dense_blocks(self):
        dense = [i for i, (kind, _, _) in enumerate(self.structure) if kind == "dense"]
        return dense

    def dense_input(self, d):
        return self.layer_input(self._dense_blocks()[d])

    def pre(self, d):
        """Pre-activation of dense layer ``d``."""
        return self.outputs[self._dense_blocks()[d]]

    def post(self, d):
        """Activation of dense layer ``d`` as fed to the next dense layer."""
        blocks = self._dense_blocks()
        end = blocks[d + 1] - 1 if d + 1 < len(blocks) else len(self.outputs) - 1
        return self.outputs[end]


def _as_batch(x, net):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise NetworkError(f"input shape {x.shape} does not match network input {net.input_dim}")
    return x, single


def forward(net: Network, x, rng=None, sample_id=None, ordered=False):
    """Forward pass. Returns ``(logits, trace)``; logits are 1-D for a 1-D input.

    ``ordered`` swaps BLAS for a fixed-order accumulation (slower, but exactly
    reproducible under zero-masking).
    """
    x, single = _as_batch(x, net)
    if net.mode == "train" and rng is None and any(s.kind == "dropout" for s in net.layers):
        raise NetworkError("train-mode forward through dropout needs an rng")
    outputs, masks = [], {}
    h, d = x, 0
    for i, spec in enumerate(net.layers):
        if spec.kind == "dense":
            if ordered:
                h = _kernels.dense_ordered(h, net.weights[d], net.biases[d])
            else:
                h = h @ net.weights[d] + net.biases[d]
            d += 1
        elif spec.kind == "relu":
            h = np.maximum(h, 0.0)
        elif net.mode == "train" and spec.dropout_p > 0.0:
            keep = 1.0 - spec.dropout_p
            mask = (rng.random(h.shape) < keep) / keep if keep > 0 else np.zeros(h.shape)
            masks[i] = mask
            h = h * mask
        outputs.append(h)
    trace = ActivationTrace(x, outputs, masks, net.mode, net.structure, sample_id)
    logits = outputs[-1][0] if single else outputs[-1]
    return logits, trace


def predict(net: Network, x, batch_size=4096):
    """Eval-mode class predictions; does not change ``net.mode``."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty(len(x), dtype=np.int64)
    saved, net.mode = net.mode, "eval"
    try:
        for start in range(0, len(x), batch_size):
            logits, _ = forward(net, x[start:start + batch_size])
            out[start:start + batch_size] = np.argmax(logits, axis=1)
    finally:
        net.mode = saved
    return out


def log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def cross_entropy(logits, labels):
    """Per-sample softmax cross-entropy."""
    logits = np.atleast_2d(logits)
    labels = np.atleast_1d(labels)
    return -log_softmax(logits)[np.arange(len(labels)), labels]


def evaluate(net: Network, x, y, batch_size=4096):
    """(accuracy in percent, mean loss) in eval mode."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    saved, net.mode = net.mode, "eval"
    correct, loss = 0, 0.0
    try:
        for start in range(0, len(x), batch_size):
            logits, _ = forward(net, x[start:start + batch_size])
            yb = y[start:start + batch_size]
            correct += int((np.argmax(logits, axis=1) == yb).sum())
            loss += float(cross_entropy(logits, yb).sum())
    finally:
        net.mode = saved
    return 100.0 * correct / len(x), loss / len(x)


@dataclass
class GradientRecord:
    """Gradients of the summed per-sample cross-entropy.

    ``d_post[d]`` / ``d_pre[d]`` are per-sample gradients w.r.t. the activation
    and pre-activation of hidden dense layer ``d``; ``d_pre`` is ReLU-gated.
    """

    d_weights: list[np.ndarray]
    d_biases: list[np.ndarray]
    d_post: list[np.ndarray]
    d_pre: list[np.ndarray]
    loss: np.ndarray


def backward(net: Network, trace: ActivationTrace, target) -> GradientRecord:
    """Backpropagate softmax cross-entropy at ``target`` labels through ``trace``.

    Losses are summed over the batch, so the activation gradients of each
    sample are that sample's own gradients.
    """
    if trace.structure != net.structure:
        raise NetworkError("stale trace: network structure changed since the forward pass")
    target = np.atleast_1d(np.asarray(target))
    logits = trace.logits
    if len(target) != len(logits):
        raise NetworkError("one target label per traced sample required")
    logp = log_softmax(logits)
    loss = -logp[np.arange(len(target)), target]
    g = np.exp(logp)
    g[np.arange(len(target)), target] -= 1.0

    n_dense = net.n_dense
    d_w = [None] * n_dense
    d_b = [None] * n_dense
    d_post = [None] * (n_dense - 1)
    d_pre = [None] * (n_dense - 1)
    d = n_dense - 1
    for i in range(len(net.layers) - 1, -1, -1):
        spec = net.layers[i]
        if spec.kind == "dense":
            a = trace.layer_input(i)
            d_w[d] = a.T @ g
            d_b[d] = g.sum(axis=0)
            if d < n_dense - 1:
                d_pre[d] = g
            g = g @ net.weights[d].T
            d -= 1
            if d >= 0:
                d_post[d] = g
        elif spec.kind == "relu":
            g = g * (trace.outputs[i] > 0.0)
        elif i in trace.masks:
            g = g * trace.masks[i]
    return GradientRecord(d_w, d_b, d_post, d_pre, loss)


@dataclass
class TrainConfig:
    epochs: int = 30
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 64
    seed: int = 0
    schedule: str = "constant"  # or "cosine": anneal the rate to 0 over the run

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.schedule not in ("constant", "cosine"):
            raise ValueError(f"unknown schedule {self.schedule!r}")

    def rate(self, epoch):
        if self.schedule == "cosine" and self.epochs > 0:
            return 0.5 * self.learning_rate * (1.0 + np.cos(np.pi * epoch / self.epochs))
        return self.learning_rate


@dataclass
class TrainingReport:
    epoch_loss: list[float] = field(default_factory=list)
    train_accuracy: float = float("nan")
    train_loss: float = float("nan")


class TrainingDiverged(RuntimeError):
    pass


def train(net: Network, data, cfg: TrainConfig) -> TrainingReport:
    """Minibatch SGD with (heavy-ball) momentum on mean cross-entropy.

    ``data`` is anything with ``inputs`` and ``labels`` arrays. Leaves the
    network in eval mode.
    """
    x = np.asarray(data.inputs, dtype=np.float64)
    y = np.asarray(data.labels)
    if len(x) == 0:
        raise ValueError("cannot train on an empty dataset")
    if x.shape[1] != net.input_dim or y.max() >= net.output_dim:
        raise NetworkError("dataset dimensions do not match the network")
    rng = np.random.default_rng(cfg.seed)
    vel_w = [np.zeros_like(w) for w in net.weights]
    vel_b = [np.zeros_like(b) for b in net.biases]
    report = TrainingReport()
    net.mode = "train"
    try:
        for epoch in range(cfg.epochs):
            order = rng.permutation(len(x))
            lr = cfg.rate(epoch)
            total = 0.0
            for start in range(0, len(x), cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                _, trace = forward(net, x[idx], rng=rng)
                grads = backward(net, trace, y[idx])
                total += float(grads.loss.sum())
                scale = lr / len(idx)
                for d in range(net.n_dense):
                    vel_w[d] *= cfg.momentum
                    vel_w[d] -= scale * grads.d_weights[d]
                    net.weights[d] += vel_w[d]
                    vel_b[d] *= cfg.momentum
                    vel_b[d] -= scale * grads.d_biases[d]
                    net.biases[d] += vel_b[d]
            mean_loss = total / len(x)
            if not np.isfinite(mean_loss):
                raise TrainingDiverged(f"non-finite training loss in epoch {epoch}")
            report.epoch_loss.append(mean_loss)
            logger.debug("epoch %d loss %.6f", epoch, mean_loss)
    finally:
        net.mode = "eval"
    report.train_accuracy, report.train_loss = evaluate(net, x, y)
    return report


def remove_units(net: Network, victims) -> Network:
    """Return a structurally shrunk copy of ``net`` without ``victims``.

    Each victim loses its incoming weight column, bias entry and outgoing
    weight row. Raises if a victim is unknown or a hidden layer would empty.
    """
    victims = set(victims)
    out = net.copy()
    if not victims:
        return out
    by_layer: dict[int, list[int]] = {}
    for unit in victims:
        unit = UnitId(*unit)
        by_layer.setdefault(unit.layer, []).append(net.locate(unit))
    dense_pos = net.dense_positions()
    layers = list(out.layers)
    for d, positions in by_layer.items():
        keep = np.ones(len(out.unit_ids[d]), dtype=bool)
        keep[positions] = False
        if not keep.any():
            raise NetworkError(
                f"removing all units of hidden layer {d} would disconnect the model input from the output"
            )
        out.weights[d] = np.ascontiguousarray(out.weights[d][:, keep])
        out.biases[d] = out.biases[d][keep]
        out.weights[d + 1] = np.ascontiguousarray(out.weights[d + 1][keep, :])
        out.unit_ids[d] = out.unit_ids[d][keep]
        width = int(keep.sum())
        for i in range(dense_pos[d], dense_pos[d + 1] + 1):
            s = layers[i]
            fan_in = width if i > dense_pos[d] else s.fan_in
            fan_out = width if i < dense_pos[d + 1] else s.fan_out
            layers[i] = LayerSpec(s.kind, fan_in, fan_out, s.dropout_p)
    out.layers = layers
    out.validate()
    return out


def mask_units(net: Network, victims) -> Network:
    """Copy of ``net`` with ``victims`` silenced by zeroing their parameters.

    Same function as :func:`remove_units` but keeps the shapes.
    """
    out = net.copy()
    for unit in victims:
        unit = UnitId(*unit)
        pos = net.locate(unit)
        out.weights[unit.layer][:, pos] = 0.0
        out.biases[unit.layer][pos] = 0.0
        out.weights[unit.layer + 1][pos, :] = 0.0
    return out


def save_network(net: Network, path):
    """Write a versioned ``.npz`` checkpoint (float64, bit-exact round trip)."""
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "mode": net.mode,
        "layers": [[s.kind, s.fan_in, s.fan_out, s.dropout_p] for s in net.layers],
    }
    arrays = {"header": np.array(json.dumps(header, sort_keys=True))}
    for d in range(net.n_dense):
        arrays[f"weight_{d}"] = np.ascontiguousarray(net.weights[d], dtype="<f8")
        arrays[f"bias_{d}"] = np.ascontiguousarray(net.biases[d], dtype="<f8")
    for d, ids in enumerate(net.unit_ids):
        arrays[f"units_{d}"] = ids.astype("<i8")
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_network(path) -> Network:
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(str(z["header"]))
        if header.get("format") != CHECKPOINT_FORMAT:
            raise NetworkError(f"{path}: not a network checkpoint")
        if header.get("version") != CHECKPOINT_VERSION:
            raise NetworkError(f"{path}: unsupported checkpoint version {header.get('version')}")
        layers = [LayerSpec(k, int(fi), int(fo), float(p)) for k, fi, fo, p in header["layers"]]
        n_dense = sum(s.kind == "dense" for s in layers)
        weights = [z[f"weight_{d}"].astype(np.float64) for d in range(n_dense)]
        biases = [z[f"bias_{d}"].astype(np.float64) for d in range(n_dense)]
        unit_ids = [z[f"units_{d}"].astype(np.int64) for d in range(n_dense - 1)]
    return Network(layers, weights, biases, unit_ids, mode=header["mode"])
