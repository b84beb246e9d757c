"""Experiment grid: train -> score -> prune -> evaluate -> analyze.

Seeds are derived from the master seed with ``numpy.random.SeedSequence``
spawn keys ``(dataset_id, repetition, purpose[, extra])`` so that every
criterion and every reference count ``n`` of one repetition sees the same
reference draw, and adding datasets never shifts the seeds of others.

Every (dataset, repetition, criterion, n) cell is stored under
``<output_dir>/cells/<config-hash>/`` (result rows as JSON, the unit ranking
as an ``(m, 2)`` int32 ``.npy``) and skipped on rerun unless it recorded a failure.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import cross_criterion_similarity, cross_n_consistency, self_consistency
from .criteria import CRITERIA, compute_scores, ranking_array
from .data import KINDS, DataConfig, draw_reference, generate, noisy_test
from .io import config_hash, read_table, write_table
from .nn import TrainConfig, build_toy_network, evaluate, load_network, remove_units, save_network, train
from .pruning import select_victims

logger = logging.getLogger(__name__)

DATASET_IDS = {kind: i for i, kind in enumerate(KINDS)}
PURPOSE = {"train_data": 0, "model": 1, "train_order": 2, "refs": 3, "test": 4}
SHARED_REP = 2**31 - 1  # repetition slot used for the shared (not per-seed) model

RESULT_COLUMNS = ["dataset", "criterion", "n", "seed", "phase", "sigma", "accuracy", "loss", "survivors"]
FAILURE_COLUMNS = ["dataset", "criterion", "n", "seed", "error"]


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    datasets: list[str] = field(default_factory=lambda: ["moon", "circle", "multi"])
    samples_per_class: int = 1000
    hidden_width: int = 1000
    n_values: list[int] = field(default_factory=lambda: [1, 2, 5, 10, 20, 50, 100, 200])
    seeds: int = 50
    criteria: list[str] = field(default_factory=lambda: list(CRITERIA))
    prune_ratio: float = 1.0 / 3.0
    prune_count: int | None = None
    k_values: list[int] = field(default_factory=lambda: [250, 1000])
    analysis_n: int = 10
    noise_sigmas: list[float] = field(default_factory=lambda: [0.3])
    test_per_class: int = 500
    master_seed: int = 0
    retrain_per_seed: bool = False
    train: dict = field(default_factory=lambda: dataclasses.asdict(
        TrainConfig(epochs=40, learning_rate=0.03, momentum=0.9, batch_size=64, schedule="cosine")))
    output_dir: str = "results"
    jobs: int = 1
    plots: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("datasets", "n_values", "criteria", "k_values", "noise_sigmas"):
            if not getattr(self, name):
                raise ConfigError(f"{name} must be a nonempty list")
        unknown = set(self.datasets) - set(KINDS)
        if unknown:
            raise ConfigError(f"unknown datasets {sorted(unknown)}")
        unknown = set(self.criteria) - set(CRITERIA)
        if unknown:
            raise ConfigError(f"unknown criteria {sorted(unknown)}")
        if self.seeds < 1:
            raise ConfigError("seeds must be >= 1")
        if min(self.n_values) < 1:
            raise ConfigError("reference counts must be >= 1")
        if min(self.noise_sigmas) < 0:
            raise ConfigError("noise sigmas must be >= 0")
        units = 3 * self.hidden_width
        if self.prune_count is None and not 0 < self.prune_ratio < 1:
            raise ConfigError("prune_ratio must lie in (0, 1)")
        if self.removal >= units:
            raise ConfigError("pruning must leave at least one unit")
        if max(self.k_values) > units or min(self.k_values) < 1:
            raise ConfigError(f"k values must lie in [1, {units}]")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        TrainConfig(**self.train)

    @property
    def removal(self):
        if self.prune_count is not None:
            return int(self.prune_count)
        return int(round(self.prune_ratio * 3 * self.hidden_width))

    @property
    def train_config(self):
        return TrainConfig(**self.train)

    def result_payload(self):
        """Fields that influence results (excludes paths and execution knobs)."""
        d = dataclasses.asdict(self)
        for key in ("output_dir", "jobs", "plots"):
            d.pop(key)
        return d

    @property
    def hash(self):
        return config_hash(self.result_payload())

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        d = dict(d)
        if "train" in d:
            base = dataclasses.asdict(TrainConfig(epochs=40, learning_rate=0.03, schedule="cosine"))
            base.update(d["train"])
            d["train"] = base
        return cls(**d)


PRESETS = {
    # the full toy protocol
    "paper": {},
    # CI-sized: narrower nets and fewer repetitions
    "desk": {"hidden_width": 200, "seeds": 10, "k_values": [50, 200]},
}


def load_config(path=None, preset=None, **overrides) -> ExperimentConfig:
    """Preset (default "paper" when no file is given) < config file < overrides."""
    if preset is not None and preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}")
    d = dict(PRESETS[preset or "paper"]) if (preset or path is None) else {}
    if path is not None:
        text = Path(path).read_text()
        if str(path).endswith((".yaml", ".yml")):
            import yaml

            file_cfg = yaml.safe_load(text) or {}
        else:
            file_cfg = json.loads(text)
        if not isinstance(file_cfg, dict):
            raise ConfigError(f"{path}: config must be a mapping")
        d.update(file_cfg)
    d.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(d)


def derive_seed(master, *keys) -> int:
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _dataset_seeds(cfg, kind, rep):
    ds_id = DATASET_IDS[kind]
    model_rep = rep if cfg.retrain_per_seed else SHARED_REP
    return {
        "train_data": derive_seed(cfg.master_seed, ds_id, SHARED_REP, PURPOSE["train_data"]),
        "model": derive_seed(cfg.master_seed, ds_id, model_rep, PURPOSE["model"]),
        "train_order": derive_seed(cfg.master_seed, ds_id, model_rep, PURPOSE["train_order"]),
        "refs": derive_seed(cfg.master_seed, ds_id, rep, PURPOSE["refs"]),
        "test": [derive_seed(cfg.master_seed, ds_id, rep, PURPOSE["test"], j) for j in range(len(cfg.noise_sigmas))],
    }


def cells_dir(cfg):
    return Path(cfg.output_dir) / "cells" / cfg.hash[:16]


def _write_json(path, obj):
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(obj, fh, sort_keys=True)
    tmp.replace(path)


def _train_model(cfg, kind, data, seeds, path):
    if path.exists():
        return load_network(path)
    net = build_toy_network(KINDS[kind], cfg.hidden_width, seeds["model"])
    tc = dataclasses.replace(cfg.train_config, seed=seeds["train_order"])
    report = train(net, data, tc)
    logger.info("%s: trained to %.2f%% train accuracy", kind, report.train_accuracy)
    save_network(net, path)
    _write_json(path.with_suffix(".train.json"), dataclasses.asdict(report))
    return net


def _row(kind, criterion, n, rep, phase, sigma, acc, loss, survivors):
    return {"dataset": kind, "criterion": criterion, "n": int(n), "seed": int(rep), "phase": phase,
            "sigma": float(sigma), "accuracy": float(acc), "loss": float(loss), "survivors": int(survivors)}


def _evaluate_rows(cfg, kind, criterion, n, rep, net, data, tests):
    survivors = sum(net.hidden_widths)
    acc, loss = evaluate(net, data.inputs, data.labels)
    rows = [_row(kind, criterion, n, rep, "train", 0.0, acc, loss, survivors)]
    for sigma, test in zip(cfg.noise_sigmas, tests):
        acc, loss = evaluate(net, test.inputs, test.labels)
        rows.append(_row(kind, criterion, n, rep, "test", sigma, acc, loss, survivors))
    return rows


def run_dataset(cfg: ExperimentConfig, kind: str, reps=None):
    """Run every cell of one dataset; returns the number of cells computed."""
    root = cells_dir(cfg) / kind
    root.mkdir(parents=True, exist_ok=True)
    reps = range(cfg.seeds) if reps is None else reps
    data_cfg = DataConfig(kind, cfg.samples_per_class)
    computed = 0
    shared = None
    for rep in reps:
        seeds = _dataset_seeds(cfg, kind, rep)
        data = generate(dataclasses.replace(data_cfg, seed=seeds["train_data"]))
        model_path = root / (f"model_r{rep}.npz" if cfg.retrain_per_seed else "model.npz")
        if cfg.retrain_per_seed or shared is None:
            net = _train_model(cfg, kind, data, seeds, model_path)
            weight_cache = {}
            shared = net
        net = shared
        tests = [noisy_test(data_cfg, cfg.test_per_class, s, seed)
                 for s, seed in zip(cfg.noise_sigmas, seeds["test"])]
        rep_dir = root / f"r{rep}"
        rep_dir.mkdir(exist_ok=True)
        base = rep_dir / "unpruned.json"
        if not base.exists():
            _write_json(base, {"rows": _evaluate_rows(cfg, kind, "unpruned", 0, rep, net, data, tests)})
            computed += 1
        for n in cfg.n_values:
            refs = None
            for crit in cfg.criteria:
                cell = rep_dir / f"{crit}_n{n}.json"
                if cell.exists() and "error" not in json.loads(cell.read_text()):
                    continue
                try:
                    if crit == "weight" and "ranking" in weight_cache:
                        ranking = weight_cache["ranking"]
                    else:
                        if refs is None:
                            refs = draw_reference(data_cfg, n, seeds["refs"])
                        ranking = ranking_array(compute_scores(crit, net, refs))
                        if crit == "weight":
                            weight_cache["ranking"] = ranking
                    victims = select_victims(ranking, cfg.removal, net.hidden_widths)
                    if crit == "weight" and "pruned" in weight_cache:
                        pruned = weight_cache["pruned"]
                    else:
                        pruned = remove_units(net, victims)
                        if crit == "weight":
                            weight_cache["pruned"] = pruned
                    rows = _evaluate_rows(cfg, kind, crit, n, rep, pruned, data, tests)
                    np.save(rep_dir / f"{crit}_n{n}.npy", ranking.astype(np.int32))
                    _write_json(cell, {"rows": rows})
                except Exception as exc:  # one failed cell must not abort the grid
                    logger.error("cell %s/%s/n=%s/r%s failed: %s", kind, crit, n, rep, exc)
                    _write_json(cell, {"rows": [], "error": f"{type(exc).__name__}: {exc}",
                                       "traceback": traceback.format_exc()})
                computed += 1
    return computed


def collect(cfg: ExperimentConfig):
    """Gather result rows, failures and rankings from the cell store."""
    root = cells_dir(cfg)
    rows, failures, rankings = [], [], {}
    for kind in cfg.datasets:
        for rep in range(cfg.seeds):
            rep_dir = root / kind / f"r{rep}"
            rows.extend(json.loads((rep_dir / "unpruned.json").read_text())["rows"])
            for n in cfg.n_values:
                for crit in cfg.criteria:
                    cell = json.loads((rep_dir / f"{crit}_n{n}.json").read_text())
                    if "error" in cell:
                        failures.append({"dataset": kind, "criterion": crit, "n": n, "seed": rep,
                                         "error": cell["error"]})
                        continue
                    rows.extend(cell["rows"])
                    rankings[(kind, crit, n, rep)] = np.load(rep_dir / f"{crit}_n{n}.npy")
    return rows, failures, rankings


def analysis_tables(cfg: ExperimentConfig, rankings):
    """Rows of the cross-criterion (vs LRP), self-consistency and cross-n tables."""
    t1, t2, s2 = [], [], []
    n0 = cfg.analysis_n if cfg.analysis_n in cfg.n_values else cfg.n_values[0]
    seeds = range(cfg.seeds)
    for kind in cfg.datasets:
        avail = [c for c in cfg.criteria if all((kind, c, n0, s) in rankings for s in seeds)]
        for k in cfg.k_values:
            if "lrp" in avail:
                by_crit = {c: [rankings[(kind, c, n0, s)] for s in seeds] for c in avail}
                for crit, res in cross_criterion_similarity(by_crit, k).items():
                    t1.append({"dataset": kind, "n": n0, "k": k, "criterion": crit,
                               "first_k": res.first_k_similarity, "last_k": res.last_k_similarity})
            if cfg.seeds >= 2:
                for crit in avail:
                    res = self_consistency({s: rankings[(kind, crit, n0, s)] for s in seeds}, k)
                    t2.append({"dataset": kind, "n": n0, "k": k, "criterion": crit,
                               "first_k": res.first_k_similarity, "last_k": res.last_k_similarity,
                               "spearman": res.spearman, "pairs": res.pairs})
                for crit in avail:
                    by_n = {(n, s): r for (d, c, n, s), r in rankings.items() if d == kind and c == crit}
                    for m, res in cross_n_consistency(by_n, n0, k).items():
                        s2.append({"dataset": kind, "criterion": crit, "k": k, "anchor_n": n0, "m": m,
                                   "first_k": res.first_k_similarity, "last_k": res.last_k_similarity})
    return t1, t2, s2


ANALYSIS_COLUMNS = {
    "cross_criterion.csv": ["dataset", "n", "k", "criterion", "first_k", "last_k"],
    "self_consistency.csv": ["dataset", "n", "k", "criterion", "first_k", "last_k", "spearman", "pairs"],
    "cross_n.csv": ["dataset", "criterion", "k", "anchor_n", "m", "first_k", "last_k"],
}


def write_analysis(cfg: ExperimentConfig, rankings):
    out = Path(cfg.output_dir)
    for (name, cols), rows in zip(ANALYSIS_COLUMNS.items(), analysis_tables(cfg, rankings)):
        write_table(out / name, cols, rows, cfg.hash)
    return out


def write_bundle(cfg: ExperimentConfig):
    out = Path(cfg.output_dir)
    rows, failures, rankings = collect(cfg)
    h = cfg.hash
    crit_order = {c: i for i, c in enumerate(["unpruned", *CRITERIA])}
    ds_order = {k: i for i, k in enumerate(cfg.datasets)}
    rows.sort(key=lambda r: (ds_order[r["dataset"]], crit_order[r["criterion"]], r["n"], r["seed"],
                             r["phase"] != "train", r["sigma"]))
    write_table(out / "results.csv", RESULT_COLUMNS, rows, h)
    write_table(out / "failures.csv", FAILURE_COLUMNS, failures, h)
    write_analysis(cfg, rankings)
    with open(out / "config.json", "w") as fh:
        json.dump({"config": cfg.result_payload(), "config_hash": h, "tool_version": __version__},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


def run_experiment(cfg: ExperimentConfig):
    """Run (or resume) the whole grid and write the result bundle to ``cfg.output_dir``."""
    cells_dir(cfg).mkdir(parents=True, exist_ok=True)
    if cfg.jobs > 1 and len(cfg.datasets) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.jobs, len(cfg.datasets))) as pool:
            list(pool.map(run_dataset, [cfg] * len(cfg.datasets), cfg.datasets))
    else:
        for kind in cfg.datasets:
            run_dataset(cfg, kind)
    out = write_bundle(cfg)
    summarize(out, plots=cfg.plots)
    return out


SUMMARY_COLUMNS = ["dataset", "criterion", "n", "phase", "sigma", "mean", "std", "count", "baseline_mean"]


def summarize(results_dir, plots=False):
    """Mean / std of accuracy per (dataset, criterion, n, phase, sigma)."""
    results_dir = Path(results_dir)
    path = results_dir / "results.csv"
    if not path.exists():
        raise FileNotFoundError(f"no results.csv in {results_dir}")
    rows = read_table(path)
    if not rows:
        raise ValueError(f"{path} holds no results")
    groups: dict[tuple, list[float]] = {}
    order: list[tuple] = []
    for r in rows:
        key = (r["dataset"], r["criterion"], int(r["n"]), r["phase"], float(r["sigma"]))
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(float(r["accuracy"]))
    baseline = {}
    for key in order:
        if key[1] == "unpruned":
            baseline[(key[0], key[3], key[4])] = float(np.mean(groups[key]))
    out = []
    for key in order:
        vals = np.array(groups[key])
        out.append({"dataset": key[0], "criterion": key[1], "n": key[2], "phase": key[3], "sigma": key[4],
                    "mean": float(vals.mean()), "std": float((vals - vals[0]).std()), "count": len(vals),
                    "baseline_mean": baseline.get((key[0], key[3], key[4]), float("nan"))})
    cfg_hash = None
    meta = results_dir / "results.csv.meta.json"
    if meta.exists():
        cfg_hash = json.loads(meta.read_text()).get("config_hash")
    write_table(results_dir / "accuracy_summary.csv", SUMMARY_COLUMNS, out, cfg_hash)
    if plots:
        plot_summary(out, results_dir / "plots")
    return out


def plot_summary(summary, out_dir):
    """Accuracy-vs-n line plots (mean +- std, unpruned dashed), one SVG per dataset and phase."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    colors = {"weight": "black", "taylor": "tab:blue", "gradient": "tab:green", "lrp": "tab:red"}
    panels = sorted({(r["dataset"], r["phase"], r["sigma"]) for r in summary})
    written = []
    for kind, phase, sigma in panels:
        fig, ax = plt.subplots(figsize=(4.5, 3.5))
        sel = [r for r in summary if (r["dataset"], r["phase"], r["sigma"]) == (kind, phase, sigma)]
        for crit, color in colors.items():
            pts = sorted((r["n"], r["mean"], r["std"]) for r in sel if r["criterion"] == crit)
            if not pts:
                continue
            n, m, s = map(np.array, zip(*pts))
            ax.plot(n, m, color=color, label=crit)
            ax.fill_between(n, m - s, m + s, color=color, alpha=0.2, linewidth=0)
        base = [r["mean"] for r in sel if r["criterion"] == "unpruned"]
        if base:
            ax.axhline(base[0], color="black", linestyle="--", linewidth=1, label="unpruned")
        ax.set_xscale("log")
        ax.set_xlabel("reference samples per class")
        ax.set_ylabel("accuracy [%]")
        title = f"{kind} ({phase}" + (f", sigma={sigma:g})" if phase == "test" else ")")
        ax.set_title(title)
        ax.legend(fontsize=7)
        fig.tight_layout()
        stem = f"{kind}_{phase}" + (f"_sigma{sigma:g}" if phase == "test" else "")
        path = out_dir / f"{stem}.svg"
        fig.savefig(path, metadata={"Date": None})
        plt.close(fig)
        written.append(path)
    return written
