"""Command line entry point: ``lrprune <subcommand>``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .criteria import CRITERIA, compute_scores, write_scores_csv
from .data import KINDS, DataConfig, draw_reference, generate, read_csv, write_csv
from .harness import (
    KINDS as _KINDS,
    PRESETS,
    _dataset_seeds,
    collect,
    load_config,
    run_experiment,
    summarize,
    write_analysis,
)
from .nn import build_toy_network, evaluate, load_network, save_network, train
from .pruning import PrunePlan, prune_iteratively, prune_once

log = logging.getLogger("lrprune")


def _config(args):
    overrides = {}
    if getattr(args, "master_seed", None) is not None:
        overrides["master_seed"] = args.master_seed
    if getattr(args, "jobs", None) is not None:
        overrides["jobs"] = args.jobs
    if getattr(args, "plots", False):
        overrides["plots"] = True
    if getattr(args, "output_dir", None) is not None:
        overrides["output_dir"] = args.output_dir
    return load_config(args.config, args.preset, **overrides)


def cmd_generate(args):
    if args.kind:
        kinds = [args.kind]
        seeds = {args.kind: args.seed if args.seed is not None else 0}
        per_class = args.samples_per_class or 1000
        out = Path(args.output_dir or ".")
    else:
        cfg = _config(args)
        kinds = cfg.datasets
        seeds = {k: _dataset_seeds(cfg, k, 0)["train_data"] for k in kinds}
        per_class = args.samples_per_class or cfg.samples_per_class
        out = Path(cfg.output_dir) / "data"
    out.mkdir(parents=True, exist_ok=True)
    for kind in kinds:
        ds = generate(DataConfig(kind, per_class, args.noise, seeds[kind]))
        path = out / f"{kind}.csv"
        write_csv(ds, path)
        print(path)


def cmd_train(args):
    if args.data:
        ds = read_csv(args.data, k=args.classes)
        cfg = load_config(args.config, args.preset)
        net = build_toy_network(ds.k, args.width or cfg.hidden_width, args.seed)
        report = train(net, ds, dataclasses.replace(cfg.train_config, seed=args.seed))
        save_network(net, args.out)
        print(json.dumps({"model": str(args.out), "train_accuracy": report.train_accuracy,
                          "train_loss": report.train_loss}))
        return
    cfg = _config(args)
    out = Path(cfg.output_dir) / "models"
    out.mkdir(parents=True, exist_ok=True)
    for kind in cfg.datasets:
        seeds = _dataset_seeds(cfg, kind, 0)
        ds = generate(DataConfig(kind, cfg.samples_per_class, 0.0, seeds["train_data"]))
        net = build_toy_network(_KINDS[kind], cfg.hidden_width, seeds["model"])
        report = train(net, ds, dataclasses.replace(cfg.train_config, seed=seeds["train_order"]))
        save_network(net, out / f"{kind}.npz")
        print(json.dumps({"dataset": kind, "model": str(out / f"{kind}.npz"),
                          "train_accuracy": report.train_accuracy}))


def cmd_prune(args):
    net = load_network(args.model)
    data = read_csv(args.data, k=net.output_dim)
    kind = args.kind
    refs = draw_reference(DataConfig(kind, 1), args.n, args.seed)
    amount = {"count": args.count} if args.count is not None else {"ratio": args.ratio}
    plan = PrunePlan(args.criterion, iterations=args.iterations, refs_per_class=args.n, **amount)
    if args.iterations > 1:
        pruned, report = prune_iteratively(net, plan, data, refs)
    else:
        pruned, report = prune_once(net, plan, refs, train_data=data)
    out = Path(args.out)
    save_network(pruned, out)
    report.write_csv(out.with_suffix(".report.csv"))
    raw = compute_scores(args.criterion, net, refs, normalize=False)
    norm = compute_scores(args.criterion, net, refs)
    write_scores_csv(raw, out.with_suffix(".scores.csv"), norm)
    acc, loss = evaluate(pruned, data.inputs, data.labels)
    print(json.dumps({"model": str(out), "survivors": list(pruned.hidden_widths), "train_accuracy": acc,
                      "loss": loss}))


def cmd_analyze(args):
    cfg = _config(args)
    _, _, rankings = collect(cfg)
    print(write_analysis(cfg, rankings))


def cmd_run(args):
    cfg = _config(args)
    out = run_experiment(cfg)
    print(out)


def cmd_summarize(args):
    results = Path(args.results or _config(args).output_dir)
    summarize(results, plots=args.plots)
    print(results / "accuracy_summary.csv")


def build_parser():
    p = argparse.ArgumentParser(prog="lrprune", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="JSON or YAML experiment config")
        sp.add_argument("--preset", choices=sorted(PRESETS))
        sp.add_argument("--master-seed", type=int)
        sp.add_argument("--jobs", type=int)
        sp.add_argument("--plots", action="store_true")
        sp.add_argument("--output-dir")

    sp = sub.add_parser("generate", help="write toy datasets as CSV")
    common(sp)
    sp.add_argument("--kind", choices=sorted(KINDS))
    sp.add_argument("--samples-per-class", type=int)
    sp.add_argument("--noise", type=float, default=0.0)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("train", help="train toy networks and write checkpoints")
    common(sp)
    sp.add_argument("--data", type=Path, help="train on this CSV instead of the config datasets")
    sp.add_argument("--classes", type=int)
    sp.add_argument("--width", type=int)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", type=Path, default=Path("model.npz"))
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("prune", help="prune a checkpoint with one criterion")
    sp.add_argument("--model", type=Path, required=True)
    sp.add_argument("--data", type=Path, required=True, help="training CSV used for evaluation")
    sp.add_argument("--kind", choices=sorted(KINDS), required=True, help="distribution of the reference draw")
    sp.add_argument("--criterion", choices=CRITERIA, default="lrp")
    sp.add_argument("--n", type=int, default=10, help="reference samples per class")
    sp.add_argument("--count", type=int)
    sp.add_argument("--ratio", type=float, default=1.0 / 3.0)
    sp.add_argument("--iterations", type=int, default=1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", type=Path, default=Path("pruned.npz"))
    sp.set_defaults(func=cmd_prune)

    sp = sub.add_parser("analyze", help="recompute the consistency tables from stored rankings")
    common(sp)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("run", help="run the full experiment grid")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("summarize", help="mean/std accuracy tables and optional plots")
    common(sp)
    sp.add_argument("--results", type=Path)
    sp.set_defaults(func=cmd_summarize)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        args.func(args)
    except Exception as exc:
        log.debug("command failed", exc_info=True)
        json.dump({"error": type(exc).__name__, "message": str(exc), "command": args.command}, sys.stderr)
        sys.stderr.write("\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
