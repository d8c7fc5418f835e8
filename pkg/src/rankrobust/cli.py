"""Command-line entry point: ``rankrobust <subcommand>``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import corpus, experiment
from .experiment import ExperimentConfig
from .models import ModelKind
from .ranksim import SimilarityConfig, SimilarityKind, jaccard, rbo_at_k, frbo_at_k


def _int_list(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        if "-" in part.strip()[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def _read_ranking(path: str) -> list[int]:
    with open(path, encoding="utf-8") as fh:
        return [int(line) for line in fh if line.strip()]


def _experiment_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else experiment.default_synthetic_config()
    if args.dataset:
        cfg.dataset = {"path": args.dataset, "format": args.format}
    if args.seeds:
        cfg.seeds = tuple(_int_list(args.seeds))
    if args.scenarios:
        cfg.scenarios = tuple(corpus.Scenario(s) for s in args.scenarios.split(","))
    if args.n_values:
        cfg.n_values = tuple(_int_list(args.n_values))
    if args.model:
        cfg.model = replace(cfg.model, model_kind=ModelKind(args.model))
    if args.max_epochs:
        cfg.model = replace(cfg.model, max_epochs=args.max_epochs,
                            patience=min(cfg.model.patience, args.max_epochs - 1))
    if args.output:
        cfg.output_dir = args.output
    if args.workers:
        cfg.workers = args.workers
    return ExperimentConfig.from_dict(cfg.to_dict())


def cmd_ingest(args) -> int:
    if args.format in ("ml100k", "ml1m"):
        ds = corpus.parse_movielens(args.input, args.format)
    elif args.format == "foursquare":
        ds = corpus.parse_foursquare(args.input, name=args.name or "foursquare")
    else:
        ds = corpus.read_canonical(args.input, args.name)
    print(f"raw: {ds.n_users} users, {ds.n_items} items, {ds.n_interactions} interactions")
    ds = corpus.filter_min_length(ds, args.min_length)
    print(f"filtered: {ds.n_users} users, {ds.n_items} items, {ds.n_interactions} interactions")
    corpus.write_canonical(ds, args.output)
    return 0


def cmd_synth(args) -> int:
    ds = corpus.gen_synthetic(
        n_users=args.users, n_items=args.items, seq_len_range=(args.min_len, args.max_len),
        n_phases=args.phases, drift=args.drift, seed=args.seed,
    )
    corpus.write_canonical(ds, args.output)
    print(f"{ds.name}: {ds.n_users} users, {ds.n_items} items, {ds.n_interactions} interactions")
    return 0


def cmd_rq1(args) -> int:
    cfg = _experiment_config(args)
    rows = experiment.run_rq1(cfg)
    paths = experiment.emit_report(rows, cfg.output_dir, ("csv",), name="rq1.csv")
    for r in rows:
        if "_vs_seed" in r.metric:
            print(f"seed {r.seed} {r.metric}: {r.value:.6g}")
    print(f"wrote {paths[0]}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _experiment_config(args)
    Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
    with open(Path(cfg.output_dir) / "config.json", "w", encoding="utf-8") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
    rows = experiment.run_sweep(cfg)
    print(experiment.summary_table(rows))
    print(f"wrote {Path(cfg.output_dir) / experiment.RESULTS_FILE}")
    return 0


def cmd_report(args) -> int:
    rows = experiment.read_csv(args.input)
    formats = args.format.split(",")
    paths = experiment.emit_report(rows, args.output, formats)
    print(experiment.summary_table(rows))
    print(f"wrote {len(paths)} files to {args.output}")
    return 0


def cmd_frbo(args) -> int:
    x, y = _read_ranking(args.x), _read_ranking(args.y)
    if len(x) != len(y):
        raise ValueError(f"ranking files differ in length: {len(x)} vs {len(y)}")
    k = len(x)
    n_items = args.n_items or max(max(x), max(y)) + 1
    n_items = max(n_items, k)
    cfg = SimilarityConfig(p=args.p, k=k, n_items=n_items, kind=SimilarityKind.FRBO_SIMPLE)
    print(f"k={k} p={args.p} n_items={n_items}")
    print(f"jac={jaccard(x, y):.6g}")
    print(f"rbo@k={rbo_at_k(x, y, args.p):.6g}")
    print(f"frbo_simple={frbo_at_k(x, y, cfg):.6g}")
    if args.n_items:
        full = replace(cfg, kind=SimilarityKind.FRBO_FULL)
        print(f"frbo_full={frbo_at_k(x, y, full):.6g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rankrobust", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse a raw dataset, filter short users, write canonical CSV")
    p.add_argument("--format", required=True, choices=["ml100k", "ml1m", "foursquare", "canonical"])
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--name")
    p.add_argument("--min-length", type=int, default=corpus.MIN_LENGTH)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="generate the drifting-interest synthetic dataset")
    p.add_argument("--users", type=int, default=500)
    p.add_argument("--items", type=int, default=200)
    p.add_argument("--min-len", type=int, default=20)
    p.add_argument("--max-len", type=int, default=60)
    p.add_argument("--phases", type=int, default=4)
    p.add_argument("--drift", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_synth)

    for name, func, help_ in (
        ("rq1", cmd_rq1, "compare baseline runs across initialization seeds"),
        ("sweep", cmd_sweep, "run the removal sweep (scenarios x n x seeds)"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON experiment config (default: synthetic preset)")
        p.add_argument("--dataset", help="dataset file, overrides the config")
        p.add_argument("--format", default="canonical", choices=["ml100k", "ml1m", "foursquare", "canonical"])
        p.add_argument("--seeds", help="e.g. 0,1 or 0-4")
        p.add_argument("--scenarios", help="comma list of beginning,middle,end")
        p.add_argument("--n-values", help="e.g. 1-10")
        p.add_argument("--model", choices=[m.value for m in ModelKind])
        p.add_argument("--max-epochs", type=int)
        p.add_argument("--output", help=f"output directory (default ${experiment.OUTPUT_ENV} or ./results)")
        p.add_argument("--workers", type=int)
        p.set_defaults(func=func)

    p = sub.add_parser("report", help="turn results.csv into plot data and a summary")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--format", default="csv,plotdata")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("frbo", help="similarity of two ranking files (one item id per line)")
    p.add_argument("x")
    p.add_argument("y")
    p.add_argument("--p", type=float, default=0.9)
    p.add_argument("--n-items", type=int, help="item universe size; enables the full FRBO")
    p.set_defaults(func=cmd_frbo)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
