"""Experiment protocols: seed instability (RQ1) and the removal sweep (RQ2/RQ3).

Every (scenario, n, seed) cell perturbs the training prefixes, trains a
model, evaluates it on the untouched test data and compares it with the
same-seed baseline (n = 0). Rows are appended to ``results.csv`` one cell at
a time so an interrupted sweep can be resumed.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from . import corpus
from .corpus import Dataset, PerturbationSpec, Scenario
from .evaluation import EvalReport, evaluate, rls_report
from .metrics import METRIC_NAMES, paired_t_test
from .models import RecommenderConfig, fit
from .ranksim import SimilarityConfig

logger = logging.getLogger(__name__)

CSV_HEADER = ("dataset", "model", "scenario", "n", "seed", "metric", "value", "p_value", "significant")
BASELINE = "baseline"
OUTPUT_ENV = "RANKROBUST_OUTPUT"
RESULTS_FILE = "results.csv"


def _sig6(x: float | None) -> float | None:
    if x is None:
        return None
    return float(f"{float(x):.6g}")


@dataclass(frozen=True)
class ResultRow:
    dataset: str
    model: str
    scenario: str
    n: int
    seed: int
    metric: str
    value: float
    p_value: float | None = None
    significant: bool | None = None

    def __post_init__(self):
        # values are held at the precision they are written with, so a CSV
        # round trip reproduces the row exactly
        object.__setattr__(self, "value", _sig6(self.value))
        object.__setattr__(self, "p_value", _sig6(self.p_value))

    @property
    def cell(self) -> tuple[str, int, int]:
        return (self.scenario, self.n, self.seed)


@dataclass
class ExperimentConfig:
    dataset: dict = field(default_factory=lambda: {"synthetic": {}})
    model: RecommenderConfig = field(default_factory=RecommenderConfig)
    p: float = 0.9
    k: int = 20
    scenarios: tuple[Scenario, ...] = tuple(Scenario)
    n_values: tuple[int, ...] = tuple(range(1, 11))
    seeds: tuple[int, ...] = (0, 1)
    eval_seed: int = 0
    n_negatives: int = 100
    min_length: int = corpus.MIN_LENGTH
    output_dir: str = ""
    workers: int = 1

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = RecommenderConfig.from_dict(self.model)
        self.scenarios = tuple(Scenario(s) for s in self.scenarios)
        self.n_values = tuple(int(n) for n in self.n_values)
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.scenarios or not self.n_values or not self.seeds:
            raise ValueError("need at least one scenario, one removal count and one seed")
        if any(n < 1 for n in self.n_values):
            raise ValueError("removal counts must be >= 1 (n = 0 is the implicit baseline)")
        if not self.output_dir:
            self.output_dir = os.environ.get(OUTPUT_ENV, "results")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "model": self.model.to_dict(),
            "p": self.p,
            "k": self.k,
            "scenarios": [s.value for s in self.scenarios],
            "n_values": list(self.n_values),
            "seeds": list(self.seeds),
            "eval_seed": self.eval_seed,
            "n_negatives": self.n_negatives,
            "min_length": self.min_length,
            "output_dir": self.output_dir,
            "workers": self.workers,
        }


SYNTHETIC_DATASET = {
    "synthetic": {
        "n_users": 500,
        "n_items": 200,
        "seq_len_range": [20, 60],
        "n_phases": 4,
        "drift": 0.2,
        "seed": 0,
    }
}


def default_synthetic_config(**overrides) -> ExperimentConfig:
    """Desk-scale preset: the drifting-interest dataset and a fast SGD schedule."""
    model = RecommenderConfig(lr=0.05, max_epochs=20, patience=4)
    base = dict(dataset=json.loads(json.dumps(SYNTHETIC_DATASET)), model=model)
    base.update(overrides)
    return ExperimentConfig(**base)


def load_dataset(cfg: ExperimentConfig) -> Dataset:
    src = cfg.dataset
    if "synthetic" in src:
        args = dict(src["synthetic"])
        if "seq_len_range" in args:
            args["seq_len_range"] = tuple(args["seq_len_range"])
        ds = corpus.gen_synthetic(**args)
    else:
        fmt, path = src.get("format"), src.get("path")
        if not path:
            raise ValueError("dataset config needs either 'synthetic' or 'path' + 'format'")
        if fmt in ("ml100k", "ml1m"):
            ds = corpus.parse_movielens(path, fmt)
        elif fmt == "foursquare":
            cols = {k: src[k] for k in ("user_col", "venue_col", "time_col") if k in src}
            ds = corpus.parse_foursquare(path, name=src.get("name", "foursquare"), **cols)
        elif fmt == "canonical":
            ds = corpus.read_canonical(path, src.get("name"))
        else:
            raise ValueError(f"unknown dataset format {fmt!r}")
    return corpus.filter_min_length(ds, cfg.min_length)


# ---------------------------------------------------------------------------
# single runs


def train_and_evaluate(ds: Dataset, cfg: ExperimentConfig, spec: PerturbationSpec, seed: int) -> EvalReport:
    split = corpus.split_leave_one_out(ds, spec)
    model = fit(split, replace(cfg.model, seed=seed))
    return evaluate(
        model, split, k=cfg.k, eval_seed=cfg.eval_seed, n_negatives=cfg.n_negatives,
        provenance={
            "dataset": ds.name, "model": cfg.model.model_kind.value,
            "scenario": spec.scenario.value, "n": spec.n, "seed": seed,
        },
    )


def pct_change(new: float, ref: float) -> float:
    return 100.0 * (new - ref) / ref if ref != 0 else math.nan


def _metric_rows(report: EvalReport, ds_name: str, model: str, scenario: str, n: int, seed: int) -> list[ResultRow]:
    return [
        ResultRow(ds_name, model, scenario, n, seed, f"{m}@{report.k}", report.aggregate[m])
        for m in METRIC_NAMES
    ]


def compare_rows(
    base: EvalReport, other: EvalReport, sim: SimilarityConfig, *,
    dataset: str, model: str, scenario: str, n: int, seed: int, suffix: str = "",
    with_tests: bool = True,
) -> list[ResultRow]:
    """Metric means, % variation, t-tests and RLS of ``other`` against ``base``."""
    k = base.k
    rows = []
    base_agg, other_agg = base.aggregate, other.aggregate
    for m in METRIC_NAMES:
        p_value = significant = None
        if with_tests:
            try:
                test = paired_t_test(other.per_user[m], base.per_user[m])
                p_value, significant = test.p_value, test.significant
            except ValueError:
                pass
            rows.append(ResultRow(dataset, model, scenario, n, seed, f"{m}@{k}{suffix}", other_agg[m], p_value, significant))
        rows.append(ResultRow(
            dataset, model, scenario, n, seed, f"{m}@{k}_pct{suffix}", pct_change(other_agg[m], base_agg[m])
        ))
    for kind, mean in rls_report(base, other, sim).means.items():
        name = "frbo" if kind.startswith("frbo") else kind
        rows.append(ResultRow(dataset, model, scenario, n, seed, f"rls_{name}@{k}{suffix}", mean))
    return rows


def _similarity(cfg: ExperimentConfig, ds: Dataset) -> SimilarityConfig:
    return SimilarityConfig(p=cfg.p, k=cfg.k, n_items=ds.n_items)


# ---------------------------------------------------------------------------
# RQ1


def run_rq1(cfg: ExperimentConfig, ds: Dataset | None = None) -> list[ResultRow]:
    """Train the unperturbed baseline once per seed and compare seeds pairwise."""
    if len(cfg.seeds) < 2:
        raise ValueError("RQ1 needs at least two seeds")
    ds = ds if ds is not None else load_dataset(cfg)
    sim = _similarity(cfg, ds)
    model = cfg.model.model_kind.value
    baseline = PerturbationSpec(Scenario.END, 0)
    reports = [train_and_evaluate(ds, cfg, baseline, s) for s in cfg.seeds]
    rows = []
    for seed, rep in zip(cfg.seeds, reports):
        rows.extend(_metric_rows(rep, ds.name, model, BASELINE, 0, seed))
    for (i, a), (j, b) in itertools.combinations(enumerate(cfg.seeds), 2):
        rows.extend(compare_rows(
            reports[i], reports[j], sim, dataset=ds.name, model=model, scenario=BASELINE, n=0,
            seed=b, suffix=f"_vs_seed{a}", with_tests=False,
        ))
    return rows


# ---------------------------------------------------------------------------
# sweep


def _run_cell(ds: Dataset, cfg: ExperimentConfig, scenario: Scenario, n: int, seed: int,
              base: EvalReport) -> list[ResultRow]:
    report = train_and_evaluate(ds, cfg, PerturbationSpec(scenario, n), seed)
    return compare_rows(
        base, report, _similarity(cfg, ds), dataset=ds.name, model=cfg.model.model_kind.value,
        scenario=scenario.value, n=n, seed=seed,
    )


def _safe_cell(args):
    try:
        return _run_cell(*args), None
    except Exception as exc:  # a failed cell is recorded, never fatal
        return None, f"{type(exc).__name__}: {exc}"


def _check_baseline_identity(ds: Dataset, scenarios: Iterable[Scenario]) -> None:
    splits = [corpus.split_leave_one_out(ds, PerturbationSpec(s, 0)).users for s in scenarios]
    if any(s != splits[0] for s in splits[1:]):
        raise AssertionError("removing 0 items must leave every scenario's training data identical")


class _RowWriter:
    """Appends rows cell by cell; each cell is one flushed, fsynced write."""

    def __init__(self, path: Path):
        self.path = path
        if not path.exists() or path.stat().st_size == 0:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(format_csv([]))

    def write(self, rows: Sequence[ResultRow]) -> None:
        text = format_csv(rows, header=False)
        with open(self.path, "a", encoding="utf-8", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())


def run_sweep(cfg: ExperimentConfig, ds: Dataset | None = None) -> list[ResultRow]:
    """Run (or resume) the baseline plus every (scenario, n, seed) cell.

    Returns every row in ``<output_dir>/results.csv`` after the run.
    """
    ds = ds if ds is not None else load_dataset(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / RESULTS_FILE
    done = {row.cell for row in read_csv(path)} if path.exists() and path.stat().st_size else set()
    writer = _RowWriter(path)
    _check_baseline_identity(ds, cfg.scenarios)
    model = cfg.model.model_kind.value

    baselines = {}
    for seed in cfg.seeds:
        baselines[seed] = train_and_evaluate(ds, cfg, PerturbationSpec(Scenario.END, 0), seed)
        if (BASELINE, 0, seed) not in done:
            writer.write(_metric_rows(baselines[seed], ds.name, model, BASELINE, 0, seed))
            done.add((BASELINE, 0, seed))

    todo = [
        (ds, cfg, sc, n, seed, baselines[seed])
        for seed in cfg.seeds for sc in cfg.scenarios for n in cfg.n_values
        if (sc.value, n, seed) not in done
    ]
    logger.info("%s/%s: %d cells to run, %d already done", ds.name, model, len(todo),
                len(cfg.seeds) * len(cfg.scenarios) * len(cfg.n_values) - len(todo))
    if cfg.workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            outcomes = pool.map(_safe_cell, todo)
            _drain(outcomes, todo, writer, out)
    else:
        _drain(map(_safe_cell, todo), todo, writer, out)
    return read_csv(path)


def _drain(outcomes, todo, writer: _RowWriter, out: Path) -> None:
    for args, (rows, error) in zip(todo, outcomes):
        _, _, sc, n, seed, _ = args
        if error is None:
            writer.write(rows)
            logger.info("cell %s n=%d seed=%d done", sc.value, n, seed)
        else:
            logger.warning("cell %s n=%d seed=%d failed: %s", sc.value, n, seed, error)
            with open(out / "failed_cells.txt", "a", encoding="utf-8") as fh:
                fh.write(f"{sc.value},{n},{seed},{error}\n")


# ---------------------------------------------------------------------------
# reporting


def _fmt(x: float | None) -> str:
    return "" if x is None else f"{x:.6g}"


def format_csv(rows: Sequence[ResultRow], header: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(CSV_HEADER)
    for r in rows:
        sig = "" if r.significant is None else ("true" if r.significant else "false")
        w.writerow([r.dataset, r.model, r.scenario, r.n, r.seed, r.metric, _fmt(r.value), _fmt(r.p_value), sig])
    return buf.getvalue()


def read_csv(path: str | os.PathLike) -> list[ResultRow]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        rows = []
        for rec in reader:
            ds, model, sc, n, seed, metric, value, p, sig = rec
            rows.append(ResultRow(
                ds, model, sc, int(n), int(seed), metric, float(value),
                float(p) if p else None, {"true": True, "false": False}.get(sig),
            ))
    return rows


def plot_series(rows: Sequence[ResultRow]) -> dict[str, list[tuple[int, float]]]:
    """Plot-ready ``(n, value)`` series keyed ``metric__scenario__seed<s>``.

    Each swept metric also gets a ``metric__baseline__seed<s>`` series that
    repeats the n = 0 value at every swept n (the horizontal reference line).
    """
    swept: dict[tuple[str, str, int], dict[int, float]] = {}
    base: dict[tuple[str, int], float] = {}
    for r in rows:
        if r.scenario == BASELINE:
            base[(r.metric, r.seed)] = r.value
        else:
            swept.setdefault((r.metric, r.scenario, r.seed), {})[r.n] = r.value
    series = {}
    for (metric, scenario, seed), points in sorted(swept.items()):
        series[f"{metric}__{scenario}__seed{seed}"] = sorted(points.items())
        if (metric, seed) in base:
            ns = sorted({n for (m, _, s), pts in swept.items() if m == metric and s == seed for n in pts})
            series[f"{metric}__baseline__seed{seed}"] = [(n, base[(metric, seed)]) for n in ns]
    return series


def emit_report(rows: Sequence[ResultRow], out_dir: str | os.PathLike,
                formats: Sequence[str] = ("csv", "plotdata"), name: str = RESULTS_FILE) -> list[Path]:
    if not rows:
        raise ValueError("no result rows to report")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    written = []
    for fmt in formats:
        if fmt == "csv":
            path = out / name
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(format_csv(rows))
            written.append(path)
        elif fmt == "plotdata":
            plot_dir = out / "plotdata"
            plot_dir.mkdir(exist_ok=True)
            for key, points in plot_series(rows).items():
                path = plot_dir / f"{key}.dat"
                with open(path, "w", encoding="utf-8", newline="\n") as fh:
                    fh.write("".join(f"{n} {v:.6g}\n" for n, v in points))
                written.append(path)
        else:
            raise ValueError(f"unknown report format {fmt!r}")
    return written


def summary_table(rows: Sequence[ResultRow]) -> str:
    """Variation at the largest swept n, one line per (model, scenario, seed)."""
    last: dict[tuple, int] = {}
    for r in rows:
        if r.scenario != BASELINE:
            key = (r.dataset, r.model, r.scenario, r.seed)
            last[key] = max(last.get(key, 0), r.n)
    cols = ("precision", "recall", "mrr", "ndcg")
    lines = []
    for key in sorted(last):
        ds, model, sc, seed = key
        n = last[key]
        vals = {r.metric: r for r in rows if (r.dataset, r.model, r.scenario, r.seed, r.n) == (*key, n)}
        parts = []
        for c in cols:
            pct = next((v for m, v in vals.items() if m.startswith(c + "@") and m.endswith("_pct")), None)
            raw = next((v for m, v in vals.items() if m.startswith(c + "@") and "_" not in m), None)
            if pct is not None:
                mark = "*" if raw is not None and raw.significant else ""
                parts.append(f"{c}={pct.value:+.1f}%{mark}")
        for m, v in sorted(vals.items()):
            if m.startswith("rls_"):
                parts.append(f"{m}={v.value:.3f}")
        lines.append(f"{ds} {model} {sc:<9} n={n} seed={seed}: " + " ".join(parts))
    return "\n".join(lines)
