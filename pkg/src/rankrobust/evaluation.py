"""Leave-one-out evaluation against sampled negatives, and RLS reports."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .corpus import SplitDataset
from .metrics import METRIC_NAMES, metric_at_k, sample_negatives
from .models import Recommender, rank_candidates
from .ranksim import RankingListPair, SimilarityConfig, SimilarityKind, rls


@dataclass
class EvalReport:
    """Per-user ranks and metrics (sorted by user id) plus their means."""

    user_ids: np.ndarray
    ranks: np.ndarray
    per_user: dict[str, np.ndarray]
    rankings: list[list[int]]
    k: int
    eval_seed: int
    provenance: dict = field(default_factory=dict)

    @property
    def aggregate(self) -> dict[str, float]:
        return {m: math.fsum(v) / len(v) for m, v in self.per_user.items()}


@dataclass
class RlsReport:
    user_ids: np.ndarray
    per_user: dict[str, np.ndarray]
    provenance: dict = field(default_factory=dict)

    @property
    def means(self) -> dict[str, float]:
        return {kind: math.fsum(v) / len(v) for kind, v in self.per_user.items()}


def _evaluate_user(model: Recommender, u, n_items: int, k: int, n_negatives: int, eval_seed: int):
    negs = sample_negatives(u, n_items, n_negatives, eval_seed)
    candidates = np.concatenate([[u.test_target], negs])
    ranked = rank_candidates(candidates, model.score(u.test_context, candidates))
    rank = int(np.flatnonzero(ranked == u.test_target)[0]) + 1
    return rank, ranked[:k].tolist()


def evaluate(
    model: Recommender,
    split: SplitDataset,
    k: int = 20,
    eval_seed: int = 0,
    n_negatives: int = 100,
    workers: int = 1,
    provenance: dict | None = None,
) -> EvalReport:
    """Rank each user's test item among ``n_negatives`` shared negatives.

    The context is always the unperturbed prefix. Results are ordered by user
    id whatever ``workers`` is, so aggregates do not depend on parallelism.
    """
    users = sorted(split.users, key=lambda u: u.user_id)
    if not users:
        raise ValueError("nothing to evaluate")
    job = lambda u: _evaluate_user(model, u, split.n_items, k, n_negatives, eval_seed)  # noqa: E731
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, users))
    else:
        results = [job(u) for u in users]
    ranks = np.array([r for r, _ in results], dtype=np.int64)
    table = np.array([metric_at_k(int(r), k) for r in ranks], dtype=np.float64)
    per_user = {name: table[:, j] for j, name in enumerate(METRIC_NAMES)}
    return EvalReport(
        user_ids=np.array([u.user_id for u in users], dtype=np.int64),
        ranks=ranks,
        per_user=per_user,
        rankings=[top for _, top in results],
        k=k,
        eval_seed=eval_seed,
        provenance=dict(provenance or {}),
    )


RLS_KINDS = (SimilarityKind.FRBO_SIMPLE, SimilarityKind.JAC)


def rls_report(
    baseline: EvalReport,
    perturbed: EvalReport,
    cfg: SimilarityConfig,
    kinds=RLS_KINDS,
    provenance: dict | None = None,
) -> RlsReport:
    """Compare the top-k lists of two evaluation runs user by user."""
    if not np.array_equal(baseline.user_ids, perturbed.user_ids):
        raise ValueError("evaluation reports cover different users")
    if baseline.eval_seed != perturbed.eval_seed:
        raise ValueError("evaluation reports used different negative samples (eval_seed)")
    pair = RankingListPair(baseline.rankings, perturbed.rankings)
    per_user = {}
    for kind in kinds:
        kind_cfg = SimilarityConfig(p=cfg.p, k=cfg.k, n_items=cfg.n_items, kind=kind)
        per_user[SimilarityKind(kind).value] = rls(pair, kind_cfg).values
    return RlsReport(baseline.user_ids.copy(), per_user, dict(provenance or {}))
