"""Next-item recommenders trained on (possibly perturbed) training prefixes.

Three reference models share one scoring interface: item popularity, a
Laplace-smoothed first-order Markov chain, and an embedding model whose
context is a recency-weighted mean of the last few items, trained by
sampled-softmax SGD with NDCG-based early stopping.
"""

from __future__ import annotations

import enum
import json
import logging
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import _backend
from ._pykernels import context_weights
from .corpus import SplitDataset
from .metrics import metric_at_k, sample_negatives

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


class ModelKind(str, enum.Enum):
    POPULARITY = "popularity"
    MARKOV = "markov"
    EMBEDDING_SEQ = "embedding_seq"


@dataclass(frozen=True)
class RecommenderConfig:
    model_kind: ModelKind = ModelKind.EMBEDDING_SEQ
    embedding_dim: int = 64
    window: int = 10
    decay: float = 0.8
    lr: float = 5e-4
    n_negatives_train: int = 100
    max_epochs: int = 300
    patience: int = 50
    seed: int = 0
    init_std: float = 0.01
    valid_k: int = 20
    n_negatives_valid: int = 100
    valid_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "model_kind", ModelKind(self.model_kind))
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.embedding_dim < 1 or self.window < 1:
            raise ValueError("embedding_dim and window must be >= 1")
        if not 0.0 < self.decay <= 1.0:
            raise ValueError(f"decay must lie in (0, 1], got {self.decay}")
        if self.max_epochs < 1 or not 0 < self.patience < self.max_epochs:
            raise ValueError("need 0 < patience < max_epochs")
        if self.n_negatives_train < 1:
            raise ValueError("n_negatives_train must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "RecommenderConfig":
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model_kind"] = self.model_kind.value
        return d


@dataclass
class TrainingLog:
    epochs_run: int = 0
    best_epoch: int = 0
    best_valid_ndcg: float = float("nan")
    valid_curve: list = field(default_factory=list)
    loss_curve: list = field(default_factory=list)


class Recommender:
    kind: ModelKind

    def __init__(self, config: RecommenderConfig, n_items: int):
        self.config = config
        self.n_items = n_items
        self.log = TrainingLog()

    def _check_candidates(self, candidates) -> np.ndarray:
        cand = np.asarray(candidates, dtype=np.int64)
        if cand.size == 0:
            raise ValueError("no candidates to score")
        if cand.min() < 0 or cand.max() >= self.n_items:
            raise ValueError(f"unknown candidate id outside [0, {self.n_items})")
        return cand

    def score(self, context: Sequence[int], candidates: Sequence[int]) -> np.ndarray:
        raise NotImplementedError

    def _arrays(self) -> dict:
        raise NotImplementedError

    def _load_arrays(self, arrays) -> None:
        raise NotImplementedError


class PopularityModel(Recommender):
    kind = ModelKind.POPULARITY

    def fit(self, split: SplitDataset) -> "PopularityModel":
        counts = np.zeros(self.n_items, dtype=np.float64)
        for u in split.users:
            np.add.at(counts, np.asarray(u.train_items, dtype=np.int64), 1.0)
        self.counts = counts
        return self

    def score(self, context, candidates):
        return self.counts[self._check_candidates(candidates)]

    def _arrays(self):
        return {"counts": self.counts}

    def _load_arrays(self, arrays):
        self.counts = arrays["counts"]


class MarkovModel(Recommender):
    """First-order transitions with add-one smoothing over the item universe."""

    kind = ModelKind.MARKOV

    def fit(self, split: SplitDataset) -> "MarkovModel":
        transitions: dict[int, Counter] = {}
        for u in split.users:
            seq = u.train_items
            for a, b in zip(seq, seq[1:]):
                transitions.setdefault(a, Counter())[b] += 1
        self.transitions = transitions
        self.row_totals = {a: sum(row.values()) for a, row in transitions.items()}
        return self

    def transition_probs(self, src: int) -> np.ndarray:
        return self.score([src], np.arange(self.n_items))

    def score(self, context, candidates):
        cand = self._check_candidates(candidates)
        if len(context) == 0:
            raise ValueError("Markov scoring needs a non-empty context")
        row = self.transitions.get(int(context[-1]))
        if row is None:
            return np.full(cand.shape, 1.0 / self.n_items)
        denom = self.row_totals[int(context[-1])] + self.n_items
        return np.array([(row.get(int(c), 0) + 1.0) / denom for c in cand])

    def _arrays(self):
        src, dst, cnt = [], [], []
        for a in sorted(self.transitions):
            for b in sorted(self.transitions[a]):
                src.append(a)
                dst.append(b)
                cnt.append(self.transitions[a][b])
        return {
            "src": np.array(src, dtype=np.int64),
            "dst": np.array(dst, dtype=np.int64),
            "count": np.array(cnt, dtype=np.int64),
        }

    def _load_arrays(self, arrays):
        transitions: dict[int, Counter] = {}
        for a, b, c in zip(arrays["src"].tolist(), arrays["dst"].tolist(), arrays["count"].tolist()):
            transitions.setdefault(a, Counter())[b] = c
        self.transitions = transitions
        self.row_totals = {a: sum(row.values()) for a, row in transitions.items()}


class EmbeddingSeqModel(Recommender):
    kind = ModelKind.EMBEDDING_SEQ

    def context_vector(self, context: Sequence[int]) -> np.ndarray:
        recent = np.asarray(context, dtype=np.int64)[-self.config.window :][::-1]
        if recent.size == 0:
            raise ValueError("embedding scoring needs a non-empty context")
        return context_weights(len(recent), self.config.decay) @ self.emb_in[recent]

    def score(self, context, candidates):
        cand = self._check_candidates(candidates)
        return self.emb_out[cand] @ self.context_vector(context)

    def _init_params(self, rng: np.random.Generator) -> None:
        shape = (self.n_items, self.config.embedding_dim)
        self.emb_in = rng.normal(0.0, self.config.init_std, size=shape)
        self.emb_out = rng.normal(0.0, self.config.init_std, size=shape)

    def fit(self, split: SplitDataset) -> "EmbeddingSeqModel":
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        self._init_params(rng)

        # every position but the last of each training sequence is a loss
        # target; the last one is the validation target
        flat, offsets, targets, user_pos, pools = [], [], [], [], []
        base = 0
        for u in split.users:
            seq = u.train_items
            n_targets = max(len(seq) - 2, 0)
            offsets.extend([base] * n_targets)
            targets.extend(range(1, 1 + n_targets))
            user_pos.append(n_targets)
            pool = np.setdiff1d(np.arange(self.n_items, dtype=np.int64), np.asarray(seq, dtype=np.int64))
            pools.append(pool if pool.size else np.arange(self.n_items, dtype=np.int64))
            flat.extend(seq)
            base += len(seq)
        flat = np.asarray(flat, dtype=np.int64)
        offsets = np.asarray(offsets, dtype=np.int64)
        targets = np.asarray(targets, dtype=np.int64)
        n_pos = len(targets)
        if n_pos == 0:
            raise ValueError("no training transitions: every training sequence is shorter than 3 items")

        valid = _ValidationSet(self, split)
        best = None
        since_best = 0
        for epoch in range(1, cfg.max_epochs + 1):
            order = rng.permutation(n_pos).astype(np.int64)
            negatives = np.empty((n_pos, cfg.n_negatives_train), dtype=np.int64)
            row = 0
            for pool, count in zip(pools, user_pos):
                if count:
                    idx = rng.integers(0, pool.size, size=(count, cfg.n_negatives_train))
                    negatives[row : row + count] = pool[idx]
                    row += count
            loss = _backend.sgd_epoch(
                self.emb_in, self.emb_out, flat, offsets, targets, order, negatives,
                cfg.lr, cfg.window, cfg.decay,
            )
            self.log.loss_curve.append(loss / n_pos)
            ndcg = valid.ndcg()
            self.log.valid_curve.append(ndcg)
            self.log.epochs_run = epoch
            if best is None or ndcg > self.log.best_valid_ndcg or math.isnan(ndcg):
                self.log.best_valid_ndcg = ndcg
                self.log.best_epoch = epoch
                best = (self.emb_in.copy(), self.emb_out.copy())
                since_best = 0
            else:
                since_best += 1
                if since_best >= cfg.patience:
                    break
        self.emb_in, self.emb_out = best
        logger.debug(
            "embedding model seed=%d: %d epochs, best NDCG@%d=%.4f at epoch %d",
            cfg.seed, self.log.epochs_run, cfg.valid_k, self.log.best_valid_ndcg, self.log.best_epoch,
        )
        return self

    def _arrays(self):
        return {"emb_in": self.emb_in, "emb_out": self.emb_out}

    def _load_arrays(self, arrays):
        self.emb_in = np.ascontiguousarray(arrays["emb_in"])
        self.emb_out = np.ascontiguousarray(arrays["emb_out"])


class _ValidationSet:
    """Per-user validation targets with fixed negatives, scored in one batch."""

    def __init__(self, model: EmbeddingSeqModel, split: SplitDataset):
        cfg = model.config
        self.model = model
        contexts, cands = [], []
        for u in split.users:
            if len(u.train_items) < 2:
                continue
            eligible = self.model.n_items - len(set(u.items))
            negs = sample_negatives(u, model.n_items, min(cfg.n_negatives_valid, eligible), cfg.valid_seed)
            contexts.append(u.train_items[:-1])
            cands.append(np.concatenate([[u.valid_target], negs]))
        self.empty = not contexts
        if self.empty:
            return
        width = max(len(c) for c in cands)
        # users with fewer eligible negatives are padded with their target,
        # which never outranks itself under the id tie-break
        self.cands = np.array([np.concatenate([c, np.full(width - len(c), c[0])]) for c in cands])
        self.weights = np.zeros((len(contexts), cfg.window))
        self.items = np.zeros((len(contexts), cfg.window), dtype=np.int64)
        for r, ctx in enumerate(contexts):
            recent = np.asarray(ctx[-cfg.window :][::-1], dtype=np.int64)
            self.weights[r, : len(recent)] = context_weights(len(recent), cfg.decay)
            self.items[r, : len(recent)] = recent

    def ndcg(self) -> float:
        if self.empty:
            return float("nan")
        m = self.model
        ctx = np.einsum("uw,uwd->ud", self.weights, m.emb_in[self.items])
        scores = np.einsum("ud,ucd->uc", ctx, m.emb_out[self.cands])
        target_score = scores[:, :1]
        target = self.cands[:, :1]
        ahead = (scores > target_score) | ((scores == target_score) & (self.cands < target))
        ranks = 1 + ahead.sum(axis=1)
        k = m.config.valid_k
        return math.fsum(metric_at_k(int(r), k).ndcg for r in ranks) / len(ranks)


_MODELS = {
    ModelKind.POPULARITY: PopularityModel,
    ModelKind.MARKOV: MarkovModel,
    ModelKind.EMBEDDING_SEQ: EmbeddingSeqModel,
}


def fit(split: SplitDataset, cfg: RecommenderConfig) -> Recommender:
    if not split.users:
        raise ValueError("cannot fit on an empty split")
    if any(len(u.train_items) == 0 for u in split.users):
        raise ValueError("empty training sequence in split")
    return _MODELS[cfg.model_kind](cfg, split.n_items).fit(split)


def score(model: Recommender, context: Sequence[int], candidates: Sequence[int]) -> np.ndarray:
    return model.score(context, candidates)


def rank_candidates(candidates: Sequence[int], scores: Sequence[float]) -> np.ndarray:
    """Candidates by descending score; ties go to the smaller item id."""
    cand = np.asarray(candidates, dtype=np.int64)
    order = np.lexsort((cand, -np.asarray(scores, dtype=np.float64)))
    return cand[order]


def rank_top_k(model: Recommender, context, candidates, k: int) -> list[int]:
    if len(candidates) < k:
        raise ValueError(f"need at least k={k} candidates, got {len(candidates)}")
    return rank_candidates(candidates, model.score(context, candidates))[:k].tolist()


def save(model: Recommender, path) -> None:
    meta = {
        "format_version": FORMAT_VERSION,
        "kind": model.kind.value,
        "n_items": model.n_items,
        "config": model.config.to_dict(),
        "log": asdict(model.log),
    }
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta)), **model._arrays())


def load(path) -> Recommender:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"]))
        if meta.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported model format {meta.get('format_version')}")
        cfg = RecommenderConfig.from_dict(meta["config"])
        model = _MODELS[ModelKind(meta["kind"])](cfg, meta["n_items"])
        model._load_arrays({k: data[k] for k in data.files if k != "__meta__"})
    model.log = TrainingLog(**meta["log"])
    return model

