"""Ranking similarities for top-k recommendation lists.

Jaccard, truncated rank-biased overlap (RBO@k), its exact minimum and maximum
over all pairs of duplicate-free rankings, the finite (normalized) RBO and the
rank list sensitivity (RLS) aggregate over paired ranking lists.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

Ranking = Sequence[int]

LERCH_TOL = 1e-14
_LERCH_MAX_TERMS = 10_000_000


class SimilarityKind(str, enum.Enum):
    JAC = "jac"
    RBO = "rbo"
    FRBO_FULL = "frbo_full"
    FRBO_SIMPLE = "frbo_simple"


@dataclass(frozen=True)
class SimilarityConfig:
    """Persistence ``p``, cut-off ``k`` and item-universe size for a comparison."""

    p: float = 0.9
    k: int = 20
    n_items: int = 1_000_000
    kind: SimilarityKind = SimilarityKind.FRBO_SIMPLE

    def __post_init__(self):
        object.__setattr__(self, "kind", SimilarityKind(self.kind))
        _check_p(self.p)
        if not 1 <= self.k <= self.n_items:
            raise ValueError(f"need 1 <= k <= n_items, got k={self.k}, n_items={self.n_items}")


@dataclass(frozen=True)
class RankingListPair:
    """Rankings from a reference run and a compared run, aligned by user."""

    baseline: Sequence[Ranking]
    perturbed: Sequence[Ranking]

    def __post_init__(self):
        if len(self.baseline) == 0:
            raise ValueError("ranking lists must be non-empty")
        if len(self.baseline) != len(self.perturbed):
            raise ValueError(
                f"ranking lists are misaligned: {len(self.baseline)} vs {len(self.perturbed)}"
            )


class RlsResult(NamedTuple):
    mean: float
    values: np.ndarray


def _check_p(p: float) -> None:
    if not 0.0 < p < 1.0:
        raise ValueError(f"persistence p must lie in (0, 1), got {p}")


def _check_pair(x: Ranking, y: Ranking) -> int:
    k = len(x)
    if k != len(y):
        raise ValueError(f"rankings have different lengths: {k} vs {len(y)}")
    if len(set(x)) != k or len(set(y)) != k:
        raise ValueError("rankings must not contain duplicate items")
    return k


def jaccard(x: Ranking, y: Ranking) -> float:
    sx, sy = set(x), set(y)
    union = len(sx | sy)
    if union == 0:
        return 1.0
    return len(sx & sy) / union


def _rbo_terms(x: Ranking, y: Ranking, p: float) -> tuple[float, float]:
    """Weighted prefix-overlap sum and the weight sum, accumulated in one pass."""
    k = _check_pair(x, y)
    seen_x: set = set()
    seen_y: set = set()
    overlap = 0
    weight = 1.0
    total = 0.0
    norm = 0.0
    for d in range(1, k + 1):
        a, b = x[d - 1], y[d - 1]
        if a == b:
            overlap += 1
        else:
            overlap += (a in seen_y) + (b in seen_x)
        seen_x.add(a)
        seen_y.add(b)
        total += weight * overlap / d
        norm += weight
        weight *= p
    return total, norm


def rbo_at_k(x: Ranking, y: Ranking, p: float = 0.9) -> float:
    """Truncated RBO: ``(1-p) * sum_d p^(d-1) |x[:d] & y[:d]| / d`` for d = 1..k.

    The prefix overlap is maintained incrementally, so the cost is O(k).
    """
    _check_p(p)
    return (1.0 - p) * _rbo_terms(x, y, p)[0]


def max_rbo(p: float, k: int) -> float:
    """Largest RBO@k over all ranking pairs, reached by identical rankings."""
    _check_p(p)
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    return 1.0 - p**k


def lerch_phi(z: float, s: float, alpha: float) -> float:
    """Lerch transcendent ``sum_{n>=0} z^n / (n + alpha)^s`` for 0 < z < 1.

    Summed directly; stops once the geometric tail bound
    ``z^(n+1) / ((n+1+alpha)^s (1-z))`` drops below 1e-14.
    """
    if not 0.0 < z < 1.0:
        raise ValueError(f"lerch_phi requires 0 < z < 1, got z={z}")
    if s <= 0 or alpha <= 0:
        raise ValueError(f"lerch_phi requires s > 0 and alpha > 0, got s={s}, alpha={alpha}")
    terms = []
    zn = 1.0
    for n in range(_LERCH_MAX_TERMS):
        terms.append(zn / (n + alpha) ** s)
        zn *= z
        if zn / ((n + 1 + alpha) ** s * (1.0 - z)) < LERCH_TOL:
            break
    return math.fsum(terms)


def min_rbo(p: float, k: int, n_items: int) -> float:
    """Smallest RBO@k over ranking pairs drawn from ``n_items`` items.

    Zero while two disjoint top-k lists fit in the universe; above that the
    closed form counts the forced ``2d - n_items`` overlaps at each depth.
    """
    _check_p(p)
    if k < 1 or n_items < 1:
        raise ValueError(f"k and n_items must be positive, got k={k}, n_items={n_items}")
    if k > n_items:
        raise ValueError(f"cut-off k={k} exceeds the item universe n_items={n_items}")
    half = n_items // 2
    if k <= half:
        return 0.0
    ell = p**half * lerch_phi(p, 1, half + 1) - p**n_items * lerch_phi(p, 1, n_items + 1)
    return (1.0 - p) * (2.0 * (p**half - p**n_items) / (1.0 - p) - n_items * ell)


def frbo_at_k(x: Ranking, y: Ranking, cfg: SimilarityConfig) -> float:
    """RBO@k rescaled so identical lists give 1 (and, for FRBO_FULL, the
    least similar achievable lists give 0)."""
    k = _check_pair(x, y)
    if k != cfg.k:
        raise ValueError(f"rankings have length {k}, config cut-off is {cfg.k}")
    _check_p(cfg.p)
    total, norm = _rbo_terms(x, y, cfg.p)
    # the summed weights equal max_rbo up to rounding; using them makes
    # identical lists score exactly 1
    hi = (1.0 - cfg.p) * norm
    if cfg.kind is SimilarityKind.FRBO_SIMPLE:
        lo = 0.0
    elif cfg.kind is SimilarityKind.FRBO_FULL:
        lo = min_rbo(cfg.p, cfg.k, cfg.n_items)
    else:
        raise ValueError(f"frbo_at_k needs an FRBO kind, got {cfg.kind.value}")
    if hi - lo <= 1e-15:
        raise ValueError(f"degenerate normalization: max RBO equals min RBO for k={cfg.k}, n_items={cfg.n_items}")
    return ((1.0 - cfg.p) * total - lo) / (hi - lo)


def similarity(x: Ranking, y: Ranking, cfg: SimilarityConfig) -> float:
    if cfg.kind is SimilarityKind.JAC:
        return jaccard(x, y)
    if cfg.kind is SimilarityKind.RBO:
        return rbo_at_k(x, y, cfg.p)
    return frbo_at_k(x, y, cfg)


def rls(pair: RankingListPair, cfg: SimilarityConfig) -> RlsResult:
    """Mean similarity between aligned rankings, with the per-user values."""
    values = np.array(
        [similarity(a, b, cfg) for a, b in zip(pair.baseline, pair.perturbed)],
        dtype=np.float64,
    )
    return RlsResult(math.fsum(values) / len(values), values)
