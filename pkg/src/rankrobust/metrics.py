"""Sampled-negative top-k metrics and the paired Student's t-test."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

ALPHA = 1e-3
_CF_TOL = 1e-12
_CF_MAX_ITER = 10_000
_TINY = 1e-300


class CutoffMetrics(NamedTuple):
    precision: float
    recall: float
    mrr: float
    ndcg: float


METRIC_NAMES = CutoffMetrics._fields


def sample_negatives(user, n_items: int, count: int = 100, eval_seed: int = 0) -> np.ndarray:
    """Draw ``count`` distinct items the user never interacted with.

    ``user`` needs ``user_id`` and ``items`` (the full history). The draw only
    depends on ``(user_id, eval_seed)``, so every run compared under the same
    ``eval_seed`` sees the same negatives.
    """
    eligible = np.setdiff1d(np.arange(n_items, dtype=np.int64), np.asarray(user.items, dtype=np.int64))
    if len(eligible) < count:
        raise ValueError(
            f"user {user.user_id}: only {len(eligible)} items outside the history, {count} negatives requested"
        )
    rng = np.random.default_rng([eval_seed, user.user_id])
    return rng.choice(eligible, size=count, replace=False)


def metric_at_k(rank: int, k: int = 20) -> CutoffMetrics:
    """Precision, recall, MRR and NDCG at ``k`` for a single relevant item at ``rank``."""
    if rank < 1:
        raise ValueError(f"rank must be >= 1, got {rank}")
    if rank > k:
        return CutoffMetrics(0.0, 0.0, 0.0, 0.0)
    return CutoffMetrics(1.0 / k, 1.0, 1.0 / rank, 1.0 / math.log2(rank + 1))


# ---------------------------------------------------------------------------
# t-test


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: int
    p_value: float
    significant: bool


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > _TINY else _TINY)
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_TOL:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_two_sided_p(t: float, df: float) -> float:
    """Two-sided tail probability of Student's t with ``df`` degrees of freedom."""
    if math.isinf(t):
        return 0.0
    return betainc(df / 2.0, 0.5, df / (df + t * t))


def paired_t_test(a: Sequence[float], b: Sequence[float], alpha: float = ALPHA) -> TTestResult:
    """Paired Student's t-test of ``a - b`` against zero mean."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"paired samples differ in shape: {a.shape} vs {b.shape}")
    n = a.size
    if n < 2:
        raise ValueError("paired t-test needs at least 2 pairs")
    d = a - b
    mean = math.fsum(d) / n
    var = math.fsum((d - mean) ** 2) / (n - 1)
    if var == 0.0:
        raise ValueError("degenerate t-test: the paired differences have zero variance")
    t = mean / math.sqrt(var / n)
    p = min(1.0, max(0.0, t_two_sided_p(t, n - 1)))
    return TTestResult(t, n - 1, p, p < alpha)
