"""Ranking and hypothesis-test statistics for comparing search policies."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import kernels

MAX_CF_ITER = 300
CF_TOL = 1e-12
_TINY = 1e-300


class StatsError(ValueError):
    pass


@dataclass(frozen=True)
class SampleSummary:
    mean: float
    std: float
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise StatsError(f"a t-test needs n >= 2, got {self.n}")
        if not self.std >= 0:
            raise StatsError(f"std must be >= 0, got {self.std}")

    @classmethod
    def of(cls, values) -> "SampleSummary":
        v = np.asarray(values, dtype=np.float64)
        return cls(float(v.mean()), float(v.std(ddof=1)) if len(v) > 1 else 0.0, len(v))


@dataclass(frozen=True)
class RankQuery:
    r: int
    r_max: int
    budget: int

    def __post_init__(self):
        if not 1 <= self.r <= self.r_max:
            raise StatsError(f"rank {self.r} outside [1, {self.r_max}]")
        if self.budget < 1:
            raise StatsError(f"budget must be >= 1, got {self.budget}")


@dataclass(frozen=True)
class CorrelationReport:
    tau: float
    concordant: int
    discordant: int
    ties: int
    n_items: int

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "concordant": self.concordant,
            "discordant": self.discordant,
            "ties": self.ties,
            "n_items": self.n_items,
        }


@dataclass(frozen=True)
class WelchResult:
    t: float
    df: float
    p_two_sided: float


# -- Kendall tau ----------------------------------------------------------


def _aligned(a, b) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(a, Mapping) and isinstance(b, Mapping):
        if set(a) != set(b):
            raise StatsError("rankings cover different key sets")
        keys = sorted(a)
        return np.array([a[k] for k in keys], float), np.array([b[k] for k in keys], float)
    a, b = list(a), list(b)
    if len(a) != len(b):
        raise StatsError(f"rankings have different lengths ({len(a)} vs {len(b)})")
    if a and all(isinstance(k, str) for k in a + b):
        # ordered key lists, best first
        if len(set(a)) != len(a) or len(set(b)) != len(b):
            raise StatsError("ranking contains repeated keys")
        if set(a) != set(b):
            raise StatsError("rankings cover different key sets")
        pos_b = {k: i for i, k in enumerate(b)}
        return np.arange(len(a), dtype=float), np.array([pos_b[k] for k in a], float)
    return np.asarray(a, float), np.asarray(b, float)


def kendall_tau(ranking_a, ranking_b) -> CorrelationReport:
    """Tie-aware Kendall tau-b by exact pair counting.

    Accepts two ``{key: score}`` mappings, two ordered key lists (best
    first), or two aligned score sequences.  Equals tau-a when there are no
    ties.
    """
    x, y = _aligned(ranking_a, ranking_b)
    m = len(x)
    if m < 2:
        raise StatsError("kendall_tau needs at least 2 items")
    conc, disc, tx, ty, txy = kernels.count_pairs(x, y)
    n0 = m * (m - 1) // 2
    denom = math.sqrt((n0 - tx) * (n0 - ty))
    if denom == 0:
        raise StatsError("tau is undefined when one ranking is constant")
    tau = (conc - disc) / denom
    return CorrelationReport(max(-1.0, min(1.0, tau)), conc, disc, tx + ty - txy, m)


# -- Student t via the regularized incomplete beta ------------------------


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for I_x(a, b), modified Lentz evaluation."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, MAX_CF_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < CF_TOL:
            return h
    raise StatsError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float, y: float | None = None) -> float:
    """Regularized incomplete beta ``I_x(a, b)``.

    ``y`` may carry ``1 - x`` computed without cancellation.
    """
    if y is None:
        y = 1.0 - x
    if a <= 0 or b <= 0:
        raise StatsError("betainc needs a, b > 0")
    if not 0.0 <= x <= 1.0:
        raise StatsError(f"betainc needs 0 <= x <= 1, got {x}")
    if x == 0.0:
        return 0.0
    if y == 0.0:
        return 1.0
    log_front = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log(y)
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _betacf(b, a, y) / b


def student_t_sf2(t: float, df: float) -> float:
    """Two-sided tail probability ``P(|T| >= |t|)``."""
    if df <= 0:
        raise StatsError(f"df must be > 0, got {df}")
    if math.isinf(t):
        return 0.0
    t2 = t * t
    return betainc(0.5 * df, 0.5, df / (df + t2), t2 / (df + t2))


def student_t_cdf(t: float, df: float) -> float:
    tail = 0.5 * student_t_sf2(t, df)
    return 1.0 - tail if t > 0 else tail


def welch_t(a: SampleSummary, b: SampleSummary) -> WelchResult:
    """Welch's unequal-variance two-sample t-test from summary statistics.

    When both standard deviations are zero the test is degenerate: ``p = 1``
    for equal means and ``p = 0`` otherwise, with ``t`` reported as 0 or
    +/-inf and ``df = n_a + n_b - 2``.
    """
    va, vb = a.std**2 / a.n, b.std**2 / b.n
    diff = a.mean - b.mean
    if va + vb == 0:
        df = float(a.n + b.n - 2)
        if diff == 0:
            return WelchResult(0.0, df, 1.0)
        return WelchResult(math.copysign(math.inf, diff), df, 0.0)
    se2 = va + vb
    t = diff / math.sqrt(se2)
    df = se2 * se2 / (va * va / (a.n - 1) + vb * vb / (b.n - 1))
    return WelchResult(t, df, student_t_sf2(t, df))


# -- search-quality metric ------------------------------------------------


def p_surpass_random(q: RankQuery | int, r_max: int | None = None, budget: int | None = None) -> float:
    """Probability that the found architecture beats the best of ``budget`` uniform draws.

    Computed as ``(1 - r / r_max) ** budget``: the chance that none of the
    random draws lands strictly above rank ``r``.
    """
    if not isinstance(q, RankQuery):
        q = RankQuery(int(q), int(r_max), int(budget))
    return (1.0 - q.r / q.r_max) ** q.budget


# -- multi-seed aggregation -----------------------------------------------


def _value_of(item):
    if hasattr(item, "best_score"):
        return float(item.best_score), getattr(item, "direction", None), getattr(item, "seed", None), "search"
    if hasattr(item, "ppl"):
        return float(item.ppl), "lower-better", getattr(item, "seed", None), "eval"
    return float(item), None, None, "value"


def aggregate(results: Sequence, direction: str | None = None) -> dict:
    """Mean, sample std (n-1), and best over per-seed results.

    With a single result the std is reported as 0 and ``single`` is set.
    """
    if not results:
        raise StatsError("aggregate of no results")
    parsed = [_value_of(r) for r in results]
    kinds = {p[3] for p in parsed}
    dirs = {p[1] for p in parsed if p[1] is not None}
    if len(kinds) > 1 or len(dirs) > 1:
        raise StatsError("aggregate needs homogeneous results")
    direction = direction or (dirs.pop() if dirs else "higher-better")
    values = np.array([p[0] for p in parsed])
    n = len(values)
    best = float(values.max() if direction == "higher-better" else values.min())
    return {
        "mean": float(values.mean()),
        "std": float(values.std(ddof=1)) if n > 1 else 0.0,
        "best": best,
        "n": n,
        "single": n == 1,
        "direction": direction,
        "rows": [{"seed": p[2], "value": p[0]} for p in parsed],
    }
