"""Interval estimates and paired tests for accuracy comparisons."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special
from scipy.stats import binom

DEFAULT_BOOTSTRAP_ITERATIONS = 10_000


def normal_quantile(p: float) -> float:
    """Standard normal inverse CDF (scipy's ``ndtri``, accurate to ~1e-15)."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    return float(special.ndtri(p))


def wilson_ci(successes: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n < 1:
        raise ValueError("wilson_ci needs n >= 1")
    if not 0 <= successes <= n:
        raise ValueError(f"successes must lie in [0, n], got {successes} of {n}")
    if not 0.0 < confidence < 1.0:
        raise ValueError(f"confidence must lie in (0, 1), got {confidence}")
    z = normal_quantile(0.5 + confidence / 2.0)
    p = successes / n
    z2 = z * z
    denom = 1.0 + z2 / n
    centre = (p + z2 / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / denom
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == n else min(1.0, centre + half)
    return lo, hi


def mcnemar_exact(wins_a: int, wins_b: int) -> float:
    """Two-sided exact McNemar p-value: doubled smaller binomial tail, capped at 1."""
    if wins_a < 0 or wins_b < 0:
        raise ValueError("discordant counts must be nonnegative")
    n = wins_a + wins_b
    if n == 0:
        raise ValueError("McNemar test undefined with no discordant pairs")
    k = min(wins_a, wins_b)
    return float(min(1.0, 2.0 * binom.cdf(k, n, 0.5)))


def hoeffding_lower(p_hat: float, n: int, delta: float) -> float:
    """One-sided Hoeffding lower confidence bound at level ``1 - delta``."""
    if n < 1:
        raise ValueError("hoeffding_lower needs n >= 1")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    return max(0.0, p_hat - math.sqrt(math.log(1.0 / delta) / (2.0 * n)))


@dataclass(frozen=True)
class PairedOutcomes:
    """Per-question correctness of two methods, aligned by question id."""

    ids: tuple
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.a, dtype=bool)
        b = np.asarray(self.b, dtype=bool)
        if not (len(self.ids) == a.size == b.size):
            raise ValueError("paired outcomes must have equal lengths")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("paired outcome ids must be unique")
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @classmethod
    def align(cls, a: dict, b: dict) -> "PairedOutcomes":
        """Build from two ``{id: correct}`` maps that must cover the same ids."""
        missing_b = sorted(set(a) - set(b), key=str)
        missing_a = sorted(set(b) - set(a), key=str)
        if missing_a or missing_b:
            raise ValueError(f"id mismatch: missing from A {missing_a}, missing from B {missing_b}")
        ids = sorted(a, key=str)
        return cls(tuple(ids), np.array([a[i] for i in ids]), np.array([b[i] for i in ids]))

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def wins_a(self) -> int:
        return int(np.sum(self.a & ~self.b))

    @property
    def wins_b(self) -> int:
        return int(np.sum(~self.a & self.b))

    @property
    def ties(self) -> int:
        return int(np.sum(self.a == self.b))

    def mean_diff(self) -> float:
        return float(self.a.mean() - self.b.mean())


def paired_bootstrap_diff(
    pairs: PairedOutcomes,
    iterations: int = DEFAULT_BOOTSTRAP_ITERATIONS,
    seed: int = 0,
    confidence: float = 0.95,
) -> tuple[float, float]:
    """Percentile CI, in percentage points, on ``mean(A) - mean(B)``."""
    n = len(pairs)
    if n == 0:
        raise ValueError("paired_bootstrap_diff needs at least one pair")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    diff = pairs.a.astype(np.int8) - pairs.b.astype(np.int8)
    rng = np.random.default_rng(seed)
    means = np.empty(iterations)
    chunk = max(1, min(iterations, 2_000_000 // n))
    for start in range(0, iterations, chunk):
        stop = min(iterations, start + chunk)
        idx = rng.integers(0, n, size=(stop - start, n))
        means[start:stop] = diff[idx].mean(axis=1)
    tail = (1.0 - confidence) / 2.0
    lo, hi = np.quantile(means, [tail, 1.0 - tail])
    return float(lo * 100.0), float(hi * 100.0)


def rmse(predicted: Sequence[float], observed: Sequence[float]) -> float:
    p = np.asarray(predicted, dtype=float)
    o = np.asarray(observed, dtype=float)
    if p.shape != o.shape:
        raise ValueError(f"length mismatch: {p.size} predictions vs {o.size} observations")
    if p.size == 0:
        raise ValueError("rmse of empty sequences")
    return float(np.sqrt(np.mean((p - o) ** 2)))
