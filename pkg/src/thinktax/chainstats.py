"""Chain-length distribution estimation from right-censored generations.

A generation that hits its token cap is a right-censored observation of the
natural chain length: we only know ``L >= recorded length``. The product-limit
(Kaplan-Meier) estimator handles this directly. At a time where deaths and
censorings coincide, deaths are processed first, so censored chains still count
in that time's risk set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

# slack used when comparing a requested probability against the curve
_Q_TOL = 1e-12


@dataclass(frozen=True)
class ChainObservation:
    length: int
    censored: bool = False

    def __post_init__(self) -> None:
        if self.length < 1:
            raise ValueError(f"chain length must be >= 1, got {self.length}")


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class SurvivalCurve:
    """Right-continuous step CDF ``F(t) = Pr(L <= t)``.

    Steps are stored as parallel arrays: ``t`` strictly increasing, ``F``
    nondecreasing. Instances are immutable.
    """

    __slots__ = ("t", "F", "n_total", "n_censored")

    def __init__(self, t, F, n_total: int = 0, n_censored: int = 0):
        t = np.array(t, dtype=np.int64).ravel()
        F = np.array(F, dtype=np.float64).ravel()
        if t.shape != F.shape:
            raise ValueError("t and F must have equal length")
        if t.size == 0:
            raise ValueError("a survival curve needs at least one step")
        if np.any(np.diff(t) <= 0):
            raise ValueError("step times must be strictly increasing")
        if np.any(np.diff(F) < 0):
            raise ValueError("F must be nondecreasing")
        if F[0] < 0 or F[-1] > 1:
            raise ValueError("F must lie in [0, 1]")
        object.__setattr__(self, "t", _readonly(t))
        object.__setattr__(self, "F", _readonly(F))
        object.__setattr__(self, "n_total", int(n_total))
        object.__setattr__(self, "n_censored", int(n_censored))

    def __setattr__(self, name, value):
        raise AttributeError("SurvivalCurve is immutable")

    def __copy__(self):
        return self

    def __deepcopy__(self, memo):
        return self

    def __reduce__(self):
        return (SurvivalCurve, (self.t.tolist(), self.F.tolist(), self.n_total, self.n_censored))

    def __repr__(self) -> str:
        return (
            f"SurvivalCurve(steps={self.t.size}, max_F={self.max_f:.4f}, "
            f"n_total={self.n_total}, n_censored={self.n_censored})"
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, SurvivalCurve):
            return NotImplemented
        return (
            np.array_equal(self.t, other.t)
            and np.array_equal(self.F, other.F)
            and self.n_total == other.n_total
            and self.n_censored == other.n_censored
        )

    __hash__ = None

    @property
    def steps(self) -> list[tuple[int, float]]:
        return [(int(a), float(b)) for a, b in zip(self.t, self.F)]

    @property
    def max_f(self) -> float:
        return float(self.F[-1])

    def cdf_at(self, b):
        """Evaluate F at ``b`` (scalar or array); 0 below the first step."""
        b_arr = np.asarray(b)
        idx = np.searchsorted(self.t, b_arr, side="right") - 1
        out = np.where(idx >= 0, self.F[np.clip(idx, 0, None)], 0.0)
        if out.ndim == 0:
            return float(out)
        return out

    def truncation_rate(self, b) -> float:
        return 1.0 - self.cdf_at(b)

    def quantile(self, q: float) -> int:
        """Smallest step time ``t`` with ``F(t) >= q``."""
        if not 0.0 < q <= 1.0:
            raise ValueError(f"quantile level must lie in (0, 1], got {q}")
        if q > self.F[-1] + _Q_TOL:
            raise ValueError(
                f"quantile beyond identifiable range: q={q} exceeds max F={self.F[-1]:.6g}"
            )
        idx = int(np.searchsorted(self.F, q - _Q_TOL, side="left"))
        return int(self.t[idx])

    def median(self) -> int:
        return self.quantile(0.5)

    def density(self, points, step: int) -> np.ndarray:
        """Chain-length density smoothed over one cell: ``(F(t+s/2) - F(t-s/2)) / s``."""
        pts = np.asarray(points, dtype=float)
        half = step / 2.0
        return (self.cdf_at(pts + half) - self.cdf_at(pts - half)) / step

    def to_json(self) -> list[dict]:
        return [{"t": int(a), "F": float(b)} for a, b in zip(self.t, self.F)]

    def to_dict(self) -> dict:
        return {"steps": self.to_json(), "n_total": self.n_total, "n_censored": self.n_censored}

    @classmethod
    def from_json(cls, steps: Sequence[dict], n_total: int = 0, n_censored: int = 0) -> "SurvivalCurve":
        return cls([s["t"] for s in steps], [s["F"] for s in steps], n_total, n_censored)

    @classmethod
    def from_dict(cls, d: dict) -> "SurvivalCurve":
        return cls.from_json(d["steps"], d.get("n_total", 0), d.get("n_censored", 0))

    @classmethod
    def point_mass(cls, at: int) -> "SurvivalCurve":
        return cls([at], [1.0])


@dataclass(frozen=True, eq=False)
class HazardCurve:
    t: np.ndarray
    h: np.ndarray
    bandwidth: int

    @property
    def points(self) -> list[tuple[int, float]]:
        return [(int(a), float(b)) for a, b in zip(self.t, self.h)]

    def to_json(self) -> dict:
        return {"bandwidth": self.bandwidth, "points": [{"t": a, "h": b} for a, b in self.points]}


def _as_arrays(observations) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(observations, tuple) and len(observations) == 2 and not isinstance(
        observations[0], ChainObservation
    ):
        lengths, censored = observations
        lengths = np.asarray(lengths, dtype=np.int64)
        censored = np.asarray(censored, dtype=bool)
    else:
        obs = list(observations)
        lengths = np.fromiter((o.length for o in obs), dtype=np.int64, count=len(obs))
        censored = np.fromiter((o.censored for o in obs), dtype=bool, count=len(obs))
    if lengths.shape != censored.shape:
        raise ValueError("lengths and censoring flags must align")
    if lengths.size and lengths.min() < 1:
        raise ValueError("chain lengths must be >= 1")
    return lengths, censored


def km_estimate(observations: Iterable[ChainObservation] | tuple) -> SurvivalCurve:
    """Product-limit estimate of the chain-length CDF.

    ``observations`` is either a sequence of :class:`ChainObservation` or a
    ``(lengths, censored)`` pair of arrays. With no censoring the result is
    the empirical CDF computed as ``cumsum(deaths) / n``, so it matches an
    ECDF bit for bit.
    """
    lengths, censored = _as_arrays(observations)
    n = lengths.size
    if n == 0:
        raise ValueError("km_estimate needs at least one observation")
    deaths = lengths[~censored]
    if deaths.size == 0:
        raise ValueError("CDF unidentifiable: every observation is censored")

    times, d = np.unique(deaths, return_counts=True)
    n_cens = int(censored.sum())
    if n_cens == 0:
        F = np.cumsum(d) / n
    else:
        ordered = np.sort(lengths)
        at_risk = n - np.searchsorted(ordered, times, side="left")
        F = 1.0 - np.cumprod(1.0 - d / at_risk)
    return SurvivalCurve(times, F, n_total=n, n_censored=n_cens)


def cdf_at(curve: SurvivalCurve, b):
    return curve.cdf_at(b)


def quantile(curve: SurvivalCurve, q: float) -> int:
    return curve.quantile(q)


def hazard_estimate(
    observations: Iterable[ChainObservation] | tuple,
    bandwidth: int,
    start: int | None = None,
) -> HazardCurve:
    """Actuarial (life-table) hazard on windows ``[t, t+bw)``.

    ``h = d / (bw * (n - c/2 - d/2))`` with ``n`` at risk at the window start,
    ``d`` completions and ``c`` censorings inside it. The half-weights remove
    most of the downward bias a plain ``d / (n * bw)`` has on wide windows.
    Windows start at the smallest observed length (or ``start``); windows with
    nobody at risk are omitted.
    """
    if bandwidth < 1:
        raise ValueError(f"bandwidth must be >= 1, got {bandwidth}")
    lengths, censored = _as_arrays(observations)
    if lengths.size == 0:
        return HazardCurve(np.empty(0, np.int64), np.empty(0), bandwidth)
    lo = int(lengths.min()) if start is None else int(start)
    hi = int(lengths.max())
    grid = np.arange(lo, hi + 1, bandwidth, dtype=np.int64)
    ordered = np.sort(lengths)
    events = np.sort(lengths[~censored])
    cens = np.sort(lengths[censored])

    def in_window(xs):
        return np.searchsorted(xs, grid + bandwidth, side="left") - np.searchsorted(xs, grid, side="left")

    at_risk = lengths.size - np.searchsorted(ordered, grid, side="left")
    d = in_window(events)
    c = in_window(cens)
    exposure = at_risk - 0.5 * c - 0.5 * d
    keep = at_risk > 0
    h = d[keep] / (np.maximum(exposure[keep], 0.5) * float(bandwidth))
    return HazardCurve(grid[keep], h, bandwidth)
