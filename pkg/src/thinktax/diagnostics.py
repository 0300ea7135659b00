"""Closed-form accuracy identities and bounds for budgeted reasoning.

Every function here takes measured population quantities and returns either a
probability or a value in percentage points (pp). The core identity is the
coupled-accuracy decomposition

    Acc(b) = F_L(b) * alpha_c + (1 - F_L(b)) * alpha_t

where ``F_L`` is the chain-length CDF, ``alpha_c`` the accuracy of chains that
finish within the budget and ``alpha_t`` the residual accuracy of truncated
ones. The rest (tax, crossover, recoverable tax, modal and DFR bounds, the
optimal reasoning/answer split) are rearrangements or refinements of it.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from typing import Callable, Mapping, NamedTuple, Sequence

import numpy as np

from .chainstats import ChainObservation, HazardCurve, SurvivalCurve, km_estimate

PP = 100.0
IDENTITY_TOL = 1e-9
SATURATION_TOL_PP = 1.0
EXTRAPOLATION_FACTOR = 2.0


class AssumptionWarning(UserWarning):
    """Measured inputs violate an assumption the formula relies on."""


class ExtrapolationWarning(UserWarning):
    """A component measured at one budget is being reused far from it."""


def _check_prob(name: str, x: float) -> None:
    if not 0.0 <= x <= 1.0 or math.isnan(x):
        raise ValueError(f"{name} must lie in [0, 1], got {x}")


@dataclass(frozen=True)
class DecompositionParams:
    f_l: float
    alpha_c: float
    alpha_t: float
    acc_nt: float | None = None

    def __post_init__(self) -> None:
        for name in ("f_l", "alpha_c", "alpha_t"):
            _check_prob(name, getattr(self, name))
        if self.acc_nt is not None:
            _check_prob("acc_nt", self.acc_nt)
        if self.alpha_t > self.alpha_c:
            warnings.warn(
                f"alpha_t={self.alpha_t:.4g} exceeds alpha_c={self.alpha_c:.4g}; "
                "truncated chains are expected to be the weaker subset",
                AssumptionWarning,
                stacklevel=3,
            )

    @classmethod
    def from_curve(
        cls, curve: SurvivalCurve, budget: int, alpha_c: float, alpha_t: float, acc_nt: float | None = None
    ) -> "DecompositionParams":
        return cls(curve.cdf_at(budget), alpha_c, alpha_t, acc_nt)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ModalParams:
    delta: float
    epsilon: float
    pi_eta: float
    alpha_c_plus: float
    b_a: int

    def __post_init__(self) -> None:
        for name in ("delta", "epsilon", "pi_eta", "alpha_c_plus"):
            _check_prob(name, getattr(self, name))
        if self.b_a < 0:
            raise ValueError(f"b_a must be >= 0, got {self.b_a}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CrossoverReport:
    f_star: float
    f_star_raw: float
    b_star: int | None
    b_sat: int | None = None
    gamma: float | None = None
    note: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TaxBreakdown:
    tax: float
    truncation_loss: float
    reasoning_regret: float
    recoverable: float | None = None
    residual: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


class CrossoverFraction(NamedTuple):
    value: float
    raw: float
    in_range: bool


class ModalCheck(NamedTuple):
    holds: bool
    margin: float


def predict_coupled_accuracy(p: DecompositionParams) -> float:
    return p.f_l * p.alpha_c + (1.0 - p.f_l) * p.alpha_t


def thinking_tax(p: DecompositionParams) -> float:
    """Non-thinking accuracy minus coupled thinking accuracy, in pp."""
    if p.acc_nt is None:
        raise ValueError("thinking_tax needs acc_nt")
    return (p.acc_nt - predict_coupled_accuracy(p)) * PP


NO_CROSSOVER = "no finite crossover under these params"


def crossover_fraction(acc_nt: float, alpha_c: float, alpha_t: float) -> CrossoverFraction:
    """Completion fraction at which coupled thinking matches non-thinking accuracy."""
    if alpha_c == alpha_t:
        raise ValueError("degenerate denominator: alpha_c equals alpha_t")
    raw = (acc_nt - alpha_t) / (alpha_c - alpha_t)
    in_range = 0.0 <= raw <= 1.0
    return CrossoverFraction(min(1.0, max(0.0, raw)), raw, in_range)


def saturation_budget(
    budgets: Sequence[int], accuracies: Sequence[float], tol_pp: float = SATURATION_TOL_PP
) -> int:
    """Smallest swept budget whose accuracy is within ``tol_pp`` of the sweep maximum."""
    if len(budgets) != len(accuracies) or not budgets:
        raise ValueError("budgets and accuracies must be equal-length and nonempty")
    order = np.argsort(budgets)
    b = np.asarray(budgets)[order]
    acc = np.asarray(accuracies, dtype=float)[order]
    best = acc.max()
    # small slack so a gap of exactly tol_pp is not lost to rounding
    ok = (best - acc) * PP <= tol_pp + 1e-9
    return int(b[np.argmax(ok)])


def crossover_budget(
    curve: SurvivalCurve,
    acc_nt: float,
    alpha_c: float,
    alpha_t: float,
    b_sat: int | None = None,
) -> CrossoverReport:
    """Estimate ``b* = F_L^{-1}(f*)`` and the multiplier ``gamma = b*/b_sat``."""
    cf = crossover_fraction(acc_nt, alpha_c, alpha_t)
    note = None
    if cf.raw > 1.0:
        b_star = None
        note = NO_CROSSOVER
    elif cf.raw <= 0.0:
        b_star = 0
        note = None if cf.raw == 0.0 else NO_CROSSOVER
    else:
        try:
            b_star = curve.quantile(cf.value)
        except ValueError as exc:
            raise ValueError(
                f"crossover beyond observed chain lengths: f*={cf.value:.4f}, max F={curve.max_f:.4f}"
            ) from exc
    gamma = None
    if b_star is not None and b_sat:
        gamma = b_star / b_sat
    return CrossoverReport(cf.value, cf.raw, b_star, b_sat, gamma, note)


def recoverable_tax(rho: float, alpha_extract: float, alpha_t: float) -> float:
    """Tax recoverable by decoupled extraction on truncated chains, in pp."""
    for name, x in (("rho", rho), ("alpha_extract", alpha_extract), ("alpha_t", alpha_t)):
        _check_prob(name, x)
    if alpha_extract < alpha_t:
        warnings.warn(
            "extraction is less accurate than the truncated residual; recoverable tax is negative",
            AssumptionWarning,
            stacklevel=2,
        )
    return rho * (alpha_extract - alpha_t) * PP


def recoverable_tax_matched(
    f_l_br: float,
    f_l_b: float,
    alpha_extract: float,
    alpha_t_b: float,
    alpha_c_br: float,
    alpha_c_b: float,
) -> float:
    """Recoverable tax when the split policy spends the same total budget ``b``.

    Reasoning gets ``b_r < b`` so fewer chains complete; the three terms are
    the extraction gain on chains truncated at ``b_r``, the loss on chains that
    would have completed in ``(b_r, b]``, and the completed-accuracy shift.
    """
    if f_l_br > f_l_b + 1e-12:
        raise ValueError("F_L(b_r) must not exceed F_L(b) when b_r <= b")
    gain = (1.0 - f_l_br) * (alpha_extract - alpha_t_b)
    lost = (f_l_b - f_l_br) * (alpha_c_b - alpha_t_b)
    shift = f_l_br * (alpha_c_br - alpha_c_b)
    return (gain - lost + shift) * PP


def two_source_decomposition(p: DecompositionParams) -> TaxBreakdown:
    """Split the tax into truncation loss (TL) and reasoning regret (RR)."""
    if p.acc_nt is None:
        raise ValueError("two_source_decomposition needs acc_nt")
    tax = thinking_tax(p)
    tl = (1.0 - p.f_l) * (p.alpha_c - p.alpha_t) * PP
    rr = (p.acc_nt - p.alpha_c) * PP
    if abs(tl + rr - tax) > IDENTITY_TOL:
        raise ArithmeticError(f"TL + RR = {tl + rr!r} disagrees with tax {tax!r}")
    return TaxBreakdown(tax=tax, truncation_loss=tl, reasoning_regret=rr)


def tax_breakdown(p: DecompositionParams, alpha_extract: float | None = None) -> TaxBreakdown:
    """Two-source split plus recoverable part R and residual I = tax - R."""
    tb = two_source_decomposition(p)
    if alpha_extract is None:
        return tb
    r = recoverable_tax(1.0 - p.f_l, alpha_extract, p.alpha_t)
    return TaxBreakdown(tb.tax, tb.truncation_loss, tb.reasoning_regret, r, tb.tax - r)


def same_subset_decomposition(
    f_l: float, alpha_nt_c: float, alpha_nt_t: float, alpha_c: float, alpha_t: float
) -> tuple[float, float]:
    """Tax split by comparing both modes on the same completed/truncated subsets.

    ``alpha_nt_c`` and ``alpha_nt_t`` are non-thinking accuracies on the
    questions whose thinking chains completed and were truncated. Returns
    ``(term_completed, term_truncated)`` in pp.
    """
    for name, x in (
        ("f_l", f_l),
        ("alpha_nt_c", alpha_nt_c),
        ("alpha_nt_t", alpha_nt_t),
        ("alpha_c", alpha_c),
        ("alpha_t", alpha_t),
    ):
        _check_prob(name, x)
    return f_l * (alpha_nt_c - alpha_c) * PP, (1.0 - f_l) * (alpha_nt_t - alpha_t) * PP


def modal_advantage_check(m: ModalParams) -> ModalCheck:
    """Does extraction beat continuing to think on a truncated chain?

    Strict test of ``pi_eta > delta*alpha_c_plus + (1-delta)*epsilon``; the
    margin is LHS minus RHS in pp.
    """
    rhs = m.delta * m.alpha_c_plus + (1.0 - m.delta) * m.epsilon
    return ModalCheck(m.pi_eta > rhs, (m.pi_eta - rhs) * PP)


def dfr_lower_bound(h_tau: float, m: ModalParams) -> float:
    """Lower bound on the modal advantage under a decreasing completion hazard (pp)."""
    if h_tau < 0:
        raise ValueError(f"hazard must be >= 0, got {h_tau}")
    return (m.pi_eta - m.epsilon - h_tau * m.b_a * (m.alpha_c_plus - m.epsilon)) * PP


def dfr_cutoff(m: ModalParams) -> float:
    """Hazard level below which the DFR bound is nonnegative."""
    if not m.pi_eta > m.epsilon:
        raise ValueError("dfr threshold requires pi_eta > epsilon")
    if not m.alpha_c_plus > m.epsilon:
        raise ValueError("dfr threshold requires alpha_c_plus > epsilon")
    if m.b_a <= 0:
        raise ValueError("dfr threshold requires b_a > 0")
    return (m.pi_eta - m.epsilon) / (m.b_a * (m.alpha_c_plus - m.epsilon))


def dfr_threshold(hazard: HazardCurve, m: ModalParams) -> int | None:
    """First hazard-curve point at or below the cutoff; None if never reached."""
    cutoff = dfr_cutoff(m)
    hits = np.flatnonzero(np.asarray(hazard.h) <= cutoff)
    if hits.size == 0:
        return None
    return int(hazard.t[hits[0]])


@dataclass(frozen=True)
class SplitModel:
    """Extraction-accuracy surface plus the chain-length curve it is paired with."""

    alpha_e: Callable[[float, float], float]
    f_l_curve: SurvivalCurve
    alpha_c: float


@dataclass(frozen=True, eq=False)
class SplitResult:
    b_r_star: int
    accuracy: float
    grid: np.ndarray
    objective: np.ndarray
    residual: np.ndarray

    @property
    def residual_curve(self) -> list[tuple[int, float]]:
        return [(int(b), float(r)) for b, r in zip(self.grid, self.residual) if not math.isnan(r)]


def split_objective(model: SplitModel, b_r, b_total: int) -> np.ndarray:
    b_r = np.atleast_1d(np.asarray(b_r, dtype=float))
    F = model.f_l_curve.cdf_at(b_r)
    ae = np.array([model.alpha_e(r, b_total - r) for r in b_r], dtype=float)
    return F * model.alpha_c + (1.0 - F) * ae


def optimal_split_search(model: SplitModel, b_total: int, grid_step: int) -> SplitResult:
    """Grid search for the reasoning budget ``b_r`` maximizing decoupled accuracy.

    The total ``b_total`` is split into reasoning ``b_r`` and answer
    ``b_total - b_r``. The stationarity residual

        f_L(b_r) (alpha_c - alpha_e) - (1 - F_L(b_r)) (d alpha_e/d b_a - d alpha_e/d b_r)

    is reported at interior grid points using central differences of width
    ``grid_step``; the density is the curve increment over one grid cell.
    """
    if grid_step < 1:
        raise ValueError("grid_step must be >= 1")
    grid = np.arange(0, b_total + 1, grid_step, dtype=np.int64)
    if grid.size < 3:
        raise ValueError(f"degenerate grid: {grid.size} points for b_total={b_total}, step={grid_step}")
    obj = split_objective(model, grid, b_total)
    if np.any((obj < -1e-12) | (obj > 1 + 1e-12)):
        raise ValueError("alpha_e surface left [0, 1] on the search grid")
    h = float(grid_step)
    residual = np.full(grid.size, np.nan)
    for i in range(1, grid.size - 1):
        br = float(grid[i])
        ba = b_total - br
        ae = model.alpha_e(br, ba)
        d_r = (model.alpha_e(br + h, ba) - model.alpha_e(br - h, ba)) / (2 * h)
        d_a = (model.alpha_e(br, ba + h) - model.alpha_e(br, ba - h)) / (2 * h)
        F = model.f_l_curve.cdf_at(br)
        f = float(model.f_l_curve.density([br], grid_step)[0])
        residual[i] = f * (model.alpha_c - ae) - (1.0 - F) * (d_a - d_r)
    best = int(np.argmax(obj))
    return SplitResult(int(grid[best]), float(obj[best]), grid, obj, residual)


def cross_scale_gain(rho: float, advantage: float) -> float:
    """Predicted decoupling gain (pp) from a truncation rate and a per-question advantage (pp)."""
    _check_prob("rho", rho)
    return rho * advantage


def _per_budget(x: float | Mapping[int, float], b: int) -> float:
    if isinstance(x, Mapping):
        return float(x[b])
    return float(x)


def pilot_predict_sweep(
    pilot: Sequence[ChainObservation] | tuple,
    alpha_c: float | Mapping[int, float],
    alpha_t: float | Mapping[int, float],
    budgets: Sequence[int],
    measured_at: int | None = None,
) -> list[tuple[int, float]]:
    """Predict a full budget sweep from a small pilot run.

    The pilot's chain lengths (censored at its own cap) give a KM estimate of
    ``F_L``; the decomposition is then evaluated at each budget. ``alpha_c``
    and ``alpha_t`` may be scalars or per-budget maps. When a scalar is reused
    across budgets more than a factor of two away from ``measured_at`` an
    :class:`ExtrapolationWarning` is emitted.
    """
    curve = km_estimate(pilot)
    if measured_at is not None:
        far = [
            b
            for b in budgets
            if b > EXTRAPOLATION_FACTOR * measured_at or b * EXTRAPOLATION_FACTOR < measured_at
        ]
        scalar = not isinstance(alpha_t, Mapping) or not isinstance(alpha_c, Mapping)
        if far and scalar:
            warnings.warn(
                f"accuracy components measured at b={measured_at} reused at budgets {far}",
                ExtrapolationWarning,
                stacklevel=2,
            )
    out = []
    for b in budgets:
        p = DecompositionParams(curve.cdf_at(b), _per_budget(alpha_c, b), _per_budget(alpha_t, b))
        out.append((int(b), predict_coupled_accuracy(p)))
    return out


def mrsd_cost_bound(p_stage0: float, t1_bar: float, b1: int, k_bar: float, b_r: int, b_a: int) -> float:
    """Expected tokens per question for the probe-then-refine cascade.

    Accepted probes cost their own length; escalated questions pay the full
    probe plus ``k_bar`` think-and-extract rounds.
    """
    _check_prob("p_stage0", p_stage0)
    if min(t1_bar, b1, k_bar, b_r, b_a) < 0:
        raise ValueError("cost inputs must be nonnegative")
    return p_stage0 * t1_bar + (1.0 - p_stage0) * (b1 + k_bar * (b_r + b_a))
