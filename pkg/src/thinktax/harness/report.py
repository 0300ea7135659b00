"""Summaries, paired comparisons and decomposition diagnostics over a RunSet.

All documents are plain dicts built in a fixed order from sorted records, and
wall-clock times never enter them, so two runs over the same completed cells
serialize to identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from collections import Counter
from typing import Sequence

import numpy as np

from .. import diagnostics as dx
from ..chainstats import km_estimate
from ..stats import PairedOutcomes, mcnemar_exact, paired_bootstrap_diff, rmse, wilson_ci
from .dataset import DataError
from .records import RunRecord, RunSet

PP = 100.0


def _mean(xs) -> float | None:
    xs = list(xs)
    return float(np.mean(xs)) if xs else None


def _is_single_think(records: Sequence[RunRecord]) -> bool:
    return bool(records) and all(
        r.outcome.resolution == "single" and r.outcome.stages[0].mode == "think" for r in records
    )


def _is_single(records: Sequence[RunRecord], mode: str) -> bool:
    return bool(records) and all(
        r.outcome.resolution == "single" and r.outcome.stages[0].mode == mode for r in records
    )


def cell_decomposition(records: Sequence[RunRecord], budget: int) -> dict:
    """Measured (F_L(b), alpha_c, alpha_t) for one single-call thinking cell."""
    natural = [r for r in records if r.outcome.stages[0].stop.natural]
    truncated = [r for r in records if not r.outcome.stages[0].stop.natural]
    lengths = [r.outcome.stages[0].tokens_generated for r in records]
    censored = [not r.outcome.stages[0].stop.natural for r in records]
    flags = []
    f_l = None
    if natural:
        f_l = km_estimate((np.maximum(lengths, 1), censored)).cdf_at(budget)
    else:
        flags.append("alpha_c unmeasurable: no natural stops")
    if not truncated:
        flags.append("alpha_t unmeasurable: no truncated chains")
    return {
        "f_l": f_l if natural else 0.0,
        "alpha_c": _mean(r.correct for r in natural),
        "alpha_t": _mean(r.correct for r in truncated),
        "n_natural": len(natural),
        "n_truncated": len(truncated),
        "flags": flags,
    }


def summarize(runset: RunSet, confidence: float = 0.95) -> dict:
    cells = []
    for label, budget in runset.cells():
        recs = runset.cell(label, budget)
        ok = [r for r in recs if r.ok]
        row: dict = {"label": label, "budget": budget, "n": len(ok), "n_errors": len(recs) - len(ok)}
        if ok:
            k = sum(r.correct for r in ok)
            lo, hi = wilson_ci(k, len(ok), confidence)
            first = [r.outcome.stages[0] for r in ok]
            row.update(
                accuracy=k / len(ok),
                ci_lo=lo,
                ci_hi=hi,
                avg_generated=_mean(r.outcome.tokens_generated_total for r in ok),
                avg_effective=_mean(r.outcome.tokens_effective_total for r in ok),
                natural_stop_rate=_mean(s.stop.natural for s in first),
                strict_stop_rate=_mean(s.stop.strict for s in first),
                utilization=_mean(s.tokens_generated / s.budget for s in first),
                final_marker_rate=_mean(s.stop.has_final_marker for s in first),
                resolution_mix=dict(sorted(Counter(r.outcome.resolution for r in ok).items())),
            )
            if _is_single_think(ok) and budget is not None:
                row["decomposition"] = cell_decomposition(ok, budget)
        cells.append(row)
    errors = [
        {"label": r.label, "budget": r.budget, "item_id": r.item_id, "kind": r.error_kind, "error": r.error}
        for r in runset.errors()
    ]
    return {"cells": cells, "errors": errors}


def to_json(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


CSV_COLUMNS = (
    "label",
    "budget",
    "n",
    "n_errors",
    "accuracy",
    "ci_lo",
    "ci_hi",
    "avg_generated",
    "avg_effective",
    "natural_stop_rate",
    "strict_stop_rate",
    "utilization",
    "final_marker_rate",
    "f_l",
    "alpha_c",
    "alpha_t",
)


def to_csv(summary: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for c in summary["cells"]:
        dec = c.get("decomposition", {})
        w.writerow([dec.get(k, "") if k in ("f_l", "alpha_c", "alpha_t") else c.get(k, "") for k in CSV_COLUMNS])
    return buf.getvalue()


def _fmt(x, pct: bool = True) -> str:
    if x is None:
        return "-"
    return f"{x * PP:.1f}" if pct else f"{x:.0f}"


def to_text(summary: dict) -> str:
    head = f"{'label':<18} {'budget':>7} {'n':>6} {'acc%':>6} {'95% CI':>13} {'tok':>7} {'eff':>7} {'stop%':>6} {'util':>5}"
    lines = [head, "-" * len(head)]
    for c in summary["cells"]:
        if not c["n"]:
            lines.append(f"{c['label']:<18} {'-' if c['budget'] is None else c['budget']:>7} {0:>6}  (all {c['n_errors']} cells failed)")
            continue
        ci = f"{_fmt(c['ci_lo'])}-{_fmt(c['ci_hi'])}"
        lines.append(
            f"{c['label']:<18} {'-' if c['budget'] is None else c['budget']:>7} {c['n']:>6} {_fmt(c['accuracy']):>6} {ci:>13} "
            f"{_fmt(c['avg_generated'], False):>7} {_fmt(c['avg_effective'], False):>7} "
            f"{_fmt(c['natural_stop_rate']):>6} {c['utilization']:>5.2f}"
        )
    if summary["errors"]:
        lines.append(f"{len(summary['errors'])} cell(s) failed; see the JSON report")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------ comparisons


def _only_budget(runset: RunSet, label: str, budget):
    if budget is not None:
        return budget
    budgets = runset.budgets(label)
    if not budgets:
        raise DataError(f"no records for label {label!r}")
    if len(budgets) > 1:
        raise DataError(f"label {label!r} has several budgets {budgets}; pick one")
    return budgets[0]


def paired_compare(
    runset: RunSet,
    label_a: str,
    label_b: str,
    budget_a: int | None = None,
    budget_b: int | None = None,
    iterations: int = 10_000,
    seed: int = 0,
) -> dict:
    budget_a = _only_budget(runset, label_a, budget_a)
    budget_b = _only_budget(runset, label_b, budget_b)
    a = {r.item_id: r.correct for r in runset.cell(label_a, budget_a) if r.ok}
    b = {r.item_id: r.correct for r in runset.cell(label_b, budget_b) if r.ok}
    try:
        pairs = PairedOutcomes.align(a, b)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    doc = {
        "a": {"label": label_a, "budget": budget_a, "accuracy": float(pairs.a.mean()) if len(pairs) else None},
        "b": {"label": label_b, "budget": budget_b, "accuracy": float(pairs.b.mean()) if len(pairs) else None},
        "n": len(pairs),
        "wins_a": pairs.wins_a,
        "wins_b": pairs.wins_b,
        "ties": pairs.ties,
    }
    if pairs.wins_a + pairs.wins_b:
        doc["mcnemar_p"] = mcnemar_exact(pairs.wins_a, pairs.wins_b)
    else:
        doc["mcnemar_p"] = None
        doc["note"] = "no discordant pairs"
    if len(pairs):
        lo, hi = paired_bootstrap_diff(pairs, iterations=iterations, seed=seed)
        doc["delta_pp"] = pairs.mean_diff() * PP
        doc["delta_ci_pp"] = [lo, hi]
    return doc


# ------------------------------------------------------------ diagnostics


def _accuracy_by_budget(runset: RunSet, label: str) -> dict[int, float]:
    out = {}
    for b in runset.budgets(label):
        recs = [r for r in runset.cell(label, b) if r.ok]
        if recs and b is not None:
            out[b] = float(np.mean([r.correct for r in recs]))
    return out


def diagnose(
    runset: RunSet,
    think_label: str,
    nothink_label: str | None = None,
    pilot_size: int | None = None,
    repetitions: int = 20,
    seed: int = 0,
    alpha_extract: float | None = None,
) -> dict:
    """Predicted-vs-observed table for a thinking sweep plus derived reports.

    ``F_L`` comes from a KM fit on the largest-budget thinking cell (the
    least censored one); ``alpha_c`` and ``alpha_t`` are measured per budget.
    """
    budgets = [b for b in runset.budgets(think_label) if b is not None]
    if not budgets:
        raise DataError(f"no budgeted records for thinking label {think_label!r}")
    cells = {b: [r for r in runset.cell(think_label, b) if r.ok] for b in budgets}
    for b, recs in cells.items():
        if not _is_single(recs, "think"):
            raise DataError(f"{think_label}@{b} is not a single-call thinking configuration")
    top = cells[budgets[-1]]
    obs = (
        np.array([r.outcome.stages[0].tokens_generated for r in top]).clip(min=1),
        np.array([not r.outcome.stages[0].stop.natural for r in top]),
    )
    doc: dict = {"think_label": think_label, "rows": []}
    try:
        curve = km_estimate(obs)
        doc["curve"] = {"n_total": curve.n_total, "n_censored": curve.n_censored, "median": _safe_median(curve)}
    except ValueError as exc:
        curve = None
        doc["curve"] = {"error": str(exc)}

    alpha_c: dict[int, float] = {}
    alpha_t: dict[int, float] = {}
    observed: dict[int, float] = {}
    for b in budgets:
        recs = cells[b]
        dec = cell_decomposition(recs, b)
        acc = float(np.mean([r.correct for r in recs]))
        observed[b] = acc
        f_l = curve.cdf_at(b) if curve is not None else None
        row = {
            "budget": b,
            "n": len(recs),
            "f_l": f_l,
            "alpha_c": dec["alpha_c"],
            "alpha_t": dec["alpha_t"],
            "observed": acc,
            "se_pp": math.sqrt(acc * (1 - acc) / len(recs)) * PP,
            "flags": list(dec["flags"]),
        }
        if dec["alpha_c"] is not None:
            alpha_c[b] = dec["alpha_c"]
        if dec["alpha_t"] is not None:
            alpha_t[b] = dec["alpha_t"]
        a_c = dec["alpha_c"] if dec["alpha_c"] is not None else 0.0
        a_t = dec["alpha_t"] if dec["alpha_t"] is not None else 0.0
        if f_l is not None and (dec["alpha_c"] is not None or f_l == 0) and (dec["alpha_t"] is not None or f_l == 1):
            params = _params(f_l, a_c, a_t, None, row["flags"])
            pred = dx.predict_coupled_accuracy(params)
            row["predicted"] = pred
            row["delta_pp"] = (pred - acc) * PP
            row["within_3se"] = abs(row["delta_pp"]) <= 3 * row["se_pp"] + 1e-12
        else:
            row["predicted"] = None
        doc["rows"].append(row)

    if nothink_label is not None:
        doc.update(_nothink_reports(runset, think_label, nothink_label, cells, curve, alpha_extract))

    if pilot_size:
        doc["pilot"] = _pilot_study(top, budgets, alpha_c, alpha_t, observed, pilot_size, repetitions, seed)
    return doc


def _params(f_l, a_c, a_t, acc_nt, flags: list) -> dx.DecompositionParams:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", dx.AssumptionWarning)
        p = dx.DecompositionParams(f_l, a_c, a_t, acc_nt)
    if a_t > a_c:
        flags.append("alpha_t exceeds alpha_c")
    return p


def _safe_median(curve) -> int | None:
    try:
        return curve.median()
    except ValueError:
        return None


def _nothink_reports(runset, think_label, nothink_label, cells, curve, alpha_extract) -> dict:
    out: dict = {"nothink_label": nothink_label}
    nt_acc = _accuracy_by_budget(runset, nothink_label)
    if not nt_acc:
        out["crossover"] = {"error": f"no budgeted records for {nothink_label!r}"}
        return out
    nb = sorted(nt_acc)
    b_sat = dx.saturation_budget(nb, [nt_acc[b] for b in nb])
    acc_nt = nt_acc[b_sat]
    think_budgets = sorted(cells)
    ref = min(think_budgets, key=lambda b: (abs(math.log(b / b_sat)), b))
    dec = cell_decomposition(cells[ref], ref)
    if curve is None or dec["alpha_c"] is None or dec["alpha_t"] is None:
        out["crossover"] = {"error": "components unmeasurable at the reference budget", "b_sat": b_sat}
    else:
        try:
            rep = dx.crossover_budget(curve, acc_nt, dec["alpha_c"], dec["alpha_t"], b_sat=b_sat)
            out["crossover"] = {**rep.to_dict(), "acc_nt": acc_nt, "components_at": ref}
        except ValueError as exc:
            out["crossover"] = {"error": str(exc), "b_sat": b_sat, "acc_nt": acc_nt}

    nt_by_id = {
        b: {r.item_id: r.correct for r in runset.cell(nothink_label, b) if r.ok} for b in nb
    }
    rows = []
    for b in think_budgets:
        if b not in nt_acc:
            continue
        dec = cell_decomposition(cells[b], b)
        if dec["alpha_c"] is None or dec["alpha_t"] is None:
            rows.append({"budget": b, "flags": dec["flags"]})
            continue
        f_l = dec["f_l"]
        flags: list[str] = []
        p = _params(f_l, dec["alpha_c"], dec["alpha_t"], nt_acc[b], flags)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", dx.AssumptionWarning)
            tb = dx.tax_breakdown(p, alpha_extract)
        nat_ids = [r.item_id for r in cells[b] if r.outcome.stages[0].stop.natural]
        tr_ids = [r.item_id for r in cells[b] if not r.outcome.stages[0].stop.natural]
        nt = nt_by_id[b]
        row = {"budget": b, **tb.to_dict(), "flags": flags}
        if all(i in nt for i in nat_ids + tr_ids):
            a_nt_c = float(np.mean([nt[i] for i in nat_ids]))
            a_nt_t = float(np.mean([nt[i] for i in tr_ids]))
            tc, tt = dx.same_subset_decomposition(f_l, a_nt_c, a_nt_t, dec["alpha_c"], dec["alpha_t"])
            row["same_subset"] = {"term_completed": tc, "term_truncated": tt}
        rows.append(row)
    out["tax"] = rows
    return out


def _pilot_study(top, budgets, alpha_c, alpha_t, observed, pilot_size, repetitions, seed) -> dict:
    usable = [b for b in budgets if b in alpha_c and b in alpha_t]
    if not usable:
        return {"error": "no budget has both accuracy components measured"}
    n = len(top)
    if pilot_size > n:
        return {"error": f"pilot size {pilot_size} exceeds the {n} available questions"}
    lengths = np.array([r.outcome.stages[0].tokens_generated for r in top]).clip(min=1)
    cens = np.array([not r.outcome.stages[0].stop.natural for r in top])
    errors = []
    for rep in range(repetitions):
        rng = np.random.default_rng([seed, rep])
        idx = rng.choice(n, size=pilot_size, replace=False)
        if cens[idx].all():
            continue
        pred = dx.pilot_predict_sweep((lengths[idx], cens[idx]), alpha_c, alpha_t, usable)
        errors.append(rmse([p for _, p in pred], [observed[b] for b in usable]) * PP)
    if not errors:
        return {"error": "every pilot draw was fully censored"}
    return {
        "pilot_size": pilot_size,
        "repetitions": len(errors),
        "rmse_mean_pp": float(np.mean(errors)),
        "rmse_std_pp": float(np.std(errors, ddof=1)) if len(errors) > 1 else 0.0,
        "budgets": usable,
    }
