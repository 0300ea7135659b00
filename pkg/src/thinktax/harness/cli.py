"""Command-line entry point: ``thinktax <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 backend failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .. import diagnostics as dx
from ..backend.base import BackendError
from ..backend.simulator import SimulatedBackend
from ..orchestrator import policy_from_dict
from ..stats import hoeffding_lower, mcnemar_exact, wilson_ci
from .dataset import DataError, synthetic_dataset
from .records import load_runset
from .report import diagnose, paired_compare, summarize, to_csv, to_json, to_text
from .sweep import PolicyEntry, SweepSpec, load_config, run_sweep, sim_config_from

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_BACKEND = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _json_arg(text: str):
    """Inline JSON, or a path to a JSON/TOML file."""
    p = Path(text)
    if p.exists():
        return load_config(p)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"not a file or valid JSON: {text!r}") from exc


def _emit(doc: dict, out_dir: str | None, stem: str, text: str | None = None, csv: str | None = None) -> None:
    if text is not None:
        sys.stdout.write(text)
    else:
        sys.stdout.write(to_json(doc))
    if out_dir:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        (d / f"{stem}.json").write_text(to_json(doc))
        if csv is not None:
            (d / f"{stem}.csv").write_text(csv)
        if text is not None:
            (d / f"{stem}.txt").write_text(text)


def _report_sweep(runset, out_dir) -> int:
    summary = summarize(runset)
    _emit(summary, out_dir, "summary", text=to_text(summary), csv=to_csv(summary))
    if summary["errors"]:
        # retryable failures are retried on the next invocation, but the run is still incomplete
        kinds = sorted({e["kind"] for e in summary["errors"]})
        print(f"{len(summary['errors'])} cell(s) failed ({', '.join(kinds)})", file=sys.stderr)
        return EXIT_BACKEND
    return EXIT_OK


def cmd_sweep(args) -> int:
    spec = SweepSpec.from_file(args.spec)
    overrides = {}
    if args.checkpoint:
        overrides["checkpoint"] = args.checkpoint
    if args.parallelism:
        overrides["parallelism"] = args.parallelism
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        spec = SweepSpec(**{**spec.__dict__, **overrides})
    runset = run_sweep(spec)
    return _report_sweep(runset, args.out)


def cmd_run(args) -> int:
    policy = policy_from_dict(_json_arg(args.policy))
    backend_doc = _json_arg(args.backend) if args.backend else {"kind": "simulator", "preset": args.preset}
    spec = SweepSpec(
        policies=(PolicyEntry(args.label, policy),),
        backend=backend_doc,
        dataset=args.dataset,
        synthetic_n=args.n,
        seed=args.seed or 0,
        checkpoint=args.checkpoint,
        parallelism=args.parallelism or 4,
        start=args.start,
        stop=args.stop,
    )
    return _report_sweep(run_sweep(spec), args.out)


def cmd_diagnose(args) -> int:
    runset = load_runset(args.runset)
    if not len(runset):
        raise DataError(f"{args.runset}: no records")
    doc = diagnose(
        runset,
        args.think_label,
        nothink_label=args.nothink_label,
        pilot_size=args.pilot_size,
        repetitions=args.repetitions,
        seed=args.seed or 0,
        alpha_extract=args.alpha_extract,
    )
    _emit(doc, args.out, "diagnostics")
    return EXIT_OK


def cmd_compare(args) -> int:
    runset = load_runset(args.runset)
    doc = paired_compare(runset, args.label_a, args.label_b, args.budget_a, args.budget_b, args.iterations, args.seed or 0)
    _emit(doc, args.out, "compare")
    return EXIT_OK


def cmd_simulate(args) -> int:
    """Monte Carlo check of the decomposition identity for one simulator config."""
    cfg_doc = args.config
    if Path(cfg_doc).exists():
        cfg = sim_config_from(load_config(cfg_doc))
    else:
        cfg = sim_config_from(cfg_doc)
    backend = SimulatedBackend(cfg, seed=args.seed or 0)
    items = synthetic_dataset(args.n, backend)
    entries = (PolicyEntry("think", policy_from_dict({"kind": "single", "mode": "think", "budget": 1})),)
    spec = SweepSpec(policies=entries, backend={"kind": "simulator"}, budgets=tuple(args.budgets), seed=args.seed or 0,
                     parallelism=args.parallelism or 4)
    runset = run_sweep(spec, backend=backend, items=items)
    doc = diagnose(runset, "think")
    doc["configured"] = {"alpha_c": cfg.alpha_c, "alpha_t": cfg.alpha_t_base, "pi_eta": cfg.pi_eta}
    _emit(doc, args.out, "simulate")
    return EXIT_OK


def cmd_stats(args) -> int:
    if args.test == "wilson":
        lo, hi = wilson_ci(args.k, args.n, args.confidence)
        doc = {"test": "wilson", "k": args.k, "n": args.n, "confidence": args.confidence, "lo": lo, "hi": hi}
    elif args.test == "mcnemar":
        doc = {"test": "mcnemar", "wins_a": args.wins_a, "wins_b": args.wins_b, "p": mcnemar_exact(args.wins_a, args.wins_b)}
    elif args.test == "hoeffding":
        doc = {
            "test": "hoeffding",
            "p_hat": args.p_hat,
            "n": args.n,
            "delta": args.delta,
            "lower": hoeffding_lower(args.p_hat, args.n, args.delta),
        }
    else:
        p = dx.DecompositionParams(args.f_l, args.alpha_c, args.alpha_t, args.acc_nt)
        doc = {"test": "decompose", **p.to_dict(), "predicted": dx.predict_coupled_accuracy(p)}
        if args.acc_nt is not None:
            doc.update(dx.two_source_decomposition(p).to_dict())
    sys.stdout.write(to_json(doc))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="thinktax", description="Budgeted reasoning sweeps, cascades and diagnostics.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, seed=True):
        p.add_argument("--out", help="directory for JSON/CSV/text reports")
        if seed:
            p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("sweep", help="run a sweep spec (JSON or TOML)")
    p.add_argument("spec")
    p.add_argument("--checkpoint")
    p.add_argument("--parallelism", type=int)
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("run", help="run one policy over a dataset")
    p.add_argument("--policy", required=True, help="policy JSON or file")
    p.add_argument("--label", default="policy")
    p.add_argument("--dataset", help="JSONL dataset; omit for simulated questions")
    p.add_argument("--n", type=int, default=100, help="simulated question count without a dataset")
    p.add_argument("--backend", help="backend JSON or file")
    p.add_argument("--preset", default="gsm8k-8b", help="simulator preset when --backend is absent")
    p.add_argument("--checkpoint")
    p.add_argument("--parallelism", type=int)
    p.add_argument("--start", type=int)
    p.add_argument("--stop", type=int)
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("diagnose", help="decomposition diagnostics for a checkpointed runset")
    p.add_argument("runset")
    p.add_argument("--think-label", required=True)
    p.add_argument("--nothink-label")
    p.add_argument("--pilot-size", type=int)
    p.add_argument("--repetitions", type=int, default=20)
    p.add_argument("--alpha-extract", type=float)
    common(p)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("compare", help="paired comparison of two labels")
    p.add_argument("runset")
    p.add_argument("label_a")
    p.add_argument("label_b")
    p.add_argument("--budget-a", type=int)
    p.add_argument("--budget-b", type=int)
    p.add_argument("--iterations", type=int, default=10_000)
    common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("simulate", help="Monte Carlo decomposition check for a simulator config")
    p.add_argument("config", help="config file or preset name")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--budgets", type=int, nargs="+", default=[256, 512, 1024, 2048])
    p.add_argument("--parallelism", type=int)
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("stats", help="ad-hoc interval and test calculator")
    tests = p.add_subparsers(dest="test", required=True, parser_class=_Parser)
    t = tests.add_parser("wilson")
    t.add_argument("k", type=int)
    t.add_argument("n", type=int)
    t.add_argument("--confidence", type=float, default=0.95)
    t = tests.add_parser("mcnemar")
    t.add_argument("wins_a", type=int)
    t.add_argument("wins_b", type=int)
    t = tests.add_parser("hoeffding")
    t.add_argument("p_hat", type=float)
    t.add_argument("n", type=int)
    t.add_argument("delta", type=float)
    t = tests.add_parser("decompose")
    t.add_argument("f_l", type=float)
    t.add_argument("alpha_c", type=float)
    t.add_argument("alpha_t", type=float)
    t.add_argument("--acc-nt", type=float)
    p.set_defaults(func=cmd_stats)
    return ap


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"thinktax: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BackendError as exc:
        print(f"thinktax: backend failure: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (DataError, FileNotFoundError) as exc:
        print(f"thinktax: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"thinktax: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
