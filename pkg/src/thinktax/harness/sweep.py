"""Resumable (policy, budget, item) sweeps."""

from __future__ import annotations

import hashlib
import json
import sys
import time
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

from ..backend.base import Backend, BackendError
from ..backend.remote import EndpointConfig, RemoteBackend
from ..backend.simulator import LengthLaw, SimModelConfig, SimulatedBackend
from ..orchestrator import Orchestrator, PolicyConfig, policy_from_dict, policy_to_dict
from ..presets import PRESETS
from .dataset import DataError, DatasetItem, load_dataset, synthetic_dataset
from .records import Checkpoint, RunRecord, RunSet

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass(frozen=True)
class PolicyEntry:
    label: str
    policy: PolicyConfig
    budgets: tuple[int, ...] | None = None

    def to_dict(self) -> dict:
        d = {"label": self.label, "policy": policy_to_dict(self.policy)}
        if self.budgets is not None:
            d["budgets"] = list(self.budgets)
        return d


@dataclass(frozen=True)
class SweepSpec:
    """What to run. ``budgets`` is the default grid; an entry may carry its own.

    An empty grid runs each policy once as configured. ``dataset`` is a JSONL
    path, or None together with ``synthetic_n`` for simulated questions.
    """

    policies: tuple[PolicyEntry, ...]
    backend: Mapping
    dataset: str | None = None
    synthetic_n: int = 0
    budgets: tuple[int, ...] = ()
    seed: int = 0
    checkpoint: str | None = None
    parallelism: int = 4
    start: int | None = None
    stop: int | None = None

    def __post_init__(self) -> None:
        labels = [p.label for p in self.policies]
        if len(set(labels)) != len(labels):
            raise DataError(f"policy labels must be unique: {labels}")
        for grid in [self.budgets] + [p.budgets or () for p in self.policies]:
            if any(b2 <= b1 for b1, b2 in zip(grid, grid[1:])):
                raise DataError(f"budget grid must be strictly increasing: {list(grid)}")
        if self.parallelism < 1:
            raise DataError("parallelism must be >= 1")
        if self.dataset is None and self.synthetic_n < 0:
            raise DataError("synthetic_n must be >= 0")

    def cells(self) -> list[tuple[str, int | None, PolicyConfig]]:
        out = []
        for entry in self.policies:
            grid = entry.budgets if entry.budgets is not None else self.budgets
            if not grid:
                out.append((entry.label, None, entry.policy))
            for b in grid:
                out.append((entry.label, b, entry.policy.with_budget(b)))
        return out

    def to_dict(self) -> dict:
        return {
            "policies": [p.to_dict() for p in self.policies],
            "backend": json.loads(json.dumps(self.backend)),
            "dataset": self.dataset,
            "synthetic_n": self.synthetic_n,
            "budgets": list(self.budgets),
            "seed": self.seed,
            "checkpoint": self.checkpoint,
            "parallelism": self.parallelism,
            "start": self.start,
            "stop": self.stop,
        }

    def spec_hash(self) -> str:
        """Hash of everything that affects results (not paths or parallelism)."""
        d = self.to_dict()
        for k in ("checkpoint", "parallelism"):
            d.pop(k)
        if self.dataset is not None:
            d["dataset"] = hashlib.sha256(Path(self.dataset).read_bytes()).hexdigest()
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: Mapping, base_dir: Path | None = None) -> "SweepSpec":
        try:
            entries = tuple(
                PolicyEntry(
                    label=e["label"],
                    policy=policy_from_dict(e["policy"]),
                    budgets=tuple(e["budgets"]) if e.get("budgets") is not None else None,
                )
                for e in d["policies"]
            )
            dataset = d.get("dataset")
            checkpoint = d.get("checkpoint")
            if base_dir is not None:
                if dataset and not Path(dataset).is_absolute():
                    dataset = str(base_dir / dataset)
                if checkpoint and not Path(checkpoint).is_absolute():
                    checkpoint = str(base_dir / checkpoint)
            return cls(
                policies=entries,
                backend=d["backend"],
                dataset=dataset,
                synthetic_n=d.get("synthetic_n", 0),
                budgets=tuple(d.get("budgets", ())),
                seed=d.get("seed", 0),
                checkpoint=checkpoint,
                parallelism=d.get("parallelism", 4),
                start=d.get("start"),
                stop=d.get("stop"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DataError):
                raise
            raise DataError(f"invalid sweep spec: {exc}") from exc

    @classmethod
    def from_file(cls, path: str | Path) -> "SweepSpec":
        return cls.from_dict(load_config(path), base_dir=Path(path).resolve().parent)


def load_config(path: str | Path) -> dict:
    """Read a JSON or TOML document (chosen by file extension)."""
    p = Path(path)
    try:
        if p.suffix.lower() == ".toml":
            with open(p, "rb") as fh:
                return tomllib.load(fh)
        return json.loads(p.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise DataError(f"{p}: cannot parse config ({exc})") from exc


def sim_config_from(d: Mapping | str) -> SimModelConfig:
    if isinstance(d, str):
        if d not in PRESETS:
            raise DataError(f"unknown preset {d!r}; known: {sorted(PRESETS)}")
        return PRESETS[d]()
    if "preset" in d:
        return _apply_overrides(sim_config_from(d["preset"]), d.get("overrides", {}))
    return SimModelConfig.from_dict(d)


def _apply_overrides(cfg: SimModelConfig, overrides: Mapping) -> SimModelConfig:
    changes = dict(overrides)
    for k in ("chain_length_law", "nothink_length_law"):
        if isinstance(changes.get(k), Mapping):
            changes[k] = LengthLaw.from_dict(changes[k])
    try:
        return cfg.with_(**changes) if changes else cfg
    except TypeError as exc:
        raise DataError(f"bad simulator override: {exc}") from exc


def build_backend(d: Mapping, items: Sequence[DatasetItem] | None = None) -> Backend:
    """Backend from a spec document.

    ``{"kind": "simulator", "preset" | "config" | "mixture": ..., "seed": int}``
    or ``{"kind": "remote", "endpoint": {...}}``.
    """
    kind = d.get("kind", "simulator")
    if kind == "remote":
        return RemoteBackend(EndpointConfig.from_dict(d["endpoint"]))
    if kind != "simulator":
        raise DataError(f"unknown backend kind {kind!r}")
    if "mixture" in d:
        model = [(w, sim_config_from(c)) for w, c in d["mixture"]]
    elif "config" in d:
        model = sim_config_from(d["config"])
    else:
        model = _apply_overrides(sim_config_from(d.get("preset", "gsm8k-8b")), d.get("overrides", {}))
    answer_key = None
    if items and any(it.gold for it in items):
        answer_key = {it.id: it.gold for it in items}
    return SimulatedBackend(model, seed=d.get("seed", 0), answer_key=answer_key, max_in_flight=d.get("max_in_flight", 64))


def resolve_items(spec: SweepSpec, backend: Backend | None = None) -> list[DatasetItem]:
    if spec.dataset is not None:
        return load_dataset(spec.dataset, start=spec.start, stop=spec.stop)
    return synthetic_dataset(spec.synthetic_n, backend)[spec.start : spec.stop]


def run_sweep(
    spec: SweepSpec,
    backend: Backend | None = None,
    items: Sequence[DatasetItem] | None = None,
    stop_after: int | None = None,
    progress: Callable[[int, int], None] | None = None,
) -> RunSet:
    """Execute every pending cell, appending each record to the checkpoint.

    Cells already completed in the checkpoint are skipped, so a killed sweep
    picks up where it stopped. ``stop_after`` ends the run after that many
    new completions, which is how interruption is exercised in tests.
    """
    if items is None:
        if spec.dataset is None:
            backend = backend or build_backend(spec.backend)
        items = resolve_items(spec, backend)
    if backend is None:
        backend = build_backend(spec.backend, items)

    ckpt = Checkpoint(spec.checkpoint) if spec.checkpoint else None
    runset = RunSet()
    if ckpt is not None:
        ckpt.open(spec.spec_hash(), spec.to_dict())
        runset = ckpt.load()

    orch = Orchestrator(backend, seed=spec.seed)
    pending = [
        (label, budget, policy, item)
        for label, budget, policy in spec.cells()
        for item in items
        if not runset.done((label, budget, item.id))
    ]
    if not pending:
        return runset

    def work(cell) -> RunRecord:
        label, budget, policy, item = cell
        t0 = time.perf_counter()
        try:
            outcome = orch.run(item, policy)
        except BackendError as exc:
            return RunRecord.failed(item.id, label, budget, item.gold, exc.with_question(item.id), item.convention)
        return RunRecord.scored(
            item.id, label, budget, item.gold, outcome, time.perf_counter() - t0, item.convention
        )

    workers = min(spec.parallelism, getattr(backend, "max_in_flight", spec.parallelism))
    completed = 0
    limit = len(pending) if stop_after is None else min(stop_after, len(pending))
    queue = iter(pending)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        running = set()

        def top_up():
            while len(running) < 2 * workers and completed + len(running) < limit:
                cell = next(queue, None)
                if cell is None:
                    return
                running.add(pool.submit(work, cell))

        top_up()
        while running:
            done, _ = wait(running, return_when=FIRST_COMPLETED)
            for fut in done:
                running.discard(fut)
                rec = fut.result()
                if ckpt is not None:
                    ckpt.append(rec)
                runset.add(rec)
                completed += 1
                if progress is not None:
                    progress(completed, len(pending))
            top_up()
    runset.complete = completed == len(pending)
    return runset
