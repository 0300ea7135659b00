"""A checkpointed sweep that survives being killed.

Runs part of a budget sweep, stops it, resumes from the JSONL checkpoint and
then fits the decomposition to the finished runset.

    python3 demos/03_resumable_sweep.py
"""

import json
import tempfile
from pathlib import Path

from thinktax.harness import PolicyEntry, SweepSpec, diagnose, run_sweep, summarize, to_text
from thinktax.orchestrator import SinglePolicy

with tempfile.TemporaryDirectory() as tmp:
    spec = SweepSpec(
        policies=(
            PolicyEntry("think", SinglePolicy("think", 1), (256, 512, 1024, 2048)),
            PolicyEntry("nothink", SinglePolicy("nothink", 1), (128, 256, 512)),
        ),
        backend={"kind": "simulator", "preset": "gsm8k-8b", "seed": 3},
        synthetic_n=400,
        seed=3,
        checkpoint=str(Path(tmp) / "sweep.jsonl"),
        parallelism=8,
    )

    partial = run_sweep(spec, stop_after=1200)
    print(f"interrupted after {len(partial)} of 2800 cells")

    finished = run_sweep(spec)
    print(f"resumed; complete={finished.complete}, {len(finished)} cells on disk\n")

    print(to_text(summarize(finished)))
    doc = diagnose(finished, "think", nothink_label="nothink")
    print("budget  predicted  observed")
    for row in doc["rows"]:
        print(f"{row['budget']:>6}  {row['predicted']:9.1%}  {row['observed']:8.1%}")
    print("\ncrossover:", json.dumps(doc["crossover"]))
