"""Routing policies on a simulated population.

Compares nothink, coupled thinking, TOWN, IRIS and MRSD on the simulated
8B-like model. Every policy sees the same questions with the same per-question
randomness, so the differences are paired.

    python3 demos/02_cascades.py [n]
"""

import sys

from thinktax.backend import SimulatedBackend
from thinktax.harness.records import score
from thinktax.orchestrator import IrisPolicy, MrsdPolicy, Orchestrator, QuestionSpec, SinglePolicy, TownPolicy
from thinktax.presets import gsm8k_8b_config

n = int(sys.argv[1]) if len(sys.argv) > 1 else 1000
backend = SimulatedBackend(gsm8k_8b_config(), seed=1)
orch = Orchestrator(backend, seed=7)
questions = [QuestionSpec(f"q{i}") for i in range(n)]

policies = {
    "nothink@256": SinglePolicy("nothink", 256),
    "think@512": SinglePolicy("think", 512),
    "TOWN 256->512": TownPolicy(256, 512),
    "IRIS 256/512+128": IrisPolicy(256, 512, 128),
    "MRSD 256/512+128 x3": MrsdPolicy(256, 512, 128, 3),
}

print(f"{'policy':<22}{'accuracy':>9}{'mean tokens':>13}")
for name, policy in policies.items():
    outs = [orch.run(q, policy) for q in questions]
    acc = sum(score(o, backend.question(q.id)[2]) for o, q in zip(outs, questions)) / n
    tokens = sum(o.tokens_generated_total for o in outs) / n
    print(f"{name:<22}{acc:>9.1%}{tokens:>13.0f}")
