"""Routing policies over a generation backend.

Policies:

* ``single``: one call in one mode at one budget.
* ``town``: nothink probe at ``b1``; on budget exhaustion escalate to coupled
  thinking at ``b2`` and read the answer out of whatever text came back.
* ``iris``: probe as above, then think at ``b_r``; a truncated trace goes to a
  separate nothink extraction pass with its own answer budget ``b_a``.
* ``mrsd``: iris, then up to ``K - 1`` refinement rounds seeded with the
  previous answer, stopping when two consecutive rounds agree.
* ``self_consistency``: ``k`` samples and a vote over answer classes.
* ``gate``: self-consistency when its top class is large enough, else a
  fallback iris run.

Every per-question seed is derived from ``(global seed, question id)`` only,
so all policies see the same probe and the same first chain for a question.
That keeps paired comparisons tight and makes runs independent of execution
order.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import ClassVar, Literal, Protocol

from ._seeding import derive_seed
from .backend.base import Backend, BackendError, GenerationOutcome, GenerationRequest
from .extraction import (
    DEFAULT_STRICT_THRESHOLD,
    FALLBACK_METHODS,
    NO_ANSWER,
    ExtractedAnswer,
    StopSignal,
    answers_equivalent,
    detect_natural_stop,
    extract_answer,
)

Resolution = Literal[
    "single",
    "vote",
    "sc_confident",
    "stage0_accept",
    "think_complete",
    "think_truncated",
    "extracted",
    "refined_converged",
    "majority_fallback",
]

STRENGTHENED_MIN_ANSWER_BUDGET = 512


class Question(Protocol):
    id: str
    question: str
    convention: str


@dataclass(frozen=True)
class QuestionSpec:
    id: str
    question: str = ""
    convention: str = "numeric"
    numeric_gold: bool = True


# ------------------------------------------------------------------ configs


def _positive(name: str, v: int) -> None:
    if v < 1:
        raise ValueError(f"{name} must be >= 1, got {v}")


@dataclass(frozen=True)
class SinglePolicy:
    mode: str
    budget: int
    kind: ClassVar[str] = "single"

    def __post_init__(self) -> None:
        if self.mode not in ("think", "nothink"):
            raise ValueError(f"mode must be think or nothink, got {self.mode!r}")
        _positive("budget", self.budget)

    def with_budget(self, b: int) -> "SinglePolicy":
        return SinglePolicy(self.mode, b)


@dataclass(frozen=True)
class TownPolicy:
    b1: int
    b2: int
    strict_stage0: bool = False
    kind: ClassVar[str] = "town"

    def __post_init__(self) -> None:
        _positive("b1", self.b1)
        _positive("b2", self.b2)

    def with_budget(self, b: int) -> "TownPolicy":
        return TownPolicy(self.b1, b, self.strict_stage0)


@dataclass(frozen=True)
class IrisPolicy:
    b1: int
    b_r: int
    b_a: int
    strengthened: bool = False
    strict_stage0: bool = False
    kind: ClassVar[str] = "iris"

    def __post_init__(self) -> None:
        for name in ("b1", "b_r", "b_a"):
            _positive(name, getattr(self, name))

    @property
    def answer_budget(self) -> int:
        if self.strengthened:
            return max(self.b_a, STRENGTHENED_MIN_ANSWER_BUDGET)
        return self.b_a

    def with_budget(self, b: int) -> "IrisPolicy":
        return IrisPolicy(self.b1, b, self.b_a, self.strengthened, self.strict_stage0)


@dataclass(frozen=True)
class MrsdPolicy:
    b1: int
    b_r: int
    b_a: int
    max_rounds: int = 3
    strict_stage0: bool = False
    kind: ClassVar[str] = "mrsd"

    def __post_init__(self) -> None:
        for name in ("b1", "b_r", "b_a", "max_rounds"):
            _positive(name, getattr(self, name))

    @property
    def b_max(self) -> int:
        return self.b1 + self.max_rounds * (self.b_r + self.b_a)

    def with_budget(self, b: int) -> "MrsdPolicy":
        return MrsdPolicy(self.b1, b, self.b_a, self.max_rounds, self.strict_stage0)


@dataclass(frozen=True)
class SelfConsistencyPolicy:
    k: int
    mode: str
    budget: int
    seed_base: int = 0
    kind: ClassVar[str] = "self_consistency"

    def __post_init__(self) -> None:
        _positive("k", self.k)
        _positive("budget", self.budget)
        if self.mode not in ("think", "nothink"):
            raise ValueError(f"mode must be think or nothink, got {self.mode!r}")

    def with_budget(self, b: int) -> "SelfConsistencyPolicy":
        return SelfConsistencyPolicy(self.k, self.mode, b, self.seed_base)


@dataclass(frozen=True)
class GatePolicy:
    sc: SelfConsistencyPolicy
    fallback: IrisPolicy
    min_votes: int = 3
    kind: ClassVar[str] = "gate"

    def __post_init__(self) -> None:
        _positive("min_votes", self.min_votes)

    def with_budget(self, b: int) -> "GatePolicy":
        return GatePolicy(self.sc, self.fallback.with_budget(b), self.min_votes)


PolicyConfig = SinglePolicy | TownPolicy | IrisPolicy | MrsdPolicy | SelfConsistencyPolicy | GatePolicy
_POLICY_KINDS = {
    cls.kind: cls
    for cls in (SinglePolicy, TownPolicy, IrisPolicy, MrsdPolicy, SelfConsistencyPolicy, GatePolicy)
}


def policy_to_dict(p: PolicyConfig) -> dict:
    if isinstance(p, GatePolicy):
        return {
            "kind": "gate",
            "sc": policy_to_dict(p.sc),
            "fallback": policy_to_dict(p.fallback),
            "min_votes": p.min_votes,
        }
    return {"kind": p.kind, **asdict(p)}


def policy_from_dict(d: dict) -> PolicyConfig:
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in _POLICY_KINDS:
        raise ValueError(f"unknown policy kind {kind!r}; expected one of {sorted(_POLICY_KINDS)}")
    if kind == "gate":
        sc = policy_from_dict({"kind": "self_consistency", **d.pop("sc")})
        fb = policy_from_dict({"kind": "iris", **d.pop("fallback")})
        return GatePolicy(sc, fb, **d)
    cls = _POLICY_KINDS[kind]
    known = {f.name for f in fields(cls)}
    extra = set(d) - known
    if extra:
        raise ValueError(f"unknown fields for {kind}: {sorted(extra)}")
    return cls(**d)


# ----------------------------------------------------------------- outcomes


@dataclass(frozen=True)
class StageRecord:
    name: str
    mode: str
    budget: int
    tokens_generated: int
    prefill_tokens: int
    stop: StopSignal
    answer: ExtractedAnswer
    text: str
    branch: str = "main"

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "mode": self.mode,
            "budget": self.budget,
            "tokens_generated": self.tokens_generated,
            "prefill_tokens": self.prefill_tokens,
            "stop": self.stop.to_dict(),
            "answer": self.answer.to_dict(),
            "text": self.text,
            "branch": self.branch,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StageRecord":
        return cls(
            name=d["name"],
            mode=d["mode"],
            budget=d["budget"],
            tokens_generated=d["tokens_generated"],
            prefill_tokens=d["prefill_tokens"],
            stop=StopSignal.from_dict(d["stop"]),
            answer=ExtractedAnswer.from_dict(d["answer"]),
            text=d["text"],
            branch=d.get("branch", "main"),
        )


@dataclass(frozen=True)
class PolicyOutcome:
    final_answer: ExtractedAnswer
    stages: tuple[StageRecord, ...]
    resolution: str
    rounds_used: int = 0
    converged: bool = False
    top_votes: int | None = None
    tokens_generated_total: int = field(init=False)
    tokens_effective_total: int = field(init=False)

    def __post_init__(self) -> None:
        gen = sum(s.tokens_generated for s in self.stages)
        pre = sum(s.prefill_tokens for s in self.stages)
        object.__setattr__(self, "stages", tuple(self.stages))
        object.__setattr__(self, "tokens_generated_total", gen)
        object.__setattr__(self, "tokens_effective_total", gen + pre)

    @property
    def primary_stage(self) -> StageRecord:
        """The stage whose stop signal describes the run (the first call)."""
        return self.stages[0]

    def to_dict(self) -> dict:
        return {
            "final_answer": self.final_answer.to_dict(),
            "stages": [s.to_dict() for s in self.stages],
            "resolution": self.resolution,
            "rounds_used": self.rounds_used,
            "converged": self.converged,
            "top_votes": self.top_votes,
            "tokens_generated_total": self.tokens_generated_total,
            "tokens_effective_total": self.tokens_effective_total,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PolicyOutcome":
        out = cls(
            final_answer=ExtractedAnswer.from_dict(d["final_answer"]),
            stages=tuple(StageRecord.from_dict(s) for s in d["stages"]),
            resolution=d["resolution"],
            rounds_used=d.get("rounds_used", 0),
            converged=d.get("converged", False),
            top_votes=d.get("top_votes"),
        )
        for key in ("tokens_generated_total", "tokens_effective_total"):
            if key in d and d[key] != getattr(out, key):
                raise ValueError(f"stored {key}={d[key]} disagrees with stage sum {getattr(out, key)}")
        return out


# --------------------------------------------------------------------- votes


def vote(answers: list[ExtractedAnswer], prefer: Literal["earliest", "latest"] = "earliest") -> tuple[ExtractedAnswer, int]:
    """Plurality vote over equivalence classes; answers without a value abstain.

    Returns the representative of the winning class (its first member for
    ``earliest``, its last for ``latest``) and the class size. Ties go to
    the class whose first member appeared first, or whose last member
    appeared last.
    """
    classes: list[list[int]] = []
    for i, a in enumerate(answers):
        if not a.found:
            continue
        for members in classes:
            if answers_equivalent(answers[members[0]].value, a.value):
                members.append(i)
                break
        else:
            classes.append([i])
    if not classes:
        return NO_ANSWER, 0
    if prefer == "earliest":
        best = max(classes, key=lambda m: (len(m), -m[0]))
        return answers[best[0]], len(best)
    best = max(classes, key=lambda m: (len(m), m[-1]))
    return answers[best[-1]], len(best)


# ------------------------------------------------------------------ runner


class Orchestrator:
    """Runs policies for single questions against one backend."""

    def __init__(self, backend: Backend, seed: int = 0, strict_threshold: float = DEFAULT_STRICT_THRESHOLD):
        self.backend = backend
        self.seed = seed
        self.strict_threshold = strict_threshold

    def base_seed(self, qid: str) -> int:
        return derive_seed(self.seed, qid)

    # one backend call, recorded as a stage
    def _call(
        self,
        q: Question,
        name: str,
        mode: str,
        budget: int,
        seed: int,
        trace: StageRecord | None = None,
        hint: str | None = None,
        branch: str = "main",
    ) -> StageRecord:
        req = GenerationRequest(
            question_id=q.id,
            question=q.question,
            mode=mode,
            max_new_tokens=budget,
            seed=seed,
            trace=trace.text if trace is not None else None,
            trace_tokens=trace.tokens_generated if trace is not None else 0,
            hint=hint,
        )
        try:
            out: GenerationOutcome = self.backend.generate(req)
        except BackendError as exc:
            raise exc.with_question(q.id)
        stop = detect_natural_stop(out.tokens_generated, budget, self.strict_threshold, out.text)
        answer = extract_answer(out.text, q.convention, getattr(q, "numeric_gold", True))
        return StageRecord(name, mode, budget, out.tokens_generated, out.prefill_tokens, stop, answer, out.text, branch)

    def _accepts(self, stage: StageRecord, strict: bool) -> bool:
        return stage.stop.strict if strict else stage.stop.natural

    # policies ---------------------------------------------------------------

    def run(self, q: Question, policy: PolicyConfig) -> PolicyOutcome:
        if isinstance(policy, SinglePolicy):
            return self.run_single(q, policy.mode, policy.budget)
        if isinstance(policy, TownPolicy):
            return self.run_town(q, policy.b1, policy.b2, policy.strict_stage0)
        if isinstance(policy, IrisPolicy):
            return self.run_iris(q, policy.b1, policy.b_r, policy.b_a, policy.strengthened, policy.strict_stage0)
        if isinstance(policy, MrsdPolicy):
            return self.run_mrsd(q, policy.b1, policy.b_r, policy.b_a, policy.max_rounds, policy.strict_stage0)
        if isinstance(policy, SelfConsistencyPolicy):
            return self.run_self_consistency(q, policy.k, policy.mode, policy.budget, policy.seed_base)
        if isinstance(policy, GatePolicy):
            return self.run_gate(q, policy)
        raise TypeError(f"not a policy config: {policy!r}")

    def run_single(self, q: Question, mode: str, budget: int) -> PolicyOutcome:
        s = self._call(q, mode, mode, budget, self.base_seed(q.id))
        return PolicyOutcome(s.answer, (s,), "single")

    def run_town(self, q: Question, b1: int, b2: int, strict_stage0: bool = False) -> PolicyOutcome:
        base = self.base_seed(q.id)
        probe = self._call(q, "probe", "nothink", b1, base)
        if self._accepts(probe, strict_stage0):
            return PolicyOutcome(probe.answer, (probe,), "stage0_accept")
        think = self._call(q, "think", "think", b2, base)
        res = "think_complete" if think.stop.natural else "think_truncated"
        return PolicyOutcome(think.answer, (probe, think), res)

    def _think_then_extract(
        self,
        q: Question,
        b_r: int,
        b_a: int,
        seed: int,
        suffix: str = "",
        hint: str | None = None,
        retry: bool = False,
        branch: str = "main",
    ) -> tuple[list[StageRecord], ExtractedAnswer, str]:
        think = self._call(q, "think" + suffix, "think", b_r, seed, hint=hint, branch=branch)
        if think.stop.natural:
            return [think], think.answer, "think_complete"
        ext = self._call(q, "extract" + suffix, "nothink", b_a, seed, trace=think, hint=hint, branch=branch)
        stages = [think, ext]
        answer = ext.answer
        if retry and answer.method in FALLBACK_METHODS:
            again = self._call(
                q, "extract_retry" + suffix, "nothink", b_a, derive_seed(seed, "retry"),
                trace=think, hint=hint, branch=branch,
            )
            stages.append(again)
            if again.answer.method not in FALLBACK_METHODS or not answer.found:
                answer = again.answer
        return stages, answer, "extracted"

    def run_iris(
        self,
        q: Question,
        b1: int,
        b_r: int,
        b_a: int,
        strengthened: bool = False,
        strict_stage0: bool = False,
        branch: str = "main",
    ) -> PolicyOutcome:
        base = self.base_seed(q.id)
        probe = self._call(q, "probe", "nothink", b1, base, branch=branch)
        if self._accepts(probe, strict_stage0):
            return PolicyOutcome(probe.answer, (probe,), "stage0_accept")
        if strengthened:
            b_a = max(b_a, STRENGTHENED_MIN_ANSWER_BUDGET)
        stages, answer, res = self._think_then_extract(q, b_r, b_a, base, retry=strengthened, branch=branch)
        return PolicyOutcome(answer, (probe, *stages), res, rounds_used=1)

    def run_mrsd(
        self, q: Question, b1: int, b_r: int, b_a: int, max_rounds: int = 3, strict_stage0: bool = False
    ) -> PolicyOutcome:
        if max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        base = self.base_seed(q.id)
        probe = self._call(q, "probe", "nothink", b1, base)
        if self._accepts(probe, strict_stage0):
            return PolicyOutcome(probe.answer, (probe,), "stage0_accept", rounds_used=0)
        stages = [probe]
        st, answer, first_res = self._think_then_extract(q, b_r, b_a, base, suffix="_r1")
        stages += st
        answers = [answer]
        if max_rounds == 1:
            return PolicyOutcome(answer, tuple(stages), first_res, rounds_used=1)
        for k in range(2, max_rounds + 1):
            hint = answers[-1].value
            st, answer, _ = self._think_then_extract(
                q, b_r, b_a, derive_seed(base, "round", k), suffix=f"_r{k}", hint=hint
            )
            stages += st
            answers.append(answer)
            if answers[-2].found and answers_equivalent(answers[-2].value, answer.value):
                return PolicyOutcome(answer, tuple(stages), "refined_converged", rounds_used=k, converged=True)
        final, _ = vote(answers, prefer="latest")
        return PolicyOutcome(final, tuple(stages), "majority_fallback", rounds_used=max_rounds)

    def sc_seed(self, qid: str, seed_base: int, j: int) -> int:
        # sample 0 of the default stream reuses the base seed so SC@1 == single
        if seed_base == 0 and j == 0:
            return self.base_seed(qid)
        return derive_seed(self.base_seed(qid), "sc", seed_base, j)

    def run_self_consistency(
        self, q: Question, k: int, mode: str, budget: int, seed_base: int = 0, branch: str = "main"
    ) -> PolicyOutcome:
        if k < 1:
            raise ValueError("k must be >= 1")
        stages = tuple(
            self._call(q, f"sample_{j}", mode, budget, self.sc_seed(q.id, seed_base, j), branch=branch)
            for j in range(k)
        )
        final, top = vote([s.answer for s in stages], prefer="earliest")
        return PolicyOutcome(final, stages, "vote", top_votes=top)

    def run_gate(self, q: Question, gate: GatePolicy) -> PolicyOutcome:
        sc = gate.sc
        sc_out = self.run_self_consistency(q, sc.k, sc.mode, sc.budget, sc.seed_base, branch="sc")
        if sc_out.top_votes >= gate.min_votes:
            return PolicyOutcome(sc_out.final_answer, sc_out.stages, "sc_confident", top_votes=sc_out.top_votes)
        fb = gate.fallback
        fb_out = self.run_iris(q, fb.b1, fb.b_r, fb.b_a, fb.strengthened, fb.strict_stage0, branch="fallback")
        return PolicyOutcome(
            fb_out.final_answer,
            sc_out.stages + fb_out.stages,
            fb_out.resolution,
            rounds_used=fb_out.rounds_used,
            top_votes=sc_out.top_votes,
        )


# module-level conveniences --------------------------------------------------


def _q(question) -> Question:
    if isinstance(question, str):
        return QuestionSpec(id=question)
    return question


def run_single(question, mode: str, budget: int, backend: Backend, seed: int = 0) -> PolicyOutcome:
    return Orchestrator(backend, seed).run_single(_q(question), mode, budget)


def run_town(question, b1: int, b2: int, backend: Backend, seed: int = 0) -> PolicyOutcome:
    return Orchestrator(backend, seed).run_town(_q(question), b1, b2)


def run_iris(question, b1: int, b_r: int, b_a: int, strengthened: bool, backend: Backend, seed: int = 0) -> PolicyOutcome:
    return Orchestrator(backend, seed).run_iris(_q(question), b1, b_r, b_a, strengthened)


def run_mrsd(question, b1: int, b_r: int, b_a: int, K: int, backend: Backend, seed: int = 0) -> PolicyOutcome:
    return Orchestrator(backend, seed).run_mrsd(_q(question), b1, b_r, b_a, K)


def run_self_consistency(
    question, k: int, mode: str, budget: int, seed_base: int, backend: Backend, seed: int = 0
) -> PolicyOutcome:
    return Orchestrator(backend, seed).run_self_consistency(_q(question), k, mode, budget, seed_base)


def run_gate(question, gate_config: GatePolicy, backend: Backend, seed: int = 0) -> PolicyOutcome:
    return Orchestrator(backend, seed).run_gate(_q(question), gate_config)


def run_policy(question, policy: PolicyConfig, backend: Backend, seed: int = 0) -> PolicyOutcome:
    return Orchestrator(backend, seed).run(_q(question), policy)


__all__ = [
    "GatePolicy",
    "IrisPolicy",
    "MrsdPolicy",
    "Orchestrator",
    "PolicyConfig",
    "PolicyOutcome",
    "QuestionSpec",
    "SelfConsistencyPolicy",
    "SinglePolicy",
    "StageRecord",
    "TownPolicy",
    "policy_from_dict",
    "policy_to_dict",
    "run_gate",
    "run_iris",
    "run_mrsd",
    "run_policy",
    "run_self_consistency",
    "run_single",
    "run_town",
    "vote",
]

