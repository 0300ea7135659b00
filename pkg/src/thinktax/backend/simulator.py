"""Deterministic stochastic stand-in for a hybrid thinking/non-thinking model.

Each question gets a difficulty latent and a gold answer from the world seed.
Each request then draws its own sample-level latents (chain length,
correctness coins, answer length) from ``request.seed``. All draws go through
a keyed hash, so a request always produces the same outcome no matter when
or on which thread it runs, and a question's chain length is the same at
every budget.

Correctness coins share the question's difficulty through a Gaussian copula:

    z = sqrt(rho) * g + sqrt(1 - rho) * e,    coin = Phi(z) < p

which keeps every marginal exactly at its configured probability while making
think and nothink outcomes (and repeated samples) positively correlated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Mapping, Sequence

import numpy as np
from scipy import special

from .._seeding import uniform
from ..chainstats import SurvivalCurve
from ..extraction import answers_equivalent, extract_answer, has_final_marker
from .base import GenerationOutcome, GenerationRequest

# chains that the curve never lets finish
NEVER = 1 << 40

_FILLER = (
    "we have {n}",
    "that leaves {n}",
    "so the count becomes {n}",
    "adding gives {n}",
    "which is {n}",
    "then {n} remain",
    "multiplying yields {n}",
    "hence {n}",
)


@dataclass(frozen=True)
class LengthLaw:
    """Token-length distribution: lognormal, weibull, pareto or empirical.

    Parameters: lognormal ``(mu, sigma)`` of the underlying normal; weibull
    ``(shape k, scale lam)``; pareto ``(alpha, x_m)``; empirical takes a
    :class:`SurvivalCurve` and treats mass above its last step as chains that
    never finish. Samples are ``max(1, ceil(ppf(u)))``.
    """

    kind: str
    a: float = 0.0
    b: float = 0.0
    curve: SurvivalCurve | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.kind not in ("lognormal", "weibull", "pareto", "empirical"):
            raise ValueError(f"unknown length law {self.kind!r}")
        if self.kind == "empirical":
            if self.curve is None:
                raise ValueError("empirical law needs a curve")
        elif self.kind == "lognormal":
            if self.b <= 0:
                raise ValueError("lognormal sigma must be > 0")
        elif self.a <= 0 or self.b <= 0:
            raise ValueError(f"{self.kind} parameters must be > 0")

    @classmethod
    def lognormal(cls, mu: float, sigma: float) -> "LengthLaw":
        return cls("lognormal", mu, sigma)

    @classmethod
    def weibull(cls, k: float, lam: float) -> "LengthLaw":
        return cls("weibull", k, lam)

    @classmethod
    def pareto(cls, alpha: float, x_m: float) -> "LengthLaw":
        return cls("pareto", alpha, x_m)

    @classmethod
    def empirical(cls, curve: SurvivalCurve) -> "LengthLaw":
        return cls("empirical", curve=curve)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "lognormal":
            return np.exp(self.a + self.b * special.ndtri(u))
        if self.kind == "weibull":
            return self.b * (-np.log1p(-u)) ** (1.0 / self.a)
        if self.kind == "pareto":
            return self.b * (1.0 - u) ** (-1.0 / self.a)
        curve = self.curve
        idx = np.searchsorted(curve.F, u, side="left")
        out = np.full(u.shape, float(NEVER))
        ok = idx < curve.t.size
        out[ok] = curve.t[idx[ok]]
        return out

    def sample(self, u):
        """Integer lengths for uniforms ``u`` (scalar in, int out)."""
        x = np.maximum(1.0, np.ceil(np.minimum(self.ppf(u), float(NEVER))))
        x = x.astype(np.int64)
        return int(x) if x.ndim == 0 else x

    def to_dict(self) -> dict:
        if self.kind == "empirical":
            return {"kind": "empirical", "steps": self.curve.to_json()}
        names = {"lognormal": ("mu", "sigma"), "weibull": ("k", "lam"), "pareto": ("alpha", "x_m")}
        p, q = names[self.kind]
        return {"kind": self.kind, p: self.a, q: self.b}

    @classmethod
    def from_dict(cls, d: Mapping) -> "LengthLaw":
        kind = d["kind"]
        if kind == "empirical":
            return cls.empirical(SurvivalCurve.from_json(d["steps"]))
        if kind == "lognormal":
            return cls.lognormal(d["mu"], d["sigma"])
        if kind == "weibull":
            return cls.weibull(d["k"], d["lam"])
        if kind == "pareto":
            return cls.pareto(d["alpha"], d["x_m"])
        raise ValueError(f"unknown length law {kind!r}")


_PROB_FIELDS = (
    "alpha_c",
    "alpha_t_base",
    "nothink_accuracy",
    "pi_eta",
    "nothink_alpha_t",
    "hint_adherence",
    "extraction_unformatted",
)


@dataclass(frozen=True)
class SimModelConfig:
    """Generative ground truth for one simulated model.

    ``alpha_t_base`` doubles as the think-continuation residual epsilon and
    ``alpha_c`` as the in-window completion accuracy; see the properties.
    """

    chain_length_law: LengthLaw
    alpha_c: float
    alpha_t_base: float
    nothink_accuracy: float
    nothink_length_law: LengthLaw
    pi_eta: float
    answer_space: int = 1000
    nothink_alpha_t: float = 0.0
    difficulty_correlation: float = 0.5
    hint_adherence: float = 0.0
    extraction_unformatted: float = 0.5
    distractors: int = 3
    answer_format: str = "gsm8k"

    def __post_init__(self) -> None:
        for name in _PROB_FIELDS:
            x = getattr(self, name)
            if not 0.0 <= x <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {x}")
        if not 0.0 <= self.difficulty_correlation < 1.0:
            raise ValueError("difficulty_correlation must lie in [0, 1)")
        if self.answer_space < 2:
            raise ValueError("answer_space must be >= 2")
        if self.distractors < 0:
            raise ValueError("distractors must be >= 0")
        if self.answer_format not in ("gsm8k", "boxed"):
            raise ValueError(f"answer_format must be 'gsm8k' or 'boxed', got {self.answer_format!r}")

    @property
    def epsilon(self) -> float:
        return self.alpha_t_base

    @property
    def alpha_c_plus(self) -> float:
        return self.alpha_c

    def with_(self, **changes) -> "SimModelConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["chain_length_law"] = self.chain_length_law.to_dict()
        d["nothink_length_law"] = self.nothink_length_law.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "SimModelConfig":
        d = dict(d)
        d["chain_length_law"] = LengthLaw.from_dict(d["chain_length_law"])
        d["nothink_length_law"] = LengthLaw.from_dict(d["nothink_length_law"])
        return cls(**d)


@dataclass(frozen=True)
class QuestionLatents:
    component: int
    gold: str
    difficulty: float
    chain_length: int
    think_correct: bool
    truncated_correct: bool
    extract_success: bool
    nothink_correct: bool
    nothink_length: int
    nothink_truncated_correct: bool


def _normalise_mixture(model) -> tuple[tuple[float, ...], tuple[SimModelConfig, ...]]:
    if isinstance(model, SimModelConfig):
        return (1.0,), (model,)
    weights, configs = zip(*model)
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or w.sum() <= 0:
        raise ValueError("mixture weights must be nonnegative and not all zero")
    return tuple(np.cumsum(w / w.sum())), tuple(configs)


class SimulatedBackend:
    """Backend whose outcomes are pure functions of the request.

    ``model`` is a :class:`SimModelConfig` or a list of ``(weight, config)``
    pairs; a question's component is fixed by the world seed. ``answer_key``
    maps question ids to gold answers, otherwise golds are integers drawn
    from the component's answer space.
    """

    def __init__(
        self,
        model: SimModelConfig | Sequence[tuple[float, SimModelConfig]],
        seed: int = 0,
        answer_key: Mapping[str, str] | None = None,
        max_in_flight: int = 64,
    ):
        self._cum, self.components = _normalise_mixture(model)
        self.seed = seed
        self.answer_key = dict(answer_key) if answer_key else {}
        self.max_in_flight = max_in_flight

    @property
    def config(self) -> SimModelConfig:
        if len(self.components) != 1:
            raise AttributeError("mixture backend has no single config")
        return self.components[0]

    def bind_answers(self, answer_key: Mapping[str, str]) -> "SimulatedBackend":
        return SimulatedBackend(
            list(zip(np.diff((0.0,) + self._cum), self.components)),
            seed=self.seed,
            answer_key=answer_key,
            max_in_flight=self.max_in_flight,
        )

    # question-level draws --------------------------------------------------

    def _world(self, qid: str, tag: str) -> float:
        return uniform("world", self.seed, qid, tag)

    def question(self, qid: str) -> tuple[int, SimModelConfig, str, float]:
        comp = 0
        if len(self.components) > 1:
            comp = int(np.searchsorted(self._cum, self._world(qid, "component"), side="right"))
            comp = min(comp, len(self.components) - 1)
        cfg = self.components[comp]
        gold = self.answer_key.get(qid)
        if gold is None:
            gold = str(int(self._world(qid, "gold") * cfg.answer_space))
        g = float(special.ndtri(self._world(qid, "difficulty")))
        return comp, cfg, gold, g

    # sample-level draws ----------------------------------------------------

    @staticmethod
    def _u(req_seed: int, qid: str, tag: str) -> float:
        return uniform("sample", req_seed, qid, tag)

    def _coin(self, cfg: SimModelConfig, g: float, req_seed: int, qid: str, tag: str, p: float) -> bool:
        rho = cfg.difficulty_correlation
        e = special.ndtri(self._u(req_seed, qid, tag))
        z = math.sqrt(rho) * g + math.sqrt(1.0 - rho) * e
        return float(special.ndtr(z)) < p

    def _wrong(self, cfg: SimModelConfig, gold: str, req_seed: int, qid: str, tag: str) -> str:
        k = int(self._u(req_seed, qid, "wrong:" + tag) * (cfg.answer_space - 1))
        if gold.lstrip("-").isdigit() and 0 <= int(gold) <= k:
            k += 1
        return str(k)

    def _distractors(self, cfg: SimModelConfig, gold: str, req_seed: int, qid: str, tag: str) -> list[str]:
        return [self._wrong(cfg, gold, req_seed, qid, f"{tag}:d{i}") for i in range(cfg.distractors)]

    def latents(self, qid: str, seed: int) -> QuestionLatents:
        """The full latent record a request with this seed would see."""
        comp, cfg, gold, g = self.question(qid)
        return QuestionLatents(
            component=comp,
            gold=gold,
            difficulty=g,
            chain_length=cfg.chain_length_law.sample(self._u(seed, qid, "L")),
            think_correct=self._coin(cfg, g, seed, qid, "think", cfg.alpha_c),
            truncated_correct=self._coin(cfg, g, seed, qid, "trunc", cfg.alpha_t_base),
            extract_success=self._coin(cfg, g, seed, qid, "extract", cfg.pi_eta),
            nothink_correct=self._coin(cfg, g, seed, qid, "nothink", cfg.nothink_accuracy),
            nothink_length=cfg.nothink_length_law.sample(self._u(seed, qid, "nlen")),
            nothink_truncated_correct=self._coin(cfg, g, seed, qid, "nothink_trunc", cfg.nothink_alpha_t),
        )

    # text synthesis --------------------------------------------------------

    @staticmethod
    def _final(cfg: SimModelConfig, answer: str) -> str:
        if cfg.answer_format == "boxed":
            return f"The answer is \\boxed{{{answer}}}."
        return f"#### {answer}"

    @staticmethod
    def _body(numbers: Sequence[str]) -> str:
        steps = [_FILLER[i % len(_FILLER)].format(n=n) for i, n in enumerate(numbers)]
        return "Working through the problem: " + ", ".join(steps)

    # generation ------------------------------------------------------------

    def generate(self, request: GenerationRequest) -> GenerationOutcome:
        comp, cfg, gold, g = self.question(request.question_id)
        if request.mode == "think":
            out = self._think(request, cfg, gold, g)
        elif request.trace is not None:
            out = self._extract(request, cfg, gold, g)
        else:
            out = self._nothink(request, cfg, gold, g)
        out.check_against(request)
        return out

    def _adheres(self, req: GenerationRequest, cfg: SimModelConfig, tag: str) -> bool:
        return req.hint is not None and self._u(req.seed, req.question_id, tag) < cfg.hint_adherence

    def _think(self, req, cfg, gold, g) -> GenerationOutcome:
        qid, s, b = req.question_id, req.seed, req.max_new_tokens
        L = cfg.chain_length_law.sample(self._u(s, qid, "L"))
        complete = L <= b
        tokens = min(L, b)
        if self._adheres(req, cfg, "hint:think"):
            answer = req.hint
        elif complete:
            answer = gold if self._coin(cfg, g, s, qid, "think", cfg.alpha_c) else self._wrong(cfg, gold, s, qid, "think")
        else:
            answer = gold if self._coin(cfg, g, s, qid, "trunc", cfg.alpha_t_base) else self._wrong(cfg, gold, s, qid, "trunc")
        numbers = self._distractors(cfg, gold, s, qid, "think")
        if complete:
            text = self._body(numbers) + ".\n" + self._final(cfg, answer)
        else:
            text = self._body(numbers + [answer])
        return GenerationOutcome(
            text=text,
            tokens_generated=tokens,
            prefill_tokens=0,
            stop_reason="natural" if tokens < b else "budget_hit",
            correct_latent=answers_equivalent(answer, gold),
        )

    def _nothink(self, req, cfg, gold, g) -> GenerationOutcome:
        qid, s, b = req.question_id, req.seed, req.max_new_tokens
        length = cfg.nothink_length_law.sample(self._u(s, qid, "nlen"))
        complete = length < b
        if self._adheres(req, cfg, "hint:nothink"):
            answer = req.hint
        elif complete:
            answer = gold if self._coin(cfg, g, s, qid, "nothink", cfg.nothink_accuracy) else self._wrong(cfg, gold, s, qid, "nothink")
        else:
            hit = self._coin(cfg, g, s, qid, "nothink_trunc", cfg.nothink_alpha_t)
            answer = gold if hit else self._wrong(cfg, gold, s, qid, "nothink_trunc")
        if complete:
            return GenerationOutcome(
                text=self._final(cfg, answer),
                tokens_generated=length,
                prefill_tokens=0,
                stop_reason="natural",
                correct_latent=answers_equivalent(answer, gold),
            )
        numbers = self._distractors(cfg, gold, s, qid, "nothink")
        return GenerationOutcome(
            text=self._body(numbers + [answer]),
            tokens_generated=b,
            prefill_tokens=0,
            stop_reason="budget_hit",
            correct_latent=answers_equivalent(answer, gold),
        )

    def _extract(self, req, cfg, gold, g) -> GenerationOutcome:
        qid, s, b = req.question_id, req.seed, req.max_new_tokens
        length = 4 + int(self._u(s, qid, "elen") * 24)
        answer: str | None
        prior = extract_answer(req.trace) if has_final_marker(req.trace) else None
        if prior is not None and prior.method in ("boxed", "gsm8k_marker", "final_answer_phrase"):
            answer = prior.value
        elif self._adheres(req, cfg, "hint:extract"):
            answer = req.hint
        elif self._coin(cfg, g, s, qid, "extract", cfg.pi_eta):
            answer = gold
        elif self._u(s, qid, "unformatted") < cfg.extraction_unformatted:
            answer = None
        else:
            answer = self._wrong(cfg, gold, s, qid, "extract")
        if length >= b:
            return GenerationOutcome(
                text="The answer is",
                tokens_generated=b,
                prefill_tokens=req.trace_tokens,
                stop_reason="budget_hit",
                correct_latent=False,
            )
        text = "The reasoning does not settle on a value." if answer is None else self._final(cfg, answer)
        return GenerationOutcome(
            text=text,
            tokens_generated=length,
            prefill_tokens=req.trace_tokens,
            stop_reason="natural",
            correct_latent=answer is not None and answers_equivalent(answer, gold),
        )


def sim_question_latents(
    question_id: str, seed: int, config: SimModelConfig, world_seed: int = 0
) -> QuestionLatents:
    return SimulatedBackend(config, seed=world_seed).latents(question_id, seed)
