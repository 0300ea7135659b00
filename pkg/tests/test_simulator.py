import math

import numpy as np
import pytest
from scipy import stats as sps

from thinktax.backend import GenerationRequest, LengthLaw, SimModelConfig, SimulatedBackend, sim_question_latents
from thinktax.backend.simulator import NEVER
from thinktax.chainstats import SurvivalCurve
from thinktax.extraction import extract_answer
from thinktax.presets import PRESETS, gsm8k_8b_config, math500_config


def _cfg(**kw):
    base = dict(
        chain_length_law=LengthLaw.lognormal(math.log(400), 0.6),
        alpha_c=0.9,
        alpha_t_base=0.2,
        nothink_accuracy=0.7,
        nothink_length_law=LengthLaw.lognormal(math.log(80), 0.4),
        pi_eta=0.6,
    )
    base.update(kw)
    return SimModelConfig(**base)


def _req(qid, mode="think", budget=512, seed=0, **kw):
    return GenerationRequest(qid, "q", mode, budget, seed, **kw)


@pytest.mark.parametrize(
    "law, dist",
    [
        (LengthLaw.lognormal(6.0, 0.7), sps.lognorm(s=0.7, scale=math.exp(6.0))),
        (LengthLaw.weibull(0.7, 900.0), sps.weibull_min(c=0.7, scale=900.0)),
        (LengthLaw.pareto(1.3, 250.0), sps.pareto(b=1.3, scale=250.0)),
    ],
)
def test_ppf_matches_scipy(law, dist):
    u = np.linspace(0.01, 0.99, 41)
    np.testing.assert_allclose(law.ppf(u), dist.ppf(u), rtol=1e-10)
    assert law.sample(0.5) == math.ceil(dist.ppf(0.5))
    assert LengthLaw.from_dict(law.to_dict()) == law


def test_empirical_law_never_finishes_above_max_f():
    law = LengthLaw.empirical(SurvivalCurve([10, 20], [0.5, 0.8]))
    assert law.sample(0.3) == 10
    assert law.sample(0.7) == 20
    assert law.sample(0.9) == NEVER
    back = LengthLaw.from_dict(law.to_dict())
    assert back.sample(0.7) == 20


def test_law_validation():
    with pytest.raises(ValueError):
        LengthLaw("gamma", 1, 1)
    with pytest.raises(ValueError):
        LengthLaw.pareto(0, 1)
    with pytest.raises(ValueError):
        LengthLaw("empirical")


def test_config_validation_and_roundtrip():
    with pytest.raises(ValueError):
        _cfg(alpha_c=1.5)
    with pytest.raises(ValueError):
        _cfg(answer_format="latex")
    c = _cfg(hint_adherence=0.3)
    assert SimModelConfig.from_dict(c.to_dict()) == c
    assert c.epsilon == c.alpha_t_base and c.alpha_c_plus == c.alpha_c
    for name, make in PRESETS.items():
        cfg = make()
        assert SimModelConfig.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict(), name


def test_outcomes_are_pure_functions_of_the_request():
    be = SimulatedBackend(_cfg(), seed=3)
    r = _req("q7", seed=11)
    a, b = be.generate(r), SimulatedBackend(_cfg(), seed=3).generate(r)
    assert a == b and a.correct_latent == b.correct_latent
    other = [SimulatedBackend(_cfg(), seed=3).generate(_req("q7", seed=s)).text for s in range(20)]
    assert len(set(other)) > 1


def test_think_semantics():
    be = SimulatedBackend(_cfg(), seed=1)
    for i in range(300):
        qid = f"q{i}"
        lat = be.latents(qid, 5)
        out = be.generate(_req(qid, budget=400, seed=5))
        assert out.tokens_generated == min(lat.chain_length, 400)
        if lat.chain_length < 400:
            assert out.stop_reason == "natural"
            assert extract_answer(out.text).method == "gsm8k_marker"
            assert out.correct_latent == lat.think_correct
        else:
            assert out.stop_reason == "budget_hit"
            if lat.chain_length > 400:
                assert extract_answer(out.text).method == "last_number"
                assert out.correct_latent == lat.truncated_correct


def test_boxed_format():
    be = SimulatedBackend(math500_config(), seed=0)
    outs = [be.generate(_req(f"q{i}", budget=8192)) for i in range(50)]
    assert any(extract_answer(o.text).method == "boxed" for o in outs if o.stop_reason == "natural")


def test_monte_carlo_rates():
    cfg = _cfg(difficulty_correlation=0.6)
    be = SimulatedBackend(cfg, seed=2)
    n = 6000
    comp = trunc = ext = nt = 0
    n_comp = n_trunc = 0
    for i in range(n):
        lat = be.latents(f"q{i}", 0)
        if lat.chain_length <= 512:
            n_comp += 1
            comp += lat.think_correct
        else:
            n_trunc += 1
            trunc += lat.truncated_correct
        ext += lat.extract_success
        nt += lat.nothink_correct
    for hits, m, p in [(comp, n_comp, 0.9), (trunc, n_trunc, 0.2), (ext, n, 0.6), (nt, n, 0.7)]:
        se = math.sqrt(p * (1 - p) / m)
        assert abs(hits / m - p) < 4 * se
    expected = sps.lognorm(s=0.6, scale=400).cdf(512)
    assert abs(n_comp / n - expected) < 4 * math.sqrt(expected * (1 - expected) / n)


def test_difficulty_correlation_couples_coins():
    be = SimulatedBackend(_cfg(difficulty_correlation=0.8), seed=0)
    lats = [be.latents(f"q{i}", 0) for i in range(4000)]
    a = np.array([x.think_correct for x in lats], float)
    b = np.array([x.nothink_correct for x in lats], float)
    assert np.corrcoef(a, b)[0, 1] > 0.2
    be0 = SimulatedBackend(_cfg(difficulty_correlation=0.0), seed=0)
    lats0 = [be0.latents(f"q{i}", 0) for i in range(4000)]
    a0 = np.array([x.think_correct for x in lats0], float)
    b0 = np.array([x.nothink_correct for x in lats0], float)
    assert abs(np.corrcoef(a0, b0)[0, 1]) < 0.06


def test_extraction_pass():
    cfg = _cfg(extraction_unformatted=1.0)
    be = SimulatedBackend(cfg, seed=0)
    trace = "Working through the problem: 3 then 4"
    hits = 0
    for i in range(2000):
        out = be.generate(_req(f"q{i}", "nothink", 64, trace=trace, trace_tokens=700))
        assert out.prefill_tokens == 700
        assert out.stop_reason == "natural"
        ans = extract_answer(out.text)
        if ans.found:
            hits += 1
            assert out.correct_latent
    assert abs(hits / 2000 - 0.6) < 4 * math.sqrt(0.24 / 2000)
    # too small an answer budget cuts the answer off
    out = be.generate(_req("q1", "nothink", 3, trace=trace))
    assert out.stop_reason == "budget_hit" and not extract_answer(out.text).found


def test_extraction_echoes_a_formatted_trace():
    be = SimulatedBackend(_cfg(pi_eta=0.0, extraction_unformatted=0.0), seed=0)
    out = be.generate(_req("q1", "nothink", 64, trace="so #### 77"))
    assert extract_answer(out.text).value == "77"


def test_hints_are_followed_at_the_configured_rate():
    be = SimulatedBackend(_cfg(hint_adherence=0.5), seed=0)
    follow = sum(
        extract_answer(be.generate(_req(f"q{i}", budget=10**6, hint="123456")).text).value == "123456"
        for i in range(2000)
    )
    assert abs(follow / 2000 - 0.5) < 4 * math.sqrt(0.25 / 2000)


def test_mixture_and_answer_key():
    easy = _cfg(nothink_accuracy=1.0)
    hard = _cfg(nothink_accuracy=0.0)
    be = SimulatedBackend([(0.25, easy), (0.75, hard)], seed=0)
    comps = [be.question(f"q{i}")[0] for i in range(4000)]
    assert abs(np.mean(comps) - 0.75) < 4 * math.sqrt(0.1875 / 4000)
    with pytest.raises(AttributeError):
        be.config
    keyed = be.bind_answers({"q0": "3.5"})
    assert keyed.question("q0")[2] == "3.5"
    assert keyed.question("q0")[0] == be.question("q0")[0]


def test_nothink_truncation():
    cfg = _cfg(nothink_length_law=LengthLaw.lognormal(math.log(5000), 0.1))
    out = SimulatedBackend(cfg).generate(_req("q0", "nothink", 100))
    assert out.stop_reason == "budget_hit" and out.tokens_generated == 100


def test_module_latents_helper():
    cfg = gsm8k_8b_config()
    assert sim_question_latents("q3", 9, cfg) == SimulatedBackend(cfg).latents("q3", 9)
