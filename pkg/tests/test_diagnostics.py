import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from thinktax import diagnostics as dx
from thinktax.chainstats import HazardCurve, SurvivalCurve
from thinktax.presets import loglinear_curve

prob = st.floats(0.0, 1.0, allow_nan=False)


def _params(f, c, t, nt=None):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", dx.AssumptionWarning)
        return dx.DecompositionParams(f, c, t, nt)


@given(prob, prob, prob, prob)
def test_two_source_identity(f, c, t, nt):
    p = _params(f, c, t, nt)
    tb = dx.two_source_decomposition(p)
    assert abs(tb.truncation_loss + tb.reasoning_regret - tb.tax) < 1e-9
    assert tb.tax == pytest.approx((nt - (f * c + (1 - f) * t)) * 100, abs=1e-9)


@given(prob, prob, prob)
def test_prediction_is_a_convex_combination(f, c, t):
    acc = dx.predict_coupled_accuracy(_params(f, c, t))
    assert min(c, t) - 1e-12 <= acc <= max(c, t) + 1e-12


def test_param_validation_and_warning():
    with pytest.raises(ValueError):
        dx.DecompositionParams(1.2, 0.5, 0.5)
    with pytest.warns(dx.AssumptionWarning):
        dx.DecompositionParams(0.5, 0.2, 0.6)
    with pytest.raises(ValueError):
        dx.thinking_tax(dx.DecompositionParams(0.5, 0.9, 0.1))


def test_from_curve():
    c = SurvivalCurve([100, 200], [0.4, 0.9])
    p = dx.DecompositionParams.from_curve(c, 150, 0.9, 0.2, 0.8)
    assert p.f_l == 0.4 and p.acc_nt == 0.8


@given(prob, prob, prob)
def test_crossover_fraction_solves_the_equation(nt, c, t):
    if c == t:
        with pytest.raises(ValueError, match="degenerate"):
            dx.crossover_fraction(nt, c, t)
        return
    cf = dx.crossover_fraction(nt, c, t)
    if cf.in_range:
        assert dx.predict_coupled_accuracy(_params(cf.value, c, t)) == pytest.approx(nt, abs=1e-9)
    assert 0 <= cf.value <= 1


def test_crossover_budget_cases():
    curve = SurvivalCurve([256, 512, 1024, 2048], [0.1, 0.4, 0.7, 0.9])
    r = dx.crossover_budget(curve, 0.65, 0.9, 0.2, b_sat=256)
    assert r.b_star == 1024 and r.gamma == 4.0
    r = dx.crossover_budget(curve, 0.95, 0.9, 0.2)
    assert r.b_star is None and r.note == dx.NO_CROSSOVER and r.gamma is None
    r = dx.crossover_budget(curve, 0.1, 0.9, 0.2)
    assert r.b_star == 0
    with pytest.raises(ValueError, match="crossover beyond observed chain lengths"):
        dx.crossover_budget(curve, 0.85, 0.9, 0.2)


def test_saturation_budget():
    assert dx.saturation_budget([128, 256, 512], [0.508, 0.875, 0.931]) == 512
    assert dx.saturation_budget([512, 128, 256], [0.93, 0.5, 0.925]) == 256
    assert dx.saturation_budget([1, 2], [0.50, 0.51], tol_pp=1.0) == 1
    with pytest.raises(ValueError):
        dx.saturation_budget([], [])


@given(prob, prob, prob, prob, prob)
def test_matched_reduces_to_plain_at_equal_budgets(f, ae, at, ac, _):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", dx.AssumptionWarning)
        plain = dx.recoverable_tax(1 - f, ae, at)
    assert dx.recoverable_tax_matched(f, f, ae, at, ac, ac) == pytest.approx(plain, abs=1e-9)


def test_matched_terms_by_hand():
    # gain .6*.3=.18, lost .2*.5=.10, shift .4*(-.05)=-.02
    got = dx.recoverable_tax_matched(0.4, 0.6, 0.6, 0.3, 0.75, 0.8)
    assert got == pytest.approx(6.0)
    with pytest.raises(ValueError):
        dx.recoverable_tax_matched(0.7, 0.6, 0.5, 0.3, 0.8, 0.8)


def test_negative_recoverable_tax_warns():
    with pytest.warns(dx.AssumptionWarning):
        assert dx.recoverable_tax(0.5, 0.2, 0.4) == pytest.approx(-10.0)


def test_tax_breakdown_residual():
    tb = dx.tax_breakdown(_params(0.374, 0.99, 0.318, 0.931), alpha_extract=0.49)
    assert tb.recoverable == pytest.approx(0.626 * (0.49 - 0.318) * 100)
    assert tb.recoverable + tb.residual == pytest.approx(tb.tax)
    assert dx.tax_breakdown(_params(0.5, 0.9, 0.1, 0.8)).recoverable is None


@given(prob, prob, prob, prob, prob)
def test_same_subset_terms_sum_to_tax(f, nc, ntt, c, t):
    # acc_nt on the whole population is the subset-weighted mixture
    a, b = dx.same_subset_decomposition(f, nc, ntt, c, t)
    nt = f * nc + (1 - f) * ntt
    tax = dx.thinking_tax(_params(f, c, t, nt))
    assert a + b == pytest.approx(tax, abs=1e-9)


def test_modal_and_dfr():
    m = dx.ModalParams(delta=0.1, epsilon=0.3, pi_eta=0.6, alpha_c_plus=0.9, b_a=100)
    chk = dx.modal_advantage_check(m)
    assert chk.holds and chk.margin == pytest.approx((0.6 - (0.09 + 0.27)) * 100)
    assert dx.dfr_lower_bound(0.0, m) == pytest.approx(30.0)
    assert dx.dfr_lower_bound(0.001, m) == pytest.approx((0.3 - 0.1 * 0.6) * 100)
    cut = dx.dfr_cutoff(m)
    assert cut == pytest.approx(0.3 / 60)
    assert dx.dfr_lower_bound(cut, m) == pytest.approx(0.0, abs=1e-9)
    hz = HazardCurve(np.array([0, 100, 200]), np.array([0.01, 0.006, 0.004]), 100)
    assert dx.dfr_threshold(hz, m) == 200
    assert dx.dfr_threshold(HazardCurve(np.array([0]), np.array([0.5]), 1), m) is None
    with pytest.raises(ValueError):
        dx.dfr_lower_bound(-1e-3, m)
    with pytest.raises(ValueError):
        dx.dfr_cutoff(dx.ModalParams(0.1, 0.6, 0.5, 0.9, 100))
    with pytest.raises(ValueError):
        dx.ModalParams(0.1, 0.3, 0.6, 0.9, -1)


def _split_model():
    curve = loglinear_curve(((10, 0.0), (400, 0.5), (4000, 1.0)))

    def alpha_e(b_r, b_a):
        # reasoning helps extraction with diminishing returns; needs ~30 answer tokens
        return 0.7 * (1 - math.exp(-max(b_r, 0) / 300)) * (1 - math.exp(-max(b_a, 0) / 30))

    return dx.SplitModel(alpha_e, curve, 0.95)


def test_optimal_split_matches_brute_force():
    model = _split_model()
    res = dx.optimal_split_search(model, 1000, 10)
    brute = max(range(0, 1001, 10), key=lambda r: float(dx.split_objective(model, [r], 1000)[0]))
    assert res.b_r_star == brute
    assert res.accuracy == pytest.approx(float(np.max(res.objective)))
    assert 0 < res.b_r_star < 1000
    # the stationarity residual changes sign around the optimum
    i = int(np.flatnonzero(res.grid == res.b_r_star)[0])
    window = res.residual[i - 3 : i + 4]
    assert np.nanmin(window) < 0 < np.nanmax(window)
    assert math.isnan(res.residual[0]) and len(res.residual_curve) == res.grid.size - 2


def test_split_degenerate_grid():
    with pytest.raises(ValueError, match="degenerate grid"):
        dx.optimal_split_search(_split_model(), 10, 10)


def test_cross_scale_gain():
    assert dx.cross_scale_gain(0.5, 20.0) == 10.0
    with pytest.raises(ValueError):
        dx.cross_scale_gain(1.5, 1.0)


def test_pilot_predict_sweep():
    lengths = [100, 200, 300, 400]
    out = dx.pilot_predict_sweep((lengths, [False] * 4), 0.9, 0.1, [150, 400])
    assert out == [(150, pytest.approx(0.25 * 0.9 + 0.75 * 0.1)), (400, pytest.approx(0.9))]
    out = dx.pilot_predict_sweep((lengths, [False] * 4), {150: 1.0, 400: 0.5}, {150: 0.0, 400: 0.0}, [150, 400])
    assert out[0][1] == pytest.approx(0.25) and out[1][1] == pytest.approx(0.5)
    with pytest.warns(dx.ExtrapolationWarning):
        dx.pilot_predict_sweep((lengths, [False] * 4), 0.9, 0.1, [100, 1000], measured_at=256)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        dx.pilot_predict_sweep((lengths, [False] * 4), {100: 0.9, 1000: 0.9}, {100: 0.1, 1000: 0.1}, [100, 1000], measured_at=256)


def test_mrsd_cost_bound():
    assert dx.mrsd_cost_bound(1.0, 50, 256, 3, 512, 128) == 50
    assert dx.mrsd_cost_bound(0.0, 50, 256, 1, 512, 128) == 256 + 640
    with pytest.raises(ValueError):
        dx.mrsd_cost_bound(0.5, -1, 256, 1, 512, 128)
