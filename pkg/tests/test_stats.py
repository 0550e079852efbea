import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from apfbm.coeffexpr import parse
from apfbm.fbm import TimeGrid
from apfbm.noise import OuParams
from apfbm.schemes import SystemSpec
from apfbm.stats import (
    TEST_FUNCTIONS,
    ConvergenceReport,
    NormalLaw,
    conditional_criterion,
    conditional_criterion_curve,
    coupled_terminals,
    get_test_function,
    prob_exceed,
    rate_fit,
    variance_with_se,
    weak_error,
)
from apfbm.streams import make_rng

E_COS = 0.6065306597126334


def spec_for(g, eps=0.0, h=0.75, x0=0.0, driver="fractional"):
    return SystemSpec(parse(g), h, OuParams(eps), x0, driver)


class TestTestFunctions:
    @pytest.mark.parametrize("name", sorted(TEST_FUNCTIONS))
    def test_derivatives(self, name):
        phi = get_test_function(name)
        y = np.linspace(-3, 3, 25)
        h = 1e-5
        np.testing.assert_allclose(phi.d1(y), (phi(y + h) - phi(y - h)) / (2 * h), atol=1e-8)
        np.testing.assert_allclose(phi.d2(y), (phi.d1(y + h) - phi.d1(y - h)) / (2 * h), atol=1e-8)

    @pytest.mark.parametrize("name", ["tanh", "sin_scaled", "gauss_bump"])
    def test_bounds(self, name):
        phi = get_test_function(name)
        y = np.linspace(-20, 20, 4001)
        assert phi.bounded
        for f in (phi.f, phi.d1, phi.d2):
            assert np.abs(f(y)).max() <= phi.bound

    def test_identity_unbounded(self):
        assert not get_test_function("identity").bounded

    def test_unknown(self):
        with pytest.raises(ValueError, match="unknown test function"):
            get_test_function("relu")


class TestProbExceed:
    def test_count(self):
        p, se = prob_exceed([0, 1, 0.3], [0, 0, 0], 0.5)
        assert p == pytest.approx(1 / 3)
        assert se == pytest.approx(math.sqrt((1 / 3) * (2 / 3) / 3))

    def test_identical(self):
        a = np.arange(50.0)
        assert prob_exceed(a, a, 0.1) == (0.0, 0.0)

    def test_normal_tail(self):
        d = make_rng(41).standard_normal(10_000)
        p, se = prob_exceed(d, np.zeros_like(d), 1.96)
        assert abs(p - 0.04999579029644087) < 3 * se

    @pytest.mark.parametrize("a,b,eta", [([], [], 0.1), ([1.0], [1.0, 2.0], 0.1), ([1.0], [1.0], 0.0)])
    def test_errors(self, a, b, eta):
        with pytest.raises(ValueError):
            prob_exceed(a, b, eta)


class TestRateFit:
    dts = 2.0 ** -np.arange(4, 10)

    @pytest.mark.parametrize("rate", [0.5, 1.0, 0.8])
    def test_exact_power_law(self, rate):
        slope, intercept, r2 = rate_fit(self.dts, 3.0 * self.dts**rate)
        assert slope == pytest.approx(rate, abs=1e-12)
        assert intercept == pytest.approx(math.log(3.0), abs=1e-12)
        assert r2 == pytest.approx(1.0, abs=1e-12)

    def test_noisy(self):
        rng = make_rng(42)
        for _ in range(20):
            err = self.dts**0.5 * (1 + 0.05 * rng.standard_normal(self.dts.size))
            slope = rate_fit(self.dts, err)[0]
            assert 0.4 <= slope <= 0.6

    @pytest.mark.parametrize(
        "dts,errs", [([0.1, 0.05], [1.0, 0.5]), ([0.1, 0.05, 0.0], [1, 1, 1]), ([0.1, 0.05, 0.02], [1, -1, 1])]
    )
    def test_errors(self, dts, errs):
        with pytest.raises(ValueError):
            rate_fit(dts, errs)

    @settings(max_examples=30)
    @given(st.floats(0.1, 2.0), st.floats(1e-3, 10.0))
    def test_recovers_slope(self, rate, c):
        slope, _, _ = rate_fit(self.dts, c * self.dts**rate)
        assert slope == pytest.approx(rate, abs=1e-9)


class TestReport:
    def test_validation(self):
        with pytest.raises(ValueError):
            ConvergenceReport("dt", [0.1, 0.2], [1, 1], [0, 0])
        with pytest.raises(ValueError):
            ConvergenceReport("dt", [0.2, 0.1], [1, -1], [0, 0])
        with pytest.raises(ValueError):
            ConvergenceReport("h", [0.2, 0.1], [1, 1], [0, 0])

    def test_fitted_short_grid_has_nan_slope(self):
        rep = ConvergenceReport.fitted("epsilon", [0.1, 0.01], [1.0, 0.5], [0.1, 0.1])
        assert math.isnan(rep.slope)


class TestWeakError:
    def test_same_law(self):
        s = make_rng(43).normal(0.5, 0.8, 5000)
        phi = get_test_function("tanh")
        d, se = weak_error(s, NormalLaw(0.5, 0.64), phi)
        assert d < 3 * se

    def test_two_ensembles(self):
        rng = make_rng(44)
        d, se = weak_error(rng.standard_normal(4000), rng.standard_normal(4000), get_test_function("gauss_bump"))
        assert d < 3 * se

    def test_detects_shift(self):
        s = make_rng(45).normal(1.0, 1.0, 5000)
        d, se = weak_error(s, NormalLaw(0.0, 1.0), get_test_function("tanh"))
        assert d > 10 * se

    def test_small_ensemble(self):
        with pytest.raises(ValueError):
            weak_error(np.zeros(10), NormalLaw(0, 1), get_test_function("tanh"))

    def test_variance_with_se(self):
        v, se = variance_with_se(make_rng(46).normal(0, 2.0, 20000))
        assert abs(v - 4.0) < 4 * se
        assert se == pytest.approx(4.0 * math.sqrt(2 / 20000), rel=0.1)


class TestConditionalCriterion:
    @pytest.mark.parametrize("phi", ["tanh", "identity", "sin_scaled"])
    def test_constant_g_is_exactly_zero(self, phi):
        est, se = conditional_criterion(spec_for("0.8", x0=0.2), get_test_function(phi),
                                        TimeGrid(1.0, 32), 30, 100, seed=1)
        assert est == 0.0 and se == 0.0

    def test_one_step_closed_form_plain(self):
        est, se = conditional_criterion(spec_for("cos(m)"), get_test_function("identity"),
                                        TimeGrid(1.0, 1), 100, 4000, seed=2, control_variate=False)
        # each outer term is |mean(cos gamma) - e^{-1/2}| |dbeta|: pure inner noise
        inner_se = math.sqrt((1 + math.exp(-2)) / 2 - math.exp(-1)) / math.sqrt(4000)
        assert est <= 3 * inner_se

    def test_one_step_closed_form_control(self):
        est, _ = conditional_criterion(spec_for("cos(m)"), get_test_function("identity"),
                                       TimeGrid(1.0, 1), 30, 100, seed=3)
        assert est < 1e-14

    def test_noise_floor_halves(self):
        spec, phi = spec_for("cos(m)"), get_test_function("identity")
        a = conditional_criterion(spec, phi, TimeGrid(1.0, 1), 300, 400, seed=4, control_variate=False)[0]
        b = conditional_criterion(spec, phi, TimeGrid(1.0, 1), 300, 1600, seed=4, control_variate=False)[0]
        assert 1.6 < a / b < 2.5

    def test_deterministic_and_thread_independent(self):
        spec, phi = spec_for("tanh(x)*cos(m)+sin(x)", x0=1.0), get_test_function("tanh")
        kw = dict(T=1.0, Ns=[8, 16, 32], outer=32, inner=100, seed=5)
        r1 = conditional_criterion_curve(spec, phi, **kw)
        r2 = conditional_criterion_curve(spec, phi, **kw)
        r3 = conditional_criterion_curve(spec, phi, threads=3, **kw)
        np.testing.assert_array_equal(r1.estimates, r2.estimates)
        np.testing.assert_array_equal(r1.estimates, r3.estimates)
        np.testing.assert_array_equal(r1.grid, [1 / 8, 1 / 16, 1 / 32])

    def test_control_variate_unbiased(self):
        # same target with and without the control: agreement within the noise
        spec, phi = spec_for("cos(m)+m^2"), get_test_function("tanh")
        kw = dict(T=1.0, Ns=[4], outer=60, inner=2000, seed=6)
        plain = conditional_criterion_curve(spec, phi, control_variate=False, **kw)
        ctrl = conditional_criterion_curve(spec, phi, control_variate=True, **kw)
        noise_floor = 0.8 * 1.0 * 1.6 / math.sqrt(2000)  # |phi'| <= 1, sd(g) ~ 1.6, |beta| ~ 0.8
        assert abs(plain.estimates[0] - ctrl.estimates[0]) < 3 * noise_floor
        assert ctrl.std_errors[0] < plain.std_errors[0] * 1.5

    @pytest.mark.parametrize("kind", ["ap", "implicit_nonap", "limiting"])
    def test_control_zero_mean_all_kinds(self, kind):
        spec = spec_for("tanh(x)*cos(m)+sin(x)", eps=0.05, x0=1.0)
        phi = get_test_function("identity")
        kw = dict(T=1.0, Ns=[8], outer=30, inner=3000, seed=7, kind=kind)
        a = conditional_criterion_curve(spec, phi, control_variate=False, **kw).estimates[0]
        b = conditional_criterion_curve(spec, phi, control_variate=True, **kw).estimates[0]
        assert abs(a - b) < 0.03

    def test_guards(self):
        spec, phi = spec_for("cos(m)"), get_test_function("tanh")
        with pytest.raises(ValueError, match="outer"):
            conditional_criterion(spec, phi, TimeGrid(1.0, 4), 29, 100, seed=0)
        with pytest.raises(ValueError, match="inner"):
            conditional_criterion(spec, phi, TimeGrid(1.0, 4), 30, 99, seed=0)
        with pytest.raises(ValueError, match="divide"):
            conditional_criterion_curve(spec, phi, 1.0, [16, 24], 30, 100, seed=0)

    @pytest.mark.parametrize("phi", sorted(TEST_FUNCTIONS))
    def test_criteria_agree_in_trend(self, phi):
        # exceedance probability and the conditional criterion both decay over dt
        spec = spec_for("cos(m)")
        Ns = [8, 128]
        rep = conditional_criterion_curve(spec, get_test_function(phi), 1.0, Ns, 60, 200, seed=8)
        probs = []
        for N in Ns:
            out = coupled_terminals(spec, 1.0, N, 128, 400, 8, ["limiting", "averaged"])
            probs.append(prob_exceed(out["limiting"], out["averaged"], 0.1)[0])
        # identity phi with x-independent g: E^H[X_N] equals the reference exactly,
        # so the conditional criterion sits at rounding level on every grid
        assert rep.estimates[1] < rep.estimates[0] or rep.estimates.max() < 1e-13
        assert probs[1] < probs[0]


class TestCoupledTerminals:
    def test_shared_driver(self):
        spec = spec_for("2.0", x0=0.5)
        out = coupled_terminals(spec, 1.0, 16, 64, 50, 9, ["limiting", "averaged", "ap"])
        np.testing.assert_allclose(out["limiting"], 0.5 + 2.0 * out["beta_T"])
        np.testing.assert_array_equal(out["limiting"], out["averaged"])

    def test_divisibility(self):
        with pytest.raises(ValueError):
            coupled_terminals(spec_for("cos(m)"), 1.0, 24, 64, 50, 9, ["limiting"])
