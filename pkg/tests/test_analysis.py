import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wgstirap.analysis import (GAMMA_3_4, Method, NoCrossingError, ThresholdRegimeError, ZeroNormError,
                               gamma_cr_from_pnonad, gamma_cr_initial, gamma_cr_lz,
                               gamma_cr_semianalytic, lz_estimate, lz_estimate_quadrature,
                               lz_exponent, measure_pnonad, nonadiabatic_probability,
                               threshold_from_column, threshold_from_sweep, transfer_probability,
                               transfer_probability_adiabatic)
from wgstirap.model import ConfigError, ModelConfig, Site
from wgstirap.propagate import integrate_adiabatic_exact, integrate_bare


class TestProbabilities:
    def test_examples(self):
        assert transfer_probability([1, 0, 0]) == 1
        assert transfer_probability([0, 0, 1]) == 0
        assert transfer_probability(np.ones(3) / np.sqrt(3)) == pytest.approx(1 / 3)

    def test_zero_norm(self):
        with pytest.raises(ZeroNormError):
            transfer_probability([0, 0, 0])
        with pytest.raises(ZeroNormError):
            transfer_probability([1e-160, 0, 0])
        assert transfer_probability([1e-140, 0, 1e-140]) == pytest.approx(0.5)

    @given(st.lists(st.complex_numbers(max_magnitude=1e3, allow_nan=False), min_size=3, max_size=3))
    def test_range(self, c):
        try:
            p = transfer_probability(c)
        except ZeroNormError:
            return
        assert 0 <= p <= 1
        if c[1] == 0 and c[2] == 0:
            assert p == 1

    def test_adiabatic(self):
        assert transfer_probability_adiabatic([0, 1, 0]) == 1
        assert transfer_probability_adiabatic([0.5, 0.5, 0.5j]) == pytest.approx(1 / 3)
        with pytest.raises(ZeroNormError):
            transfer_probability_adiabatic([0, 0, 0])

    def test_adiabatic_matches_bare_definition(self):
        cfg = ModelConfig(5, 20)
        e = integrate_adiabatic_exact(cfg)
        b = integrate_bare(cfg, "basis3")
        assert transfer_probability_adiabatic(e.final_coeffs) == pytest.approx(
            transfer_probability(b.final_state), abs=1e-3)

    def test_nonadiabatic(self):
        assert nonadiabatic_probability([0, 1, 0]) == 0
        assert nonadiabatic_probability([0.1, 0.9, 0.3]) == pytest.approx(0.05)
        assert nonadiabatic_probability([0.1, 0.9, 0.3], "summed") == pytest.approx(0.1)
        with pytest.raises(ValueError):
            nonadiabatic_probability([0, 1, 0], "other")


class TestLandauZener:
    def test_gamma_constant(self):
        assert GAMMA_3_4 == pytest.approx(1.225416702465178, rel=1e-14)

    def test_example(self):
        assert lz_exponent(5) * 10 == pytest.approx(3.38896, abs=2e-4)
        assert lz_estimate(5, 10) == pytest.approx(0.03374, abs=1e-5)
        assert lz_estimate(5, 0) == 1

    @settings(max_examples=40, deadline=None)
    @given(st.floats(1, 12), st.floats(0.1, 100))
    def test_quadrature_matches_closed_form(self, a, L):
        assert lz_estimate_quadrature(a, L) == pytest.approx(lz_estimate(a, L), rel=1e-8)

    def test_requires_positive_a(self):
        with pytest.raises(ConfigError):
            lz_estimate(0, 10)
        with pytest.raises(ConfigError):
            lz_estimate_quadrature(-1, 10)


class TestThresholdFormulas:
    def test_from_pnonad(self):
        t = gamma_cr_from_pnonad(0.25, 1.0)
        assert t.gamma_cr == pytest.approx(0.0, abs=1e-15) and t.width == 2
        with pytest.raises(ThresholdRegimeError):
            gamma_cr_from_pnonad(0.5, 10)
        with pytest.raises(ThresholdRegimeError):
            gamma_cr_from_pnonad(0.0, 10)

    @given(st.floats(1e-12, 0.2499), st.floats(0.5, 200))
    def test_defining_identity(self, p, L):
        g = gamma_cr_from_pnonad(p, L).gamma_cr
        # e^{-g L} (1 - 2p) = 2p
        assert math.exp(-g * L) * (1 - 2 * p) == pytest.approx(2 * p, rel=1e-12)

    def test_strictly_decreasing(self):
        ps = np.linspace(1e-6, 0.49, 50)
        gs = [gamma_cr_from_pnonad(p, 20).gamma_cr for p in ps]
        assert np.all(np.diff(gs) < 0)

    def test_lz_values(self):
        t = gamma_cr_lz(5, 20)
        assert t.gamma_cr == pytest.approx(0.30411, abs=1e-5)
        assert t.gamma_cr == pytest.approx(0.3043, abs=2e-3)
        assert t.method is Method.LZ_ANALYTIC
        assert gamma_cr_lz(5, 1e6).gamma_cr == pytest.approx(0.33890, abs=5e-5)
        assert gamma_cr_lz(8, 1e6).gamma_cr == pytest.approx(0.21181, abs=5e-5)
        assert gamma_cr_lz(5, 20).inputs["asymptote"] == pytest.approx(lz_exponent(5) - math.log(2) / 20, rel=1e-14)

    def test_lz_composes_with_pnonad(self):
        ref = gamma_cr_from_pnonad(lz_estimate(5, 20), 20).gamma_cr
        assert gamma_cr_lz(5, 20).gamma_cr == pytest.approx(ref, rel=1e-12)

    def test_lz_approaches_asymptote_from_below(self):
        Ls = np.linspace(30, 2000, 50)
        gs = np.array([gamma_cr_lz(5, L).gamma_cr for L in Ls])
        assert np.all(gs < lz_exponent(5)) and np.all(np.diff(gs) > 0)

    def test_lz_too_short(self):
        with pytest.raises(ThresholdRegimeError):
            gamma_cr_lz(5, 2)

    def test_initial_values(self):
        assert gamma_cr_initial(5, 60).gamma_cr == pytest.approx(0.6194, abs=1e-4)
        assert gamma_cr_initial(5, 100).gamma_cr == pytest.approx(0.3921, abs=1e-4)
        assert gamma_cr_initial(5, 60).width == pytest.approx(2 / 60)
        with pytest.raises(ThresholdRegimeError):
            gamma_cr_initial(5, 1e-3)

    def test_initial_decreasing(self):
        c = 2 * 5 * math.exp(-7.5)
        Ls = np.linspace(math.e * c * 1.01, 200, 40)
        gs = [gamma_cr_initial(5, L).gamma_cr for L in Ls]
        assert np.all(np.diff(gs) < 0)

    def test_estimate_invariants(self):
        for t in (gamma_cr_lz(5, 40), gamma_cr_initial(5, 80)):
            assert t.gamma_cr > 0 and 0 < t.width < t.gamma_cr
            assert t.as_dict()["method"] == t.method.value


class TestSemianalytic:
    def test_measure_pnonad_frames(self):
        cfg = ModelConfig(5, 20, 0.2, Site.TARGET)
        pe = measure_pnonad(cfg)
        pr = measure_pnonad(cfg, "reduced")
        assert 0 < pr < pe < 0.5
        with pytest.raises(ValueError):
            measure_pnonad(cfg, "other")

    def test_estimate(self):
        t = gamma_cr_semianalytic(5, 20)
        assert t.method is Method.SEMI_ANALYTIC
        assert t.inputs["measure_gamma"] == 0.2
        assert 0.2 < t.gamma_cr < 0.3


class TestExtraction:
    gammas = np.linspace(0, 0.6, 121)

    def test_step(self):
        P = np.where(self.gammas < 0.3, 1.0, 0.0)
        t = threshold_from_column(self.gammas, P)
        h = self.gammas[1] - self.gammas[0]
        assert abs(t.gamma_cr - 0.3) <= h
        assert 0 < t.width <= h

    @pytest.mark.parametrize("g0", [0.123, 0.3, 0.4567])
    @pytest.mark.parametrize("w", [0.005, 0.03])
    def test_logistic(self, g0, w):
        P = 1 / (1 + np.exp((self.gammas - g0) / w))
        t = threshold_from_column(self.gammas, P)
        assert abs(t.gamma_cr - g0) <= self.gammas[1] - self.gammas[0]
        # logistic 0.9 -> 0.1 distance is 2 w ln 9
        assert t.width == pytest.approx(2 * w * math.log(9), rel=0.2)

    def test_first_crossing_ignores_islands(self):
        P = 1 / (1 + np.exp((self.gammas - 0.2) / 0.01))
        P[(self.gammas > 0.4) & (self.gammas < 0.45)] = 0.95
        t = threshold_from_column(self.gammas, P)
        assert abs(t.gamma_cr - 0.2) < 0.005

    def test_no_crossing(self):
        with pytest.raises(NoCrossingError):
            threshold_from_column(self.gammas, np.full_like(self.gammas, 0.9))
        with pytest.raises(NoCrossingError):
            threshold_from_column(self.gammas, np.full_like(self.gammas, 0.1))

    def test_validation(self):
        with pytest.raises(ValueError):
            threshold_from_column([0, 1], [1.0])
        with pytest.raises(ValueError):
            threshold_from_column([0, 0], [1.0, 0.0])
        with pytest.raises(ValueError):
            threshold_from_column([0, 1], [1.0, np.nan])

    def test_from_sweep_interpolates(self):
        from types import SimpleNamespace
        Ls = np.array([10.0, 20.0])
        P = np.stack([1 / (1 + np.exp((self.gammas - g0) / 0.01)) for g0 in (0.2, 0.4)])
        d = SimpleNamespace(Ls=Ls, gammas=self.gammas, P=P[None], spec=SimpleNamespace(a_values=[5.0]))
        assert threshold_from_sweep(d, 10.0).gamma_cr == pytest.approx(0.2, abs=1e-3)
        assert threshold_from_sweep(d, 15.0).gamma_cr == pytest.approx(0.3, abs=1e-3)
        with pytest.raises(ValueError):
            threshold_from_sweep(d, 25.0)
