import numpy as np
import pytest
from hypothesis import given, strategies as st

from wgstirap.eigen import eigensystem
from wgstirap.model import (ConfigError, ModelConfig, Site, analytic_spectrum, coalescence_residual,
                            couplings, dark_state, ep3_location_mp, ep3_locations, hamiltonian,
                            hamiltonian_derivative, mixing_angle, nonadiabatic_coupling_analytic,
                            perturbative_imag_shifts, perturbed_dark_state)

a_st = st.floats(0.0, 12.0)
L_st = st.floats(0.5, 200.0)
z_frac = st.floats(0.0, 1.0)
site_st = st.sampled_from(list(Site))


class TestConfig:
    def test_rejects_bad_values(self):
        for kw in (dict(a=1, L=0), dict(a=1, L=-2), dict(a=-1, L=1), dict(a=1, L=1, gamma=-0.1),
                   dict(a=np.nan, L=1), dict(a=1, L=np.inf)):
            with pytest.raises(ConfigError):
                ModelConfig(**kw)

    def test_site_parsing(self):
        assert ModelConfig(1, 1, site="target").site is Site.TARGET
        assert ModelConfig(1, 1, site=3).site is Site.INITIAL
        assert ModelConfig(1, 1, site="Center").site is Site.CENTER
        with pytest.raises(KeyError):
            Site.parse("left")

    def test_replace(self):
        cfg = ModelConfig(5, 20, 0.1, "target")
        assert cfg.replace(gamma=0.0).gamma == 0.0
        assert cfg.replace(gamma=0.0).site is Site.TARGET
        assert cfg.absorbing and not cfg.replace(gamma=0.0).absorbing


class TestCouplings:
    def test_midpoint(self):
        v, w = couplings(7.5, ModelConfig(3.0, 15.0))
        assert v == pytest.approx(1.0) and w == pytest.approx(1.0)

    def test_start(self):
        v, w = couplings(0.0, ModelConfig(5, 10))
        assert v == pytest.approx(12.182493960703473, rel=1e-14)
        assert w == pytest.approx(0.0820849986238988, rel=1e-14)

    def test_ep_condition(self):
        cfg = ModelConfig(5, 1)
        v, w = couplings(cfg.L * (0.5 + 1j * np.pi / 20), cfg)
        assert abs(v + 1j * w) < 1e-14

    @given(a_st, L_st, z_frac)
    def test_product_is_one(self, a, L, t):
        v, w = couplings(t * L, ModelConfig(a, L))
        assert v * w == pytest.approx(1.0, rel=1e-14)
        assert v > 0 and w > 0

    def test_array_input(self):
        cfg = ModelConfig(5, 10)
        v, w = couplings(np.linspace(0, 10, 7), cfg)
        assert v.shape == (7,) and np.allclose(v * w, 1)


class TestHamiltonian:
    def test_midpoint_hermitian(self):
        H = hamiltonian(5.0, ModelConfig(2, 10))
        assert np.allclose(H, [[0, 1, 0], [1, 0, 1], [0, 1, 0]])

    def test_target_absorption(self):
        H = hamiltonian(5.0, ModelConfig(2, 10, 0.5, Site.TARGET))
        assert H[0, 0] == -0.5j and H[1, 1] == 0 and H[2, 2] == 0
        assert H[0, 1] == pytest.approx(1.0)

    @pytest.mark.parametrize("site", [Site.TARGET, Site.CENTER, Site.INITIAL])
    def test_absorption_position(self, site):
        H = hamiltonian(1.0, ModelConfig(2, 10, 0.3, site))
        diag = np.diag(H)
        assert diag[int(site) - 1] == -0.3j
        assert np.count_nonzero(diag) == 1

    @given(a_st, L_st, z_frac, st.floats(0, 2), site_st)
    def test_symmetric_and_trace(self, a, L, t, g, site):
        cfg = ModelConfig(a, L, g, site)
        H = hamiltonian(t * L, cfg)
        assert np.array_equal(H, H.T)
        expected = -1j * g if site != Site.NONE else 0
        assert np.trace(H) == pytest.approx(expected, abs=1e-15)
        if site == Site.NONE:
            assert np.all(H.imag == 0)

    def test_derivative_matches_finite_difference(self):
        cfg = ModelConfig(5, 20, 0.2, Site.TARGET)
        h = 1e-6
        fd = (hamiltonian(6 + h, cfg) - hamiltonian(6 - h, cfg)) / (2 * h)
        assert np.allclose(hamiltonian_derivative(6, cfg), fd, atol=1e-8)


class TestAnalyticSpectrum:
    def test_midpoint(self):
        s = analytic_spectrum(5.0, ModelConfig(5, 10))
        assert np.allclose(s.energies, [-np.sqrt(2), 0, np.sqrt(2)])
        assert s.theta == pytest.approx(np.pi / 4)
        assert np.allclose(s.vectors[1], [1 / np.sqrt(2), 0, -1 / np.sqrt(2)])

    def test_dark_state_at_start_is_minus_site3(self):
        s = analytic_spectrum(0.0, ModelConfig(5, 10))
        assert np.cos(s.theta) == pytest.approx(6.737e-3, rel=1e-3)
        assert np.allclose(s.vectors[1], [0, 0, -1], atol=1e-2)

    @given(a_st, L_st, z_frac)
    def test_eigen_identity_and_orthonormality(self, a, L, t):
        cfg = ModelConfig(a, L)
        s = analytic_spectrum(t * L, cfg)
        H = hamiltonian(t * L, cfg)
        scale = max(1.0, s.omega)
        for E, v in zip(s.energies, s.vectors):
            assert np.linalg.norm(H @ v - E * v) < 1e-12 * scale
        assert np.allclose(s.vectors @ s.vectors.T, np.eye(3), atol=1e-12)
        assert 0 < s.theta < np.pi / 2

    def test_matches_numerical_eigenvalues(self):
        cfg = ModelConfig(5, 20)
        for z in np.linspace(0, 20, 11):
            num = eigensystem(hamiltonian(z, cfg)).energies
            assert np.allclose(num, analytic_spectrum(z, cfg).energies, atol=1e-12)

    def test_rejects_absorption(self):
        with pytest.raises(ConfigError):
            analytic_spectrum(1.0, ModelConfig(5, 10, 0.1, Site.TARGET))

    def test_dark_state_helper(self):
        cfg = ModelConfig(4, 12)
        assert np.allclose(dark_state(3.0, cfg), analytic_spectrum(3.0, cfg).vectors[1])


class TestPerturbation:
    def test_midpoint_target(self):
        side, mid, side2 = perturbative_imag_shifts(5.0, ModelConfig(5, 10, 0.1, Site.TARGET))
        assert mid == pytest.approx(-0.05) and side == pytest.approx(-0.025) and side2 == side

    def test_zero_gamma(self):
        for site in Site:
            assert np.allclose(perturbative_imag_shifts(2.0, ModelConfig(5, 10, 0.0, site)), 0)

    def test_none_site_returns_zeros(self):
        assert np.allclose(perturbative_imag_shifts(2.0, ModelConfig(5, 10, 0.3, Site.NONE)), 0)

    def test_central_site(self):
        side, mid, _ = perturbative_imag_shifts(1.0, ModelConfig(5, 10, 0.4, Site.CENTER))
        assert side == pytest.approx(-0.2) and mid == 0

    @given(a_st, L_st, z_frac, st.floats(0, 2), st.sampled_from([Site.TARGET, Site.CENTER, Site.INITIAL]))
    def test_sum_rule(self, a, L, t, g, site):
        side, mid, side2 = perturbative_imag_shifts(t * L, ModelConfig(a, L, g, site))
        assert side + mid + side2 == pytest.approx(-g, abs=1e-14)

    def test_initial_site_formula(self):
        cfg = ModelConfig(5, 20, 0.3, Site.INITIAL)
        theta, _ = mixing_angle(4.0, cfg)
        side, mid, _ = perturbative_imag_shifts(4.0, cfg)
        assert mid == pytest.approx(-0.3 * np.sin(theta) ** 2)
        assert side == pytest.approx(-0.15 * np.cos(theta) ** 2)


class TestPerturbedDarkState:
    def test_reduces_to_dark_state(self):
        cfg = ModelConfig(5, 10, 0.0, Site.TARGET)
        assert np.allclose(perturbed_dark_state(2.0, cfg), dark_state(2.0, cfg))

    def test_midpoint_value(self):
        psi = perturbed_dark_state(5.0, ModelConfig(5, 10, 0.5, Site.TARGET))
        assert psi[1] == pytest.approx(0.17677669529663687j)

    def test_requires_target(self):
        with pytest.raises(ConfigError):
            perturbed_dark_state(1.0, ModelConfig(5, 10, 0.5, Site.INITIAL))

    def test_second_order_error(self):
        # exact dark eigenvector vs first-order form: halving gamma cuts the error by ~4
        from wgstirap.eigen import instantaneous_frame
        errs = []
        for g in (0.1, 0.05, 0.025):
            cfg = ModelConfig(5, 10, g, Site.TARGET)
            errs.append(np.max(np.abs(instantaneous_frame(5.0, cfg).vectors[1]
                                      - perturbed_dark_state(5.0, cfg))))
        r = np.array(errs[:-1]) / np.array(errs[1:])
        assert np.all(np.abs(r - 4) < 0.4), r


class TestExceptionalPoints:
    def test_location(self):
        (p,) = ep3_locations(ModelConfig(5, 1))
        assert p.n == 0
        assert p.z == pytest.approx(0.5 + 0.15707963267948966j)

    def test_ordering_and_conjugate_branch(self):
        pts = ep3_locations(ModelConfig(5, 1), -1, 1)
        assert [p.n for p in pts] == [-1, 0, 1]
        assert pts[0].z == pytest.approx(np.conj(pts[1].z))
        assert all(p.z.real == 0.5 for p in pts)
        assert abs(pts[1].z.imag) <= abs(pts[2].z.imag)

    def test_requires_positive_a(self):
        with pytest.raises(ConfigError):
            ep3_locations(ModelConfig(0, 1))

    @pytest.mark.parametrize("a,L,n", [(5, 1, 0), (5, 1, -1), (2, 30, 0), (8, 7, 1)])
    def test_coalescence(self, a, L, n):
        cfg = ModelConfig(a, L)
        assert coalescence_residual(ep3_location_mp(cfg, n), cfg) < 1e-8

    def test_negative_control(self):
        assert coalescence_residual(0.5 + 0.1j, ModelConfig(5, 1)) > 1e-2


class TestNonadiabaticCoupling:
    def test_midpoint(self):
        cfg = ModelConfig(5, 10)
        assert nonadiabatic_coupling_analytic(5.0, cfg) == pytest.approx(0.3535533905932738)
        zs = np.linspace(0, 10, 101)
        assert np.argmax(nonadiabatic_coupling_analytic(zs, cfg)) == 50

    def test_against_finite_difference(self):
        cfg = ModelConfig(5, 10)
        h = 1e-5 * cfg.L
        for z in (2.0, 5.0, 7.3):
            dphi0 = (analytic_spectrum(z + h, cfg).vectors[1] - analytic_spectrum(z - h, cfg).vectors[1]) / (2 * h)
            V = analytic_spectrum(z, cfg).vectors
            for j in (0, 2):
                assert abs(V[j] @ dphi0) == pytest.approx(nonadiabatic_coupling_analytic(z, cfg), abs=1e-6)
