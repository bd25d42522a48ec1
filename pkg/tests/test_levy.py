import math

import numpy as np
import pytest
from scipy import integrate, stats

from jumpparticles.coefficients import CoefficientModel, zero
from jumpparticles.errors import ModelError, NonConvergentTailError
from jumpparticles.levy import (LevyMeasureModel, cbar_moment, epsilon_m, nu_mass_within, tail_sigma,
                                theta_lower_bound)
from jumpparticles.models import alpha_stable_inverted, build_model, lebesgue
from jumpparticles.streams import StreamFamily


def radial_model(d=1, profile=lambda r: np.ones_like(r), **kw):
    return LevyMeasureModel(d=d, density=lambda z: profile(np.linalg.norm(z, axis=1)), profile=profile, **kw)


def nonradial_line():
    # h(z) = 1 + 0.5 tanh(z): not symmetric, rejection sampled
    return LevyMeasureModel(d=1, density=lambda z: 1 + 0.5 * np.tanh(z[:, 0]), radial=False)


class TestAnnulusMass:
    def test_lebesgue_line(self):
        assert lebesgue(1).annulus_mass(3) == pytest.approx(2.0)

    def test_lebesgue_plane(self):
        assert lebesgue(2).annulus_mass(2) == pytest.approx(3 * math.pi, rel=1e-12)

    def test_alpha_stable_closed_form_and_quadrature(self):
        m = alpha_stable_inverted(0.5)
        assert m.annulus_mass(2) == pytest.approx(4 * (math.sqrt(2) - 1), rel=1e-14)
        assert m.annulus_mass(1) == 0.0
        quad = radial_model(profile=m.profile, support_lower_radius=1.0)
        assert quad.annulus_mass(2) == pytest.approx(4 * (math.sqrt(2) - 1), rel=1e-9)

    def test_quadrature_matches_closed_form_in_3d(self):
        m = radial_model(d=3)
        assert m.annulus_mass(2) == pytest.approx(4 / 3 * math.pi * 7, rel=1e-9)

    @pytest.mark.parametrize("model", [lebesgue(1), lebesgue(2), alpha_stable_inverted(0.5), nonradial_line()])
    def test_disjoint_cover(self, model):
        for K in range(1, 6):
            total = sum(model.annulus_mass(k) for k in range(1, K + 1))
            if model.radial:
                direct = integrate.quad(lambda r: model.shell_density(r)[0], 0, K, points=list(range(1, K)))[0]
            else:
                direct = integrate.quad(lambda z: model.density(np.array([[z]]))[0], -K, K)[0]
            assert total == pytest.approx(direct, rel=1e-8)

    def test_ring_index_bounds(self):
        with pytest.raises(ValueError):
            lebesgue(1, max_ring=4).annulus_mass(5)


class TestSampler:
    @pytest.mark.parametrize("k", [1, 2, 3, 4])
    def test_lebesgue_radius_ks(self, k):
        z = lebesgue(1).sample_in_annulus(k, StreamFamily(k).view("amp", np.arange(100_000)))
        r = np.abs(z[:, 0])
        assert np.all((r > k - 1) & (r <= k))
        assert stats.kstest(r, stats.uniform(loc=k - 1, scale=1).cdf).pvalue > 1e-3

    @pytest.mark.parametrize("k", [1, 2, 3, 4])
    def test_plane_radius_ks(self, k):
        z = lebesgue(2).sample_in_annulus(k, StreamFamily(10 + k).view("amp", np.arange(100_000)))
        r = np.linalg.norm(z, axis=1)
        cdf = lambda x: (np.clip(x, k - 1, k) ** 2 - (k - 1) ** 2) / (k ** 2 - (k - 1) ** 2)
        assert stats.kstest(r, cdf).pvalue > 1e-3
        angle = np.arctan2(z[:, 1], z[:, 0])
        assert stats.kstest(angle, stats.uniform(loc=-math.pi, scale=2 * math.pi).cdf).pvalue > 1e-3

    @pytest.mark.parametrize("k", [2, 3, 4])
    def test_alpha_stable_ks(self, k):
        m = alpha_stable_inverted(0.5)
        z = m.sample_in_annulus(k, StreamFamily(20 + k).view("amp", np.arange(100_000)))
        r = np.abs(z[:, 0])
        cdf = lambda x: (np.sqrt(np.clip(x, k - 1, k)) - math.sqrt(k - 1)) / (math.sqrt(k) - math.sqrt(k - 1))
        assert stats.kstest(r, cdf).pvalue > 1e-3

    def test_alpha_stable_mean_radius(self):
        z = alpha_stable_inverted(0.5).sample_in_annulus(2, StreamFamily(7).view("amp", np.arange(100_000)))
        r = np.abs(z[:, 0])
        expected = (2 / 3 * (2 ** 1.5 - 1)) / (2 * (math.sqrt(2) - 1))
        assert abs(r.mean() - expected) <= 3 * r.std() / math.sqrt(r.size)
        assert expected == pytest.approx(1.47140, abs=1e-5)

    def test_uniform_ring_mean(self):
        z = lebesgue(1).sample_in_annulus(2, StreamFamily(8).view("amp", np.arange(100_000)))
        r = np.abs(z[:, 0])
        assert abs(r.mean() - 1.5) <= 3 * r.std() / math.sqrt(r.size)

    def test_signs_balanced(self):
        z = lebesgue(1).sample_in_annulus(1, StreamFamily(9).view("amp", np.arange(100_000)))
        assert abs(np.mean(z > 0) - 0.5) < 0.01

    def test_rejection_sampler_law(self):
        m = nonradial_line()
        z = m.sample_in_annulus(2, StreamFamily(1).view("amp", np.arange(100_000)))[:, 0]
        assert np.all((np.abs(z) > 1) & (np.abs(z) <= 2))
        mass = m.annulus_mass(2)
        cdf_pos = lambda a: integrate.quad(lambda t: 1 + 0.5 * math.tanh(t), 1, a)[0]
        # P(Z > 0) = mu((1,2]) / mu(I_2)
        assert abs(np.mean(z > 0) - cdf_pos(2) / mass) < 4 * math.sqrt(0.25 / z.size)

    def test_streams_determine_samples(self):
        m = lebesgue(2)
        a = m.sample_in_annulus(3, StreamFamily(1).view("amp", np.arange(100)))
        b = m.sample_in_annulus(3, StreamFamily(1).view("amp", np.arange(100)))
        assert np.array_equal(a, b)

    def test_empty_ring_rejected(self):
        with pytest.raises(ModelError):
            alpha_stable_inverted(0.5).sample_in_annulus(1, StreamFamily(0).view("amp", np.arange(3)))


class TestTailQuantities:
    def setup_method(self):
        self.levy, self.coeffs = build_model("example1-exp", {"a1": 1.0, "a2": 2.0, "p_decay": 1.0, "d": 1})

    def test_a_closed_form(self):
        assert tail_sigma(self.levy, self.coeffs, 5, 1.0) == pytest.approx(math.exp(-5), rel=1e-6)

    def test_a_scales_with_root_T(self):
        assert tail_sigma(self.levy, self.coeffs, 5, 4.0) == pytest.approx(2 * math.exp(-5), rel=1e-6)

    def test_eps_closed_form(self):
        assert epsilon_m(self.levy, self.coeffs, 5) == pytest.approx(18 * math.exp(-5), rel=1e-6)

    def test_zero_envelopes(self):
        assert tail_sigma(self.levy, zero(1), 3, 2.0) == 0.0
        assert epsilon_m(self.levy, zero(1), 3) == 0.0

    def test_monotone_in_M(self):
        eps = [epsilon_m(self.levy, self.coeffs, M) for M in range(1, 8)]
        a = [tail_sigma(self.levy, self.coeffs, M, 1.0) for M in range(1, 8)]
        assert all(x >= y for x, y in zip(eps, eps[1:]))
        assert all(x >= y for x, y in zip(a, a[1:]))

    def test_tail_additivity(self):
        M, Mp = 5, 2
        inner = self.levy.integrate_radial(self.coeffs.lower, Mp, M)
        lhs = tail_sigma(self.levy, self.coeffs, M, 1.0) ** 2 + inner
        assert lhs == pytest.approx(tail_sigma(self.levy, self.coeffs, Mp, 1.0) ** 2, rel=1e-8)

    def test_divergent_tail_detected(self):
        flat = CoefficientModel(1, self.coeffs.drift, self.coeffs.jump,
                                envelope=lambda r: 1.0 / np.sqrt(1 + np.asarray(r, dtype=float)),
                                lower=lambda r: 1.0 / (1 + np.asarray(r, dtype=float)))
        with pytest.raises(NonConvergentTailError):
            tail_sigma(self.levy, flat, 5, 1.0)


class TestMoments:
    def test_example1_exp_second_moment(self):
        levy, coeffs = build_model("example1-exp", {"a1": 1.0, "p_decay": 1.0, "d": 1})
        assert cbar_moment(levy, coeffs, 2).value == pytest.approx(2.0, rel=1e-8)

    def test_example1_poly_second_moment(self):
        levy, coeffs = build_model("example1-poly", {"d": 1})
        assert cbar_moment(levy, coeffs, 2).value == pytest.approx(math.pi / math.sqrt(2), rel=1e-6)

    def test_zero_envelope(self):
        assert cbar_moment(lebesgue(1), zero(1), 3).value == 0.0

    def test_divergent_moment(self):
        slow = CoefficientModel(1, zero(1).drift, zero(1).jump,
                                envelope=lambda r: 1.0 / np.sqrt(1 + np.asarray(r, dtype=float)))
        # |cbar|^2 ~ 1/|z| is not Lebesgue integrable
        with pytest.raises(NonConvergentTailError, match="moment fails"):
            cbar_moment(lebesgue(1), slow, 2)

    def test_order_below_one_rejected(self):
        with pytest.raises(ModelError):
            cbar_moment(lebesgue(1), zero(1), 0.5)


class TestTheta:
    def test_example1_exp_p_equals_d(self):
        levy, coeffs = build_model("example1-exp", {"a2": 2.0, "p_decay": 1.0, "d": 1})
        th = theta_lower_bound(levy, coeffs)
        assert not th.infinite
        assert th.value == pytest.approx(0.5, rel=0.1)

    def test_example1_poly_infinite(self):
        assert theta_lower_bound(*build_model("example1-poly", {"d": 1})).infinite

    def test_example2_infinite(self):
        assert theta_lower_bound(*build_model("example2-alpha-stable", {})).infinite

    def test_finite_measure_gives_zero(self):
        finite = radial_model(profile=lambda r: np.exp(-np.asarray(r, dtype=float)))
        th = theta_lower_bound(finite, build_model("example1-exp", {})[1])
        assert th.value == 0.0 and not th.infinite

    def test_nu_mass_counts_half_shells(self):
        # Lebesgue on the line: each shell [k-3/4, k-1/4] carries mass 2 * 1/2
        assert nu_mass_within(lebesgue(1), 10.0) == pytest.approx(10.0)
        assert nu_mass_within(lebesgue(1), 0.5) == pytest.approx(0.5)

    def test_grid_validation(self):
        levy, coeffs = build_model("example1-exp", {})
        with pytest.raises(ModelError):
            theta_lower_bound(levy, coeffs, u_grid=(10.0, 100.0))
