import numpy as np
import pytest

from minkwave import odelab as ol
from minkwave import profile
from minkwave.errors import (HypothesisFailed, HypothesisViolated,
                             NoContraction, NoZeroCrossing)

GRID = ol.LineGrid(Z=40.0, dz=1e-3)
COARSE = ol.LineGrid(Z=40.0, dz=4e-3)


def sech2(z):
    return 1.0 / np.cosh(z) ** 2


class TestDefect:
    eps, rho = 0.05, 0.3

    def setup_method(self, _):
        self.z = profile.fiber_grid(self.rho, self.eps)

    def test_exact_kink_with_analytic_derivative(self):
        v = profile.q_eps(self.z, self.eps)
        h = ol.compute_h(self.z, v, self.eps,
                         v_prime=profile.q_eps_prime(self.z, self.eps))
        assert np.abs(h).max() < 1e-12

    def test_translation_invariance(self):
        v = profile.q_eps(self.z - 0.04, self.eps)
        vp = profile.q_eps_prime(self.z - 0.04, self.eps)
        assert np.abs(ol.compute_h(self.z, v, self.eps, v_prime=vp)).max() < 1e-12

    def test_perturbation_expansion(self):
        # v = q_eps + eps*phi  =>  h = eps phi' + 2 q_eps phi + eps phi^2
        phi = np.exp(-((self.z) / 0.07) ** 2)
        phip = phi * (-2 * self.z / 0.07 ** 2)
        v = profile.q_eps(self.z, self.eps) + self.eps * phi
        vp = profile.q_eps_prime(self.z, self.eps) + self.eps * phip
        h = ol.compute_h(self.z, v, self.eps, v_prime=vp)
        expected = (self.eps * phip + 2 * profile.q_eps(self.z, self.eps) * phi
                    + self.eps * phi ** 2)
        assert np.abs(h - expected).max() < 1e-10

    def test_difference_path_converges_at_4th_order(self):
        errs = []
        for ppe in (16, 32):
            z = profile.fiber_grid(self.rho, self.eps, ppe)
            v = profile.q_eps(z, self.eps)
            h = ol.compute_h(z, v, self.eps)
            errs.append(np.abs(h[4:-4]).max())
        assert errs[0] / errs[1] > 10


class TestRescale:
    def test_zero_maps_to_zero(self):
        z = profile.fiber_grid(0.3, 0.05)
        w, h = ol.rescale(z, np.zeros_like(z), np.zeros_like(z), 0.05, 0.0,
                          grid=COARSE)
        assert np.abs(w).max() == 0.0 and np.abs(h).max() == 0.0

    def test_norm_identity_closed_form(self):
        # ||w_eps||_{H1_eps} = ||w||_{H1} for w_eps(y) = g(y - s0) smooth
        eps, s0 = 0.05, 0.04
        z = profile.fiber_grid(0.3, eps)
        width = 0.06
        g = lambda y: np.exp(-((y - s0) / width) ** 2)
        gp = lambda y: g(y) * (-2 * (y - s0) / width ** 2)
        w_eps = g(z)
        lhs_sq = (np.trapezoid(w_eps ** 2, z) / eps
                  + eps * np.trapezoid(gp(z) ** 2, z))
        w, _ = ol.rescale(z, w_eps, np.zeros_like(z), eps, s0, grid=COARSE,
                          w_eps_fn=g)
        wp = ol.diff4(w, COARSE.dz)
        rhs_sq = ol.h1_norm(w, COARSE.dz, derivative=wp) ** 2
        assert rhs_sq == pytest.approx(lhs_sq, rel=1e-6)

    def test_support_arithmetic(self):
        eps, s0 = 0.05, 0.1
        z = profile.fiber_grid(0.3, eps)
        h_eps = np.where(np.abs(z) < 0.3, 1.0, 0.0)
        _, h = ol.rescale(z, np.zeros_like(z), h_eps, eps, s0, grid=COARSE)
        zline = COARSE.z
        outside = np.abs(s0 + eps * zline) > 0.3 + 2 * eps * COARSE.dz
        assert np.abs(h[outside]).max() == 0.0

    def test_zero_crossing_finder(self):
        z = profile.fiber_grid(0.3, 0.05)
        v = profile.q_eps(z - 0.07, 0.05)
        assert ol.find_zero_crossing(z, v, 0.15) == pytest.approx(0.07, abs=1e-4)
        with pytest.raises(NoZeroCrossing):
            ol.find_zero_crossing(z, np.ones_like(z), 0.15)


class TestSolutionOperator:
    def test_zero_forcing(self):
        w1 = ol.apply_S(GRID, np.zeros_like(GRID.z), np.zeros_like(GRID.z))
        assert np.abs(w1).max() == 0.0

    def test_closed_form_kernel(self):
        # w0 = 0, h = sech^2: Phi = 2 ln cosh, so w1(s) = s sech^2(s)
        z = GRID.z
        w1 = ol.apply_S(GRID, np.zeros_like(z), sech2(z))
        assert np.abs(w1 - z * sech2(z)).max() < 1e-8

    def test_linearity_in_forcing(self):
        z = GRID.z
        w0 = 0.1 * np.exp(-z ** 2)
        h1 = np.exp(-z ** 2)
        h2 = z * np.exp(-np.abs(z))
        combined = ol.apply_S(GRID, w0, 0.3 * h1 + 0.7 * h2)
        split = 0.3 * ol.apply_S(GRID, w0, h1) + 0.7 * ol.apply_S(GRID, w0, h2)
        assert np.abs(combined - split).max() < 1e-10

    def test_hypothesis_ball_enforced(self):
        z = GRID.z
        big = 2.0 * np.exp(-z ** 2)          # H1 norm well above sqrt(2)
        with pytest.raises(HypothesisViolated):
            ol.apply_S(GRID, big, sech2(z))

    def test_output_bound_over_random_batch(self, rng):
        # measured operator norm ||S w0||_H1 / ||h||_L2 stays modest
        z = COARSE.z
        ratios = []
        for _ in range(100):
            k1, k2 = rng.uniform(0.3, 2.0, 2)
            a1, a2 = rng.uniform(-1, 1, 2)
            w0 = (a1 * np.sin(k1 * z) + a2 * np.cos(k2 * z)) * np.exp(-z ** 2 / 9)
            nrm = ol.h1_norm(w0, COARSE.dz)
            w0 *= rng.uniform(0.1, 0.95) * np.sqrt(2) / max(nrm, 1e-12)
            h = rng.uniform(-1, 1) * np.exp(-((z - rng.uniform(-2, 2)) / 1.5) ** 2)
            h *= rng.uniform(0.001, 0.05) / max(ol.l2_norm(h, COARSE.dz), 1e-12)
            w1 = ol.apply_S(COARSE, w0, h)
            wp = ol.s_derivative(COARSE, w0, w1, h)
            ratios.append(ol.h1_norm(w1, COARSE.dz, derivative=wp)
                          / ol.l2_norm(h, COARSE.dz))
        assert max(ratios) <= 10.0

    def test_sobolev_embedding_on_outputs(self, rng):
        z = COARSE.z
        for _ in range(20):
            h = rng.uniform(-0.05, 0.05) * np.exp(-z ** 2 / 4)
            w1 = ol.apply_S(COARSE, np.zeros_like(z), h)
            assert ol.sobolev_embedding_ok(w1, COARSE.dz)


class TestFixedPoint:
    def test_zero_forcing_one_iteration(self):
        w, iters, factors = ol.fixed_point(COARSE, np.zeros_like(COARSE.z))
        assert iters == 1
        assert np.abs(w).max() == 0.0

    def test_small_forcing_residual(self):
        z = GRID.z
        h = 0.01 * sech2(z)
        w, iters, factors = ol.fixed_point(GRID, h)
        assert np.abs(ol.ode_residual(GRID, w, h)).max() < 1e-8
        assert all(f < 1.0 for f in factors)

    def test_contraction_factors_shrink_with_forcing(self):
        z = COARSE.z
        base = sech2(z)
        base /= ol.l2_norm(base, COARSE.dz)
        peaks = []
        for amp in (5e-2, 1e-2, 1e-3):
            _, _, factors = ol.fixed_point(COARSE, amp * base)
            peaks.append(max(factors))
        assert peaks[0] < 1.0
        assert peaks[2] < peaks[1] < peaks[0]

    def test_response_ratio_stable(self):
        z = COARSE.z
        base = sech2(z)
        base /= ol.l2_norm(base, COARSE.dz)
        ratios = []
        for amp in (1e-3, 1e-2, 5e-2):
            w, _, _ = ol.fixed_point(COARSE, amp * base)
            ratios.append(ol.h1_norm(w, COARSE.dz) / amp)
        assert max(ratios) / min(ratios) < 2.0

    def test_hypothesis_gate(self):
        z = COARSE.z
        h = 0.2 * sech2(z)
        with pytest.raises(HypothesisViolated):
            ol.fixed_point(COARSE, h)

    def test_no_contraction_detected_for_large_forcing(self):
        z = COARSE.z
        h = 3.0 * sech2(z) / ol.l2_norm(sech2(z), COARSE.dz)
        with pytest.raises((NoContraction, HypothesisViolated)):
            ol.fixed_point(COARSE, h, enforce_hypothesis=False)

    def test_solution_solves_ode_pointwise(self):
        z = GRID.z
        h = 0.02 * z * np.exp(-z ** 2)
        w, _, _ = ol.fixed_point(GRID, h)
        res = ol.ode_residual(GRID, w, h)
        assert np.abs(res).max() < 10 * GRID.dz ** 2


class TestCoercivity:
    eps, rho = 0.05, 0.3

    def setup_method(self, _):
        self.z = profile.fiber_grid(self.rho, self.eps)

    def test_exact_kink(self):
        v = profile.q_eps(self.z, self.eps)
        rep = ol.coercivity_check(self.z, v, self.eps,
                                  vz=profile.q_eps_prime(self.z, self.eps))
        assert rep.lhs < 1e-20
        K = profile.second_moment_constant()
        assert rep.theta1 == pytest.approx(K * self.eps ** 2, rel=0.01)
        assert rep.holds and rep.floor_ok
        # restricted to the tube the excess is exponentially small but negative
        assert -1e-8 < rep.energy_excess < 0

    def test_perturbed_kink(self):
        chi_like = np.exp(-(self.z / 0.1) ** 2)
        pert = self.eps ** 1.5 * np.sin(self.z / self.eps) * chi_like
        pert_z = (self.eps ** 0.5 * np.cos(self.z / self.eps) * chi_like
                  + self.eps ** 1.5 * np.sin(self.z / self.eps)
                  * chi_like * (-2 * self.z / 0.01))
        v = profile.q_eps(self.z, self.eps) + pert
        vz = profile.q_eps_prime(self.z, self.eps) + pert_z
        rep = ol.coercivity_check(self.z, v, self.eps, vz=vz)
        assert rep.holds and rep.floor_ok
        assert rep.lhs > 0

    def test_wrong_width_interface_has_positive_excess(self):
        v = np.tanh(self.z / (self.eps / 4))
        d = 1e-8
        vz = (np.tanh((self.z + d) / (self.eps / 4))
              - np.tanh((self.z - d) / (self.eps / 4))) / (2 * d)
        rep = ol.coercivity_check(self.z, v, self.eps, vz=vz)
        assert rep.energy_excess > 0.5      # strictly positive energy gap
        assert rep.floor_ok

    def test_hypothesis_gate(self):
        v = np.zeros_like(self.z)        # tail misfit theta2 = rho^2 > c2
        with pytest.raises(HypothesisFailed):
            ol.coercivity_check(self.z, v, self.eps)

    def test_defect_ties_to_lhs(self):
        # int eps h^2 equals the coercivity LHS by definition
        v = profile.q_eps(self.z - 0.02, self.eps) + 0.01 * np.exp(-(self.z / 0.1) ** 2)
        vz = ol.diff4(v, self.z[1] - self.z[0])
        h = ol.compute_h(self.z, v, self.eps, v_prime=vz)
        rep = ol.coercivity_check(self.z, v, self.eps, vz=vz)
        from minkwave.numerics import simpson
        assert rep.lhs == pytest.approx(float(simpson(self.eps * h ** 2,
                                                      self.z[1] - self.z[0])),
                                        rel=1e-12)
