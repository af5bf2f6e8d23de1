import numpy as np
import pytest

from vortexlab.grid import Grid, Profile
from vortexlab.operators import _normal_derivative_matrix, integrate_profile
from vortexlab.params import PhysParams
from vortexlab.profiles import (
    diffusion_wave,
    diffusion_wave_dt,
    theta,
    theta_jet,
    vortex_layer_dt,
    vortex_layer_velocity,
    vortex_layer_velocity_jet,
    vortex_layer_vorticity,
    wave_speed,
)

P_UNIT = PhysParams(rho_bar=1.0, u_bar=(1.0,), mu=1.0, eps=0.5, t0=1.0, Lambda=1.0)


class TestTheta:
    def test_origin(self):
        assert theta(0.0, P_UNIT) == 0.0

    def test_saturation(self):
        assert theta(50.0, P_UNIT) == pytest.approx(1.0, abs=1e-15)
        assert theta(-50.0, P_UNIT) == pytest.approx(-1.0, abs=1e-15)

    def test_value_at_two(self):
        # rho = mu = 1, xi = 2: erf(1), frozen from quadrature of the defining integral
        assert theta(2.0, P_UNIT) == pytest.approx(0.8427007929497148, rel=1e-12)

    def test_oddness(self):
        xi = np.linspace(0.0, 6.0, 200)
        assert np.max(np.abs(theta(xi, P_UNIT) + theta(-xi, P_UNIT))) <= 1e-14

    def test_monotone(self):
        xi = np.linspace(-4, 4, 300)
        assert np.all(np.diff(theta(xi, P_UNIT)) > 0)

    def test_jet_consistency(self):
        # jet derivative levels against centered differences of theta itself
        x = np.linspace(-3, 3, 41)
        s = 2.3
        jet = theta_jet(x, s, P_UNIT)
        h = 1e-4
        fd1 = (theta((x + h) / np.sqrt(s), P_UNIT) - theta((x - h) / np.sqrt(s), P_UNIT)) / (2 * h)
        assert np.max(np.abs(jet.order(1) - fd1)) < 1e-7


class TestLayer:
    def test_center_zero(self):
        assert vortex_layer_velocity(0.0, 1.0, P_UNIT)[0] == 0.0

    def test_degenerate_constant_state(self):
        p = PhysParams(u_bar=(0.0,), mu=1.0, t0=1.0)
        comps = vortex_layer_velocity(np.linspace(-5, 5, 11), 3.0, p)
        assert np.max(np.abs(comps[0])) == 0.0

    def test_point_value(self):
        # rho=mu=1, t+t0=1, x3=2: Theta(2) = erf(1)
        val = vortex_layer_velocity(2.0, 0.0, P_UNIT)[0]
        assert val == pytest.approx(0.8427007929497148, rel=1e-12)

    def test_far_field_limits(self):
        comps = vortex_layer_velocity(np.array([-80.0, 80.0]), 0.0, P_UNIT)
        assert comps[0] == pytest.approx([-1.0, 1.0], abs=1e-15)

    def test_heat_equation_dt(self):
        x = np.linspace(-6, 6, 101)
        h = 1e-5
        fd = (
            np.asarray(vortex_layer_velocity(x, 1.0 + h, P_UNIT)[0])
            - np.asarray(vortex_layer_velocity(x, 1.0 - h, P_UNIT)[0])
        ) / (2 * h)
        exact = vortex_layer_dt(x, 1.0, P_UNIT)[0]
        assert np.max(np.abs(fd - exact)) < 1e-8


class TestVorticity:
    def test_zero_background(self):
        p = PhysParams(u_bar=(0.0,), mu=1.0)
        assert np.max(np.abs(vortex_layer_vorticity(np.linspace(-2, 2, 9), 0.0, p, age=1.0))) == 0.0

    def test_peak_value(self):
        # peak at x3 = 0 equals sqrt(rho/pi) / sqrt(mu age) |u_bar|
        p = PhysParams(rho_bar=2.0, u_bar=(0.5,), mu=0.3)
        age = 4.0
        peak = vortex_layer_vorticity(0.0, 0.0, p, age=age)
        assert peak == pytest.approx(np.sqrt(2.0 / np.pi) / np.sqrt(0.3 * age) * 0.5, rel=1e-13)

    def test_unit_peak(self):
        assert vortex_layer_vorticity(0.0, 0.0, P_UNIT, age=1.0) == pytest.approx(
            0.5641895835477563, rel=1e-12
        )

    def test_matches_velocity_derivative(self):
        g = Grid(d=1, n_perp=2, L=12.0, n3=512)
        x = g.x3()
        u = vortex_layer_velocity(x, 0.0, P_UNIT, age=2.0)[0]
        D1 = _normal_derivative_matrix(g.n3, g.h3, 1)
        omega = vortex_layer_vorticity(x, 0.0, P_UNIT, age=2.0)
        assert np.max(np.abs(D1 @ u - omega)) < 1e-7

    def test_two_tangential_components(self):
        p = PhysParams(u_bar=(1.0, -2.0), mu=1.0)
        w1, w2 = vortex_layer_vorticity(0.0, 0.0, p, age=1.0)
        assert w2 == pytest.approx(-2.0 * w1)


class TestDiffusionWaves:
    @pytest.mark.parametrize("t", [0.0, 3.0, 10.0])
    def test_unit_mass(self, t):
        p = PhysParams(mu=0.5, Lambda=2.0, u_bar=(0.0,))
        g = Grid(d=1, n_perp=2, L=40.0, n3=2048)
        prof = Profile(g, diffusion_wave(g.x3(), t, p))
        assert integrate_profile(prof) == pytest.approx(1.0, abs=1e-10)

    def test_center_value(self):
        p = PhysParams(rho_bar=1.0, mu=1.0, Lambda=1.0, u_bar=(0.0,))
        assert diffusion_wave(0.0, 0.0, p) == pytest.approx(0.28209479177387814, rel=1e-13)

    def test_positive(self):
        p = PhysParams(mu=0.5, Lambda=1.0, u_bar=(0.0,), eps=0.5)
        vals = diffusion_wave(np.linspace(-30, 30, 301), 1.0, p, "plus")
        assert np.all(vals > 0)

    def test_translation_identity(self):
        p = PhysParams(mu=0.5, Lambda=2.0, u_bar=(0.0,), eps=0.25)
        x = np.linspace(-30, 30, 101)
        t = 1.5
        shift = wave_speed(p, "plus") * (t + p.Lambda)
        assert np.array_equal(
            diffusion_wave(x, t, p, "plus"), diffusion_wave(x - shift, t, p, "center")
        )
        shift_m = wave_speed(p, "minus") * (t + p.Lambda)
        assert np.array_equal(
            diffusion_wave(x, t, p, "minus"), diffusion_wave(x - shift_m, t, p, "center")
        )

    def test_transport_diffusion_equation(self):
        # one-sided time difference vs (mu/rho) d3^2 - c d3, discrete in space
        p = PhysParams(mu=0.5, Lambda=2.0, u_bar=(0.0,), eps=0.5)
        g = Grid(d=1, n_perp=2, L=30.0, n3=2048)
        x = g.x3()
        delta = 1e-3
        D2 = _normal_derivative_matrix(g.n3, g.h3, 2)
        for branch in ("center", "plus", "minus"):
            fd = (diffusion_wave(x, delta, p, branch) - diffusion_wave(x, 0.0, p, branch)) / delta
            rhs = p.mu / p.rho_bar * (D2 @ diffusion_wave(x, 0.0, p, branch))
            if branch != "center":
                D1 = _normal_derivative_matrix(g.n3, g.h3, 1)
                rhs = rhs - wave_speed(p, branch) * (D1 @ diffusion_wave(x, 0.0, p, branch))
            scale = np.max(np.abs(fd))
            assert np.max(np.abs(fd - rhs)) < 2e-3 * scale + 1e-12

    def test_exact_dt(self):
        p = PhysParams(mu=0.5, Lambda=2.0, u_bar=(0.0,), eps=0.5)
        x = np.linspace(-20, 20, 101)
        h = 1e-5
        for branch in ("center", "plus", "minus"):
            fd = (diffusion_wave(x, 1.0 + h, p, branch) - diffusion_wave(x, 1.0 - h, p, branch)) / (2 * h)
            assert np.max(np.abs(fd - diffusion_wave_dt(x, 1.0, p, branch))) < 1e-8

    def test_mass_conservation_over_time(self):
        # mass stays within 1e-10 while the support is >= 5 sigma from the edge
        p = PhysParams(mu=0.5, Lambda=1.0, u_bar=(0.0,))
        g = Grid(d=1, n_perp=2, L=40.0, n3=2048)
        masses = []
        for t in np.linspace(0.0, 20.0, 9):
            sigma = np.sqrt(2.0 * p.mu * (t + p.Lambda) / p.rho_bar)
            assert g.L > 5 * sigma
            masses.append(integrate_profile(Profile(g, diffusion_wave(g.x3(), t, p))))
        assert np.max(np.abs(np.array(masses) - 1.0)) < 1e-10


class TestLayerIsDiscreteSolution:
    def test_residual_fourth_order(self):
        # rho = rho_bar, u = layer: the only nonzero residual is the viscous
        # balance rho du/dt - mu d3^2 u, which the analytic dt makes O(h^4)
        p = PhysParams(rho_bar=1.0, u_bar=(1.0,), mu=0.5, t0=1.0)
        errs = []
        for n3 in (256, 512):
            g = Grid(d=1, n_perp=2, L=15.0, n3=n3)
            x = g.x3()
            D2 = _normal_derivative_matrix(g.n3, g.h3, 2)
            resid = p.rho_bar * vortex_layer_dt(x, 0.0, p)[0] - p.mu * (
                D2 @ vortex_layer_velocity(x, 0.0, p)[0]
            )
            errs.append(np.max(np.abs(resid)))
        assert errs[0] / errs[1] > 8.0  # at least ~3rd order, expect 4th

    def test_jet_matches_velocity(self):
        p = PhysParams(rho_bar=1.2, u_bar=(0.7,), mu=0.4, t0=2.0)
        x = np.linspace(-8, 8, 81)
        jets = vortex_layer_velocity_jet(x, 1.0, p)
        vals = vortex_layer_velocity(x, 1.0, p)
        assert np.allclose(jets[0].value, vals[0], atol=1e-14)
