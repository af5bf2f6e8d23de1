import numpy as np
import pytest

from vortexlab.ansatz import (
    Alphas,
    AnsatzSpec,
    InitialPerturbation,
    ansatz_error_terms,
    build_ansatz,
    compute_alphas,
    envelope_bound_monitor,
    zero_mass_check,
)
from vortexlab.errors import DensityFloorViolation
from vortexlab.grid import Field, Grid, field_from_function
from vortexlab.operators import _normal_derivative_matrix, integrate_profile, zero_mode
from vortexlab.params import PhysParams
from vortexlab.profiles import diffusion_wave, theta, vortex_layer_velocity
from vortexlab.diagnostics import fit_decay

GRID = Grid(d=1, n_perp=8, L=30.0, n3=1024)
PARAMS = PhysParams(rho_bar=1.0, u_bar=(0.7,), mu=0.5, lam=0.1, gamma=1.4, eps=0.5, t0=1.0, Lambda=2.0)


def perturbation(b0_fn=None, v_fns=None, params=PARAMS, grid=GRID):
    zero = lambda *xs: np.zeros(grid.shape)
    b0 = field_from_function(grid, b0_fn or zero)
    v_fns = v_fns or [None] * (grid.d + 1)
    v0 = [field_from_function(grid, fn or zero) for fn in v_fns]
    return InitialPerturbation(grid, params, b0, v0)


def momentum_perturbation(b0_vals, w_vals, params=PARAMS, grid=GRID):
    b0 = Field(grid, np.broadcast_to(b0_vals, grid.shape).copy())
    w = [Field(grid, np.broadcast_to(wv, grid.shape).copy()) for wv in w_vals]
    return InitialPerturbation.from_momentum(grid, params, b0, w)


class TestComputeAlphas:
    def test_zero_perturbation(self):
        a = compute_alphas(perturbation())
        assert a.a0 == a.a3 == 0.0
        # the auxiliary-shift integral cancels by oddness, up to quadrature round-off
        assert abs(a.a_perp[0]) < 1e-12

    def test_unit_mass_density_bump_splits_evenly(self):
        x3 = GRID.x3()
        bump = diffusion_wave(x3, 0.0, PARAMS)  # unit mass
        ip = momentum_perturbation(bump, [np.zeros_like(x3)] * 2)
        a = compute_alphas(ip)
        assert a.a0 == pytest.approx(0.5, abs=1e-10)
        assert a.a3 == pytest.approx(0.5, abs=1e-10)

    def test_right_moving_combination(self):
        # b0 = theta, w03 = a_bar theta: pure plus-family data
        x3 = GRID.x3()
        bump = diffusion_wave(x3, 0.0, PARAMS)
        a_bar = PARAMS.sound_speed
        ip = momentum_perturbation(bump, [np.zeros_like(x3), a_bar * bump])
        a = compute_alphas(ip)
        assert a.a0 == pytest.approx(0.0, abs=1e-10)
        assert a.a3 == pytest.approx(1.0, abs=1e-10)

    def test_vector_identity(self):
        # int (eps b0, w0)_flat = a1 r1 + eps (a0 r0- + a3 r3+)
        x3 = GRID.x3()
        rng = np.random.default_rng(3)

        def smooth(seed_scale, width, center):
            return seed_scale * np.exp(-((x3 - center) ** 2) / width)

        b_vals = smooth(0.3, 6.0, 1.0)
        w_vals = [smooth(-0.2, 4.0, -2.0), smooth(0.15, 5.0, 0.5)]
        ip = momentum_perturbation(b_vals, w_vals)
        a = compute_alphas(ip)
        p = PARAMS
        lhs = np.array(
            [
                p.eps * integrate_profile(zero_mode(ip.b0)),
                integrate_profile(zero_mode(ip.w_tilde0[0])),
                integrate_profile(zero_mode(ip.w_tilde0[1])),
            ]
        )
        r0_minus = np.array([1.0, -p.u_bar[0], -p.sound_speed / p.eps])
        r3_plus = np.array([1.0, p.u_bar[0], p.sound_speed / p.eps])
        r1 = np.array([0.0, 1.0, 0.0])
        rhs = a.a_perp[0] * r1 + p.eps * (a.a0 * r0_minus + a.a3 * r3_plus)
        assert np.allclose(lhs, rhs, atol=1e-10)

    def test_linearity(self):
        x3 = GRID.x3()
        b1, w1 = np.exp(-x3 ** 2), [np.exp(-(x3 - 1) ** 2), 0.3 * np.exp(-x3 ** 2)]
        b2, w2 = 0.5 * np.cos(x3 / 9) * np.exp(-x3 ** 2 / 8), [np.zeros_like(x3), np.exp(-(x3 + 2) ** 2)]
        a1 = compute_alphas(momentum_perturbation(b1, w1))
        a2 = compute_alphas(momentum_perturbation(b2, w2))
        a12 = compute_alphas(momentum_perturbation(b1 + 2 * b2, [u + 2 * v for u, v in zip(w1, w2)]))
        assert a12.a0 == pytest.approx(a1.a0 + 2 * a2.a0, rel=1e-11, abs=1e-13)
        assert a12.a3 == pytest.approx(a1.a3 + 2 * a2.a3, rel=1e-11, abs=1e-13)
        assert a12.a_perp[0] == pytest.approx(a1.a_perp[0] + 2 * a2.a_perp[0], rel=1e-11, abs=1e-13)

    def test_dependence_structure(self):
        # a0, a3 see only (b0, w03)_flat; a_perp only (w0i, w03)_flat
        x3 = GRID.x3()
        base_b = np.exp(-x3 ** 2)
        base_w = [0.2 * np.exp(-x3 ** 2 / 2), -0.1 * np.exp(-(x3 - 1) ** 2)]
        a_ref = compute_alphas(momentum_perturbation(base_b, base_w))
        # change the tangential momentum only
        a_mod = compute_alphas(
            momentum_perturbation(base_b, [base_w[0] + np.exp(-x3 ** 2 / 3), base_w[1]])
        )
        assert a_mod.a0 == pytest.approx(a_ref.a0, abs=1e-12)
        assert a_mod.a3 == pytest.approx(a_ref.a3, abs=1e-12)
        assert a_mod.a_perp[0] != pytest.approx(a_ref.a_perp[0])
        # change b0 only: tangential amplitudes built from w alone stay put
        a_mod2 = compute_alphas(momentum_perturbation(2.0 * base_b, base_w))
        assert a_mod2.a_perp[0] == pytest.approx(a_ref.a_perp[0], abs=1e-12)

    def test_acoustic_homogeneity(self):
        # scaling (b0, w03) by s scales (a0, a3) by exactly s
        x3 = GRID.x3()
        b = np.exp(-x3 ** 2)
        w = [0.3 * np.exp(-x3 ** 2 / 5), 0.4 * np.exp(-x3 ** 2 / 3)]
        a1 = compute_alphas(momentum_perturbation(b, w))
        a2 = compute_alphas(momentum_perturbation(0.5 * b, [w[0], 0.5 * w[1]]))
        assert a2.a0 == pytest.approx(0.5 * a1.a0, rel=1e-12)
        assert a2.a3 == pytest.approx(0.5 * a1.a3, rel=1e-12)

    @pytest.mark.parametrize("Lam", [2.0, 9.0, 25.0])
    def test_oddness_cancellation(self, Lam):
        # int (Theta(x) - Theta(x / sqrt(Lam))) dx = 0
        g = Grid(d=1, n_perp=2, L=60.0, n3=4096)
        x3 = g.x3()
        from vortexlab.grid import Profile

        diff = Profile(g, theta(x3, PARAMS) - theta(x3 / np.sqrt(Lam), PARAMS))
        assert abs(integrate_profile(diff)) < 1e-10


class TestBuildAnsatz:
    def test_zero_alphas_give_pure_auxiliary_layer(self):
        spec = build_ansatz(Alphas(0.0, (0.0,), 0.0), PARAMS)
        x3 = np.linspace(-20, 20, 101)
        aux = vortex_layer_velocity(x3, 0.0, PARAMS, age=PARAMS.Lambda)[0]
        assert np.allclose(spec.rho(x3, 0.0), PARAMS.rho_bar, atol=1e-15)
        assert np.allclose(spec.m(x3, 0.0, 0), PARAMS.rho_bar * aux, atol=1e-14)
        assert np.max(np.abs(spec.m(x3, 0.0, 1))) == 0.0

    def test_zero_background_purely_acoustic(self):
        p = PhysParams(u_bar=(0.0,), mu=0.5, eps=0.5, Lambda=2.0)
        spec = build_ansatz(Alphas(0.2, (0.0,), 0.1), p)
        x3 = np.linspace(-20, 20, 101)
        assert np.max(np.abs(spec.m(x3, 1.0, 0))) == 0.0  # tangential momentum vanishes

    def test_density_floor_guard(self):
        with pytest.raises(DensityFloorViolation):
            build_ansatz(Alphas(50.0, (0.0,), 50.0), PARAMS)

    def test_tangential_momentum_difference_decay(self):
        # sup |m_perp - rho_bar u_aux| ~ (t + Lambda)^{-1/2}
        spec = build_ansatz(Alphas(0.1, (0.5,), -0.2), PARAMS)
        x3 = np.linspace(-200.0, 200.0, 8001)
        ts = np.linspace(5.0, 120.0, 30)
        sups = []
        for t in ts:
            aux = vortex_layer_velocity(x3, t, PARAMS, age=PARAMS.Lambda)[0]
            sups.append(np.max(np.abs(spec.m(x3, t, 0) - PARAMS.rho_bar * aux)))
        fit = fit_decay(ts + PARAMS.Lambda - 1.0, sups, window=(ts[0], ts[-1] + PARAMS.Lambda))
        assert fit.exponent == pytest.approx(-0.5, abs=0.05)

    def test_round_trip_text(self):
        spec = build_ansatz(Alphas(0.12, (-0.3,), 0.04), PARAMS)
        spec2 = AnsatzSpec.from_text(spec.to_text())
        assert spec2.alphas == spec.alphas
        assert spec2.params == spec.params


class TestErrorTerms:
    def test_zero_alphas_zero_errors(self):
        spec = build_ansatz(Alphas(0.0, (0.0,), 0.0), PARAMS)
        x3 = np.linspace(-25, 25, 201)
        F0, F = ansatz_error_terms(spec, x3, 1.0)
        assert np.max(np.abs(F0)) == 0.0
        assert max(np.max(np.abs(f)) for f in F) < 1e-16

    def test_center_wave_rides_the_layer_exactly(self):
        # a pure center wave keeps F identically zero: it solves the same heat
        # flow as the layer, so no residual is left to monitor
        spec = build_ansatz(Alphas(0.0, (0.5,), 0.0), PARAMS)
        x3 = np.linspace(-25, 25, 401)
        for t in (0.0, 2.0, 7.0):
            F0, F = ansatz_error_terms(spec, x3, t)
            assert np.max(np.abs(F0)) == 0.0
            assert max(np.max(np.abs(f)) for f in F) < 1e-15

    def test_mass_error_matches_written_formula(self):
        # F0 = (mu/rho)(a0 d3 theta_- + a3 d3 theta_+), independent of eps
        spec = build_ansatz(Alphas(0.3, (0.4,), -0.2), PARAMS)
        x3 = np.linspace(-30, 30, 301)
        from vortexlab.profiles import diffusion_wave_jet

        t = 1.3
        expect = (PARAMS.mu / PARAMS.rho_bar) * (
            0.3 * diffusion_wave_jet(x3, t, PARAMS, "minus").order(1)
            + (-0.2) * diffusion_wave_jet(x3, t, PARAMS, "plus").order(1)
        )
        F0, _ = ansatz_error_terms(spec, x3, t)
        assert np.allclose(F0, expect, atol=1e-16)

    @pytest.mark.parametrize("t", [0.0, 1.0])
    def test_discrete_residual_equivalence(self, t):
        # inserting (rho~, m~) into the equations with 4th-order differences
        # and subtracting the analytic (eps d3F0, d3F) converges at 4th order
        spec = build_ansatz(Alphas(0.3, (0.4,), -0.2), PARAMS)
        errs = []
        for n3 in (256, 512):
            g = Grid(d=1, n_perp=2, L=20.0, n3=n3)
            errs.append(max(_residual_gap(spec, g, t)))
        assert errs[0] / errs[1] > 8.0

    def test_envelope_monitor_zero_for_zero_alphas(self):
        spec = build_ansatz(Alphas(0.0, (0.0,), 0.0), PARAMS)
        out = envelope_bound_monitor(spec, np.linspace(-30, 30, 301), [0.0, 1.0], j_values=(0, 1))
        assert out["F_j0"] == 0.0
        assert out["F_j1"] == 0.0

    def test_acoustic_peak_tracks_characteristic(self):
        # amplitude large enough that the quadratic flux and pressure terms
        # (peaked on the characteristic) dominate the antisymmetric viscous ones
        p = PhysParams(rho_bar=1.0, u_bar=(0.7,), mu=0.05, lam=0.0, eps=0.25, t0=1.0, Lambda=2.0)
        spec = build_ansatz(Alphas(0.0, (0.0,), 1.2), p)
        g = Grid(d=1, n_perp=2, L=40.0, n3=2048)
        x3 = g.x3()
        lam = p.sound_speed / p.eps
        for t in (0.0, 1.0, 2.5):
            F3 = spec.F_jet(x3, t, 1).value
            peak = x3[np.argmax(np.abs(F3))]
            assert abs(peak - lam * (t + p.Lambda)) <= g.h3 + 1e-12

    def test_acoustic_error_sup_decay_rate(self):
        # |F0| <= C chi (t+Lambda)^{-1} E at j = 0 and F0 is a pure Gaussian
        # derivative, so its sup saturates the rate: exponent -1
        spec = build_ansatz(Alphas(0.25, (0.0,), 0.25), PARAMS)
        ts = np.linspace(2.0, 80.0, 25)
        sups = []
        for t in ts:
            c = PARAMS.sound_speed / PARAMS.eps * (t + PARAMS.Lambda)
            x3 = np.linspace(-c - 40, c + 40, 20001)
            sups.append(np.max(np.abs(spec.F0_jet(x3, t).value)))
        fit = fit_decay(ts + PARAMS.Lambda - 1.0, sups, window=(1.0, 100.0))
        assert fit.exponent == pytest.approx(-1.0, abs=0.05)

    def test_envelope_constants_finite_for_generic_ansatz(self):
        spec = build_ansatz(Alphas(0.2, (0.3,), -0.1), PARAMS)
        out = envelope_bound_monitor(
            spec, np.linspace(-40, 40, 1025), np.linspace(0.0, 50.0, 11), j_values=(0, 1, 2)
        )
        for key, val in out.items():
            assert np.isfinite(val)
            assert val >= 0.0


def _residual_gap(spec, grid, t):
    p = spec.params
    x3 = grid.x3()
    D1 = _normal_derivative_matrix(grid.n3, grid.h3, 1)
    D2 = _normal_derivative_matrix(grid.n3, grid.h3, 2)
    d = p.d
    gaps = []
    lhs = spec.rho_dt(x3, t) + D1 @ spec.m(x3, t, d)
    gaps.append(np.max(np.abs(lhs - p.eps * spec.F0_jet(x3, t).order(1))))
    rho = spec.rho(x3, t)
    m3 = spec.m(x3, t, d)
    for c in range(d + 1):
        flux = m3 * spec.m(x3, t, c) / rho
        if c == d:
            flux = flux + p.pressure(rho) / p.eps ** 2
        lhs = spec.m_dt(x3, t, c) + D1 @ flux - p.mu * (D2 @ spec.u(x3, t, c))
        if c == d:
            lhs = lhs - (p.mu + p.lam) * (D2 @ spec.u(x3, t, d))
        gaps.append(np.max(np.abs(lhs - spec.F_jet(x3, t, c).order(1))))
    return gaps


class TestZeroMass:
    def test_matched_state_has_zero_defect(self):
        # assemble the state exactly from the ansatz closures
        from vortexlab.solver import State

        spec = build_ansatz(Alphas(0.05, (0.2,), -0.08), PARAMS)
        g = Grid(d=1, n_perp=4, L=30.0, n3=1024)
        x3 = g.x3_broadcast()
        rho = Field(g, np.broadcast_to(spec.rho(x3[0], 0.0), g.shape).copy())
        m = [
            Field(g, np.broadcast_to(spec.m(x3[0], 0.0, c), g.shape).copy())
            for c in range(2)
        ]
        state = State(rho, m, 0.0)
        defect = zero_mass_check(state, spec)
        assert np.max(np.abs(defect)) < 1e-12

    def test_amplitude_shift_shows_in_defect(self):
        # raising a1 by 0.1 shifts the tangential-momentum defect by -0.1
        from vortexlab.solver import State

        base = build_ansatz(Alphas(0.05, (0.2,), -0.08), PARAMS)
        bumped = build_ansatz(Alphas(0.05, (0.3,), -0.08), PARAMS)
        g = Grid(d=1, n_perp=4, L=30.0, n3=1024)
        x3 = g.x3_broadcast()
        rho = Field(g, np.broadcast_to(base.rho(x3[0], 0.0), g.shape).copy())
        m = [
            Field(g, np.broadcast_to(base.m(x3[0], 0.0, c), g.shape).copy())
            for c in range(2)
        ]
        defect = zero_mass_check(State(rho, m, 0.0), bumped)
        assert defect[1] == pytest.approx(-0.1, abs=1e-6)
        assert abs(defect[0]) < 1e-10
        assert abs(defect[2]) < 1e-10


class TestInitialPerturbation:
    def test_momentum_identity(self):
        ip = perturbation(
            b0_fn=lambda x1, x3: 0.2 * np.sin(2 * np.pi * x1) * np.exp(-x3 ** 2),
            v_fns=[
                lambda x1, x3: 0.1 * np.cos(2 * np.pi * x1) * np.exp(-x3 ** 2 / 2),
                lambda x1, x3: 0.05 * np.exp(-x3 ** 2 / 3) * np.ones_like(x1),
            ],
        )
        p = PARAMS
        x3 = GRID.x3_broadcast()
        rho0 = p.rho_bar + p.eps * ip.b0.values
        aux = vortex_layer_velocity(x3, 0.0, p, age=p.Lambda)
        direct = rho0 * ip.u0[0].values - p.rho_bar * np.broadcast_to(aux[0], GRID.shape)
        assert np.max(np.abs(direct - ip.w_tilde0[0].values)) < 1e-13

    def test_from_momentum_round_trip(self):
        ip = perturbation(
            b0_fn=lambda x1, x3: 0.3 * np.exp(-x3 ** 2) * np.ones_like(x1),
            v_fns=[
                lambda x1, x3: 0.2 * np.exp(-x3 ** 2 / 2) * np.ones_like(x1),
                lambda x1, x3: -0.1 * np.exp(-x3 ** 2 / 4) * np.ones_like(x1),
            ],
        )
        ip2 = InitialPerturbation.from_momentum(GRID, PARAMS, ip.b0, ip.w_tilde0)
        for a, b in zip(ip.v0, ip2.v0):
            assert np.max(np.abs(a.values - b.values)) < 1e-12

    def test_chi_ignores_tangential_zero_mode(self):
        wide = perturbation(v_fns=[lambda x1, x3: np.exp(-x3 ** 2) * np.ones_like(x1), None])
        assert wide.chi == pytest.approx(0.0, abs=1e-12)
        assert wide.m0_norm > 1.0
