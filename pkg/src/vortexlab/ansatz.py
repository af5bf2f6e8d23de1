"""Mass-matched ansatz: wave amplitudes, closures, error terms, monitors.

The ansatz superposes the auxiliary shear layer with diffusion waves riding
the characteristic families of the normal-direction hyperbolic system.  The
four (d + 2 in general) amplitudes are fixed once from the initial data so
that the zero-mode perturbation of (rho, m) carries zero mass for all time;
the residual forcing it leaves in the equations is available in closed form
together with its normal derivatives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DensityFloorViolation
from .grid import Field, Grid, Profile
from .jets import Jet
from .operators import (
    integrate_profile,
    l2_norm,
    nonzero_mode,
    profile_h_s_norm,
    weighted_l2_norm,
    zero_mode,
    h_s_norm,
)
from .params import PhysParams
from .profiles import (
    diffusion_wave_dt,
    diffusion_wave_jet,
    theta_jet,
    vortex_layer_velocity,
)

_BRANCHES = ("minus", "plus")


@dataclass(frozen=True)
class Alphas:
    """Diffusion-wave amplitudes: acoustic pair (a0, a3) and tangential a_perp."""

    a0: float
    a_perp: tuple[float, ...]
    a3: float

    @property
    def as_tuple(self) -> tuple[float, ...]:
        return (self.a0, *self.a_perp, self.a3)


class InitialPerturbation:
    """Initial data split (eps*b0, v0) on top of the background layer.

    Velocity components are ordered tangential first, normal last, matching
    the field layout elsewhere.  Derived quantities (the auxiliary-frame
    velocity shift, the momentum perturbation, the smallness norms) are
    computed lazily and cached.
    """

    def __init__(self, grid: Grid, params: PhysParams, b0: Field, v0: list[Field]):
        if len(v0) != grid.d + 1:
            raise ValueError(f"need {grid.d + 1} velocity components, got {len(v0)}")
        if params.d != grid.d:
            raise ValueError("params and grid disagree on tangential dimension")
        self.grid = grid
        self.params = params
        self.b0 = b0
        self.v0 = list(v0)

    @classmethod
    def from_momentum(
        cls, grid: Grid, params: PhysParams, b0: Field, w_tilde0: list[Field]
    ) -> "InitialPerturbation":
        """Back out v0 from a prescribed momentum perturbation w_tilde0."""
        x3 = grid.x3_broadcast()
        u_aux = vortex_layer_velocity(x3, 0.0, params, age=params.Lambda)
        rho0 = params.rho_bar + params.eps * b0.values
        v0 = []
        for i, w in enumerate(w_tilde0):
            aux = u_aux[i] if i < grid.d else 0.0
            v_tilde = (w.values - params.eps * b0.values * aux) / rho0
            if i < grid.d:
                shift = _aux_shift(grid, params)[i]
                v0.append(Field(grid, v_tilde - shift))
            else:
                v0.append(Field(grid, v_tilde))
        return cls(grid, params, b0, v0)

    @cached_property
    def u0(self) -> list[Field]:
        """Full initial velocity: original layer at age t0 plus v0."""
        x3 = self.grid.x3_broadcast()
        layer = vortex_layer_velocity(x3, 0.0, self.params)
        out = []
        for i in range(self.grid.d):
            out.append(Field(self.grid, np.broadcast_to(layer[i], self.grid.shape) + self.v0[i].values))
        out.append(self.v0[self.grid.d].copy())
        return out

    @cached_property
    def v_tilde0(self) -> list[Field]:
        """Perturbation relative to the auxiliary layer of age Lambda."""
        shift = _aux_shift(self.grid, self.params)
        out = []
        for i in range(self.grid.d):
            out.append(Field(self.grid, self.v0[i].values + shift[i]))
        out.append(self.v0[self.grid.d].copy())
        return out

    @cached_property
    def w_tilde0(self) -> list[Field]:
        """Momentum perturbation rho_bar*v_tilde0 + eps*b0*u0."""
        p = self.params
        return [
            Field(self.grid, p.rho_bar * vt.values + p.eps * self.b0.values * u.values)
            for vt, u in zip(self.v_tilde0, self.u0)
        ]

    @cached_property
    def chi(self) -> float:
        """Smallness norm: weighted H1 of the (b0, v03) zero modes plus H1 of all non-zero modes."""
        flats = [zero_mode(self.b0), zero_mode(self.v0[self.grid.d])]
        flat_part = math.sqrt(sum(_h1_weighted(p) ** 2 for p in flats))
        sharps = [nonzero_mode(self.b0)] + [nonzero_mode(v) for v in self.v0]
        sharp_part = math.sqrt(sum(h_s_norm(f, 1) ** 2 for f in sharps))
        return flat_part + sharp_part

    @cached_property
    def m0_norm(self) -> float:
        """Total data size: weighted zero-mode L2 plus full H3, all components."""
        fields = [self.b0] + self.v0
        flat_part = math.sqrt(sum(weighted_l2_norm(zero_mode(f), 0.75) ** 2 for f in fields))
        full_part = math.sqrt(sum(h_s_norm(f, 3) ** 2 for f in fields))
        return flat_part + full_part


def _aux_shift(grid: Grid, params: PhysParams):
    """Tangential velocity difference (layer at age t0) - (layer at age Lambda) at t = 0."""
    x3 = grid.x3_broadcast()
    orig = vortex_layer_velocity(x3, 0.0, params)
    aux = vortex_layer_velocity(x3, 0.0, params, age=params.Lambda)
    return [np.broadcast_to(orig[i] - aux[i], grid.shape) for i in range(grid.d)]


def _h1_weighted(p: Profile, alpha: float = 0.75) -> float:
    return weighted_l2_norm(p, alpha) + profile_h_s_norm(p, 1)


# --- amplitudes ---------------------------------------------------------------


def compute_alphas(ip: InitialPerturbation, params: PhysParams | None = None) -> Alphas:
    """Wave amplitudes that zero out the initial mass of the perturbation.

    a0 = 1/2 int (b0 - w03/a)_flat,  a3 = 1/2 int (b0 + w03/a)_flat,
    a_i = int (w0i - eps u_bar_i w03 / a)_flat  for tangential i.
    """
    p = ip.params if params is None else params
    a_bar = p.sound_speed
    d = ip.grid.d
    b_flat = zero_mode(ip.b0)
    w3_flat = zero_mode(ip.w_tilde0[d])
    int_b = integrate_profile(b_flat)
    int_w3 = integrate_profile(w3_flat)
    a0 = 0.5 * (int_b - int_w3 / a_bar)
    a3 = 0.5 * (int_b + int_w3 / a_bar)
    a_perp = tuple(
        integrate_profile(zero_mode(ip.w_tilde0[i])) - p.eps * p.u_bar[i] * int_w3 / a_bar
        for i in range(d)
    )
    return Alphas(a0=a0, a_perp=a_perp, a3=a3)


# --- the ansatz ---------------------------------------------------------------


class AnsatzSpec:
    """Evaluation closures for (rho~, m~, u~) and the error terms.

    All closures accept raw x3 arrays and a time and return either values or
    Jets carrying normal derivatives.  Jets of quantities defined through a
    normal derivative (the F terms) are exact up to third order only.
    """

    def __init__(self, alphas: Alphas, params: PhysParams):
        if len(alphas.a_perp) != params.d:
            raise ValueError("tangential amplitude count does not match params")
        max_wave = np.sqrt(params.rho_bar) / (2.0 * np.sqrt(np.pi * params.mu * params.Lambda))
        if params.eps * (abs(alphas.a0) + abs(alphas.a3)) * max_wave > params.rho_bar / 2.0:
            raise DensityFloorViolation(
                "acoustic amplitudes would push the ansatz density below rho_bar/2"
            )
        self.alphas = alphas
        self.params = params

    # -- building blocks --

    def _waves(self, x3, t) -> dict[str, Jet]:
        return {b: diffusion_wave_jet(x3, t, self.params, b) for b in _BRANCHES}

    def _waves_d1(self, x3, t) -> dict[str, Jet]:
        return {b: diffusion_wave_jet(x3, t, self.params, b, base_order=1) for b in _BRANCHES}

    def aux_layer_jet(self, x3, t) -> list[Jet]:
        """Auxiliary shear layer components at age t + Lambda."""
        base = theta_jet(x3, t + self.params.Lambda, self.params)
        return [base * ub for ub in self.params.u_bar]

    # -- closures --

    def rho_jet(self, x3, t) -> Jet:
        p, a = self.params, self.alphas
        w = self._waves(x3, t)
        return p.eps * (a.a0 * w["minus"] + a.a3 * w["plus"]) + p.rho_bar

    def m_jet(self, x3, t, comp: int) -> Jet:
        p, a = self.params, self.alphas
        w = self._waves(x3, t)
        acouple = a.a3 * w["plus"] - a.a0 * w["minus"]
        if comp == p.d:
            return p.sound_speed * acouple
        if not 0 <= comp < p.d:
            raise ValueError("component out of range")
        center = diffusion_wave_jet(x3, t, self.params, "center")
        aux = self.aux_layer_jet(x3, t)[comp]
        return p.rho_bar * aux + a.a_perp[comp] * center + p.eps * p.u_bar[comp] * acouple

    def u_jet(self, x3, t, comp: int) -> Jet:
        return self.m_jet(x3, t, comp) / self.rho_jet(x3, t)

    def rho(self, x3, t, j: int = 0):
        return self.rho_jet(x3, t).order(j)

    def m(self, x3, t, comp: int, j: int = 0):
        return self.m_jet(x3, t, comp).order(j)

    def u(self, x3, t, comp: int, j: int = 0):
        return self.u_jet(x3, t, comp).order(j)

    # -- exact time derivatives (for residual oracles) --

    def rho_dt(self, x3, t):
        p, a = self.params, self.alphas
        return p.eps * (
            a.a0 * diffusion_wave_dt(x3, t, p, "minus")
            + a.a3 * diffusion_wave_dt(x3, t, p, "plus")
        )

    def m_dt(self, x3, t, comp: int):
        p, a = self.params, self.alphas
        dminus = diffusion_wave_dt(x3, t, p, "minus")
        dplus = diffusion_wave_dt(x3, t, p, "plus")
        acouple = a.a3 * dplus - a.a0 * dminus
        if comp == p.d:
            return p.sound_speed * acouple
        nu = p.mu / p.rho_bar
        aux_dt = nu * self.aux_layer_jet(x3, t)[comp].order(2)
        center_dt = diffusion_wave_dt(x3, t, p, "center")
        return p.rho_bar * aux_dt + a.a_perp[comp] * center_dt + p.eps * p.u_bar[comp] * acouple

    # -- error terms --

    def F0_jet(self, x3, t) -> Jet:
        p, a = self.params, self.alphas
        wd = self._waves_d1(x3, t)
        return (p.mu / p.rho_bar) * (a.a0 * wd["minus"] + a.a3 * wd["plus"])

    def F_jet(self, x3, t, comp: int) -> Jet:
        p, a = self.params, self.alphas
        w = self._waves(x3, t)
        wd = self._waves_d1(x3, t)
        rho = self.rho_jet(x3, t)
        m3 = self.m_jet(x3, t, p.d)
        asum = a.a0 * w["minus"] + a.a3 * w["plus"]
        adiff_d = a.a3 * wd["plus"] - a.a0 * wd["minus"]
        if comp == p.d:
            press = rho.compose(
                (p.pressure, p.dpressure, p.d2pressure, p.d3pressure, _p4(p))
            )
            varpi = press - p.pressure(p.rho_bar) - p.dpressure(p.rho_bar) * (rho - p.rho_bar)
            u3 = m3 / rho
            return (
                m3 * m3 / rho
                + varpi * (1.0 / p.eps ** 2)
                + (p.mu * p.sound_speed / p.rho_bar) * adiff_d
                - p.mu_tilde * u3.d3()
            )
        if not 0 <= comp < p.d:
            raise ValueError("component out of range")
        center_d = diffusion_wave_jet(x3, t, self.params, "center", base_order=1)
        mi = self.m_jet(x3, t, comp)
        ui = mi / rho
        ui_aux = self.aux_layer_jet(x3, t)[comp]
        term1 = p.mu * ((a.a_perp[comp] / p.rho_bar) * center_d - (ui - ui_aux).d3())
        term2 = m3 * mi / rho - p.sound_speed * p.u_bar[comp] * asum
        term3 = (p.eps * p.mu * p.u_bar[comp] / p.rho_bar) * adiff_d
        return term1 + term2 + term3

    # -- serialization --

    def to_text(self) -> str:
        p, a = self.params, self.alphas
        lines = [
            "[ansatz]",
            f"a0 = {a.a0!r}",
            f"a_perp = {','.join(repr(v) for v in a.a_perp)}",
            f"a3 = {a.a3!r}",
            "[params]",
            f"rho_bar = {p.rho_bar!r}",
            f"u_bar = {','.join(repr(v) for v in p.u_bar)}",
            f"mu = {p.mu!r}",
            f"lam = {p.lam!r}",
            f"gamma = {p.gamma!r}",
            f"eps = {p.eps!r}",
            f"t0 = {p.t0!r}",
            f"Lambda = {p.Lambda!r}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "AnsatzSpec":
        values: dict[str, str] = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("["):
                continue
            key, _, val = line.partition("=")
            values[key.strip()] = val.strip()
        params = PhysParams(
            rho_bar=float(values["rho_bar"]),
            u_bar=tuple(float(v) for v in values["u_bar"].split(",")),
            mu=float(values["mu"]),
            lam=float(values["lam"]),
            gamma=float(values["gamma"]),
            eps=float(values["eps"]),
            t0=float(values["t0"]),
            Lambda=float(values["Lambda"]),
        )
        alphas = Alphas(
            a0=float(values["a0"]),
            a_perp=tuple(float(v) for v in values["a_perp"].split(",")) if values["a_perp"] else (),
            a3=float(values["a3"]),
        )
        return cls(alphas, params)


def _p4(p: PhysParams):
    g = p.gamma

    def fourth(rho):
        return g * (g - 1.0) * (g - 2.0) * (g - 3.0) * rho ** (g - 4.0)

    return fourth


def build_ansatz(alphas: Alphas, params: PhysParams) -> AnsatzSpec:
    return AnsatzSpec(alphas, params)


def ansatz_error_terms(spec: AnsatzSpec, x3, t):
    """Point values (F0, (F_1..F_d, F_3)) of the ansatz error terms."""
    F0 = spec.F0_jet(x3, t).value
    F = tuple(spec.F_jet(x3, t, c).value for c in range(spec.params.d + 1))
    return F0, F


# --- zero-mass check -----------------------------------------------------------


def zero_mass_check(state, spec: AnsatzSpec, t: float | None = None) -> np.ndarray:
    """Box integrals of the zero-mode defect (rho - rho~, m - m~).

    Returns d + 2 numbers ordered (density, tangential momenta..., normal
    momentum).  Meaningful as a conservation check only while no signal has
    reached the boundary; the caller tracks that separately.
    """
    time = state.t if t is None else t
    grid = state.rho.grid
    x3 = grid.x3()
    defects = [integrate_profile(zero_mode(state.rho) - spec.rho(x3, time))]
    d = spec.params.d
    order = list(range(d)) + [d]
    for comp in order[:-1]:
        defects.append(
            integrate_profile(zero_mode(state.m[comp]) - spec.m(x3, time, comp))
        )
    defects.append(integrate_profile(zero_mode(state.m[d]) - spec.m(x3, time, d)))
    return np.array(defects)


# --- envelope monitor -----------------------------------------------------------


def envelope(x3, t, params: PhysParams, c: float | None = None):
    """Three-Gaussian majorant following the center and acoustic branches."""
    s = t + params.Lambda
    c_env = params.rho_bar / (8.0 * params.mu) if c is None else c
    x3 = np.asarray(x3, dtype=float)
    lam = params.sound_speed / params.eps
    out = np.exp(-c_env * x3 ** 2 / s)
    out = out + np.exp(-c_env * (x3 + lam * s) ** 2 / s)
    out = out + np.exp(-c_env * (x3 - lam * s) ** 2 / s)
    return out


def envelope_bound_monitor(
    spec: AnsatzSpec,
    x3,
    t_samples,
    j_values=(0, 1, 2),
    chi: float = 1.0,
    c_env: float | None = None,
) -> dict[str, float]:
    """Smallest constants C making the pointwise envelope bounds hold.

    For each j the monitored ratios are
      F:          (|d3^j F0| + sum |d3^j F|) / (chi (t+Lambda)^{-(2+j)/2} E)
      small:      (|d3^j (rho-rho_bar)|/eps + |d3^j m3| + |d3^j u3|) / (chi (t+Lambda)^{-(1+j)/2} E)
      perp:       (|d3^j (m_perp - rho_bar u_aux)| + |d3^j (u_perp - u_aux)|) / ((t+Lambda)^{-(1+j)/2} E)
      perp_grad:  (|d3^{j+1} m_perp| + |d3^{j+1} u_perp|) / ((t+Lambda)^{-(1+j)/2} E)
    with E the three-branch Gaussian envelope.  The generic envelope rate c
    defaults to rho_bar/(8 mu), half the diffusion-wave rate, and is fitted
    empirically by the caller if desired.
    """
    p = spec.params
    x3 = np.asarray(x3, dtype=float)
    out = {f"{name}_j{j}": 0.0 for j in j_values for name in ("F", "small", "perp", "perp_grad")}
    for t in t_samples:
        s = t + p.Lambda
        env = envelope(x3, t, p, c_env)
        mask = env > 1e-250
        env = env[mask]
        xm = x3[mask]
        rho = spec.rho_jet(xm, t)
        m3 = spec.m_jet(xm, t, p.d)
        u3 = m3 / rho
        F0 = spec.F0_jet(xm, t)
        F = [spec.F_jet(xm, t, c) for c in range(p.d + 1)]
        aux = spec.aux_layer_jet(xm, t)
        m_perp = [spec.m_jet(xm, t, i) for i in range(p.d)]
        u_perp = [m_perp[i] / rho for i in range(p.d)]
        for j in j_values:
            rate_F = chi * s ** (-(2.0 + j) / 2.0)
            rate_d = s ** (-(1.0 + j) / 2.0)
            q_F = np.abs(F0.order(j)) + sum(np.abs(f.order(j)) for f in F)
            q_small = (
                np.abs(rho.order(j) - (p.rho_bar if j == 0 else 0.0)) / p.eps
                + np.abs(m3.order(j))
                + np.abs(u3.order(j))
            )
            q_perp = sum(
                np.abs(m_perp[i].order(j) - p.rho_bar * aux[i].order(j))
                + np.abs(u_perp[i].order(j) - aux[i].order(j))
                for i in range(p.d)
            )
            q_perp_grad = sum(
                np.abs(m_perp[i].order(j + 1)) + np.abs(u_perp[i].order(j + 1))
                for i in range(p.d)
            )
            out[f"F_j{j}"] = max(out[f"F_j{j}"], float(np.max(q_F / (rate_F * env), initial=0.0)))
            out[f"small_j{j}"] = max(
                out[f"small_j{j}"], float(np.max(q_small / (chi * rate_d * env), initial=0.0))
            )
            out[f"perp_j{j}"] = max(
                out[f"perp_j{j}"], float(np.max(q_perp / (rate_d * env), initial=0.0))
            )
            out[f"perp_grad_j{j}"] = max(
                out[f"perp_grad_j{j}"], float(np.max(q_perp_grad / (rate_d * env), initial=0.0))
            )
    # branch separation quality: acoustic centers t = 0 sit at +-a Lambda / eps,
    # compared against the wave width sqrt(4 mu Lambda / rho); small eps keeps
    # the crossing Gaussians of the proof well separated.
    width = np.sqrt(4.0 * p.mu * p.Lambda / p.rho_bar)
    out["branch_separation"] = (p.sound_speed / p.eps) * p.Lambda / width
    return out
