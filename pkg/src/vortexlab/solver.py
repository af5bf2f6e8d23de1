"""Time integration on the periodic strip.

Two systems share the grid and derivative operators:

* the Mach-scaled compressible isentropic system, advanced by a Strang
  splitting whose stiff linear acoustic part (div m together with the
  reference pressure gradient p'(rho_bar) grad rho / eps^2) is integrated by
  Crank-Nicolson through a tangential transform and a banded normal solve,
  while convection (MUSCL fluxes in the normal direction, spectral
  tangentially), viscosity and the nonlinear pressure remainder go explicit;

* the incompressible reference system, advanced by a projection method built
  from the same transform + banded Poisson solve.

The time step is therefore limited by advection and viscosity only, never by
the Mach number.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DensityFloorViolation, LinearSolveDiverged, PoissonSolveDiverged
from .grid import Field, Grid
from .operators import _normal_derivative_matrix, tangential_wavenumbers
from .params import PhysParams
from .profiles import theta, vortex_layer_velocity


@dataclass
class State:
    """Conservative unknowns of the compressible system."""

    rho: Field
    m: list[Field]
    t: float

    def __post_init__(self):
        if np.min(self.rho.values) <= 0.0:
            raise DensityFloorViolation("non-positive density in state")
        if len(self.m) != self.rho.grid.d + 1:
            raise ValueError("momentum needs d + 1 components")

    @property
    def grid(self) -> Grid:
        return self.rho.grid

    def velocity(self) -> list[Field]:
        return [Field(self.grid, mi.values / self.rho.values) for mi in self.m]

    def copy(self) -> "State":
        return State(self.rho.copy(), [mi.copy() for mi in self.m], self.t)


@dataclass
class IncState:
    """Divergence-free velocity of the incompressible reference."""

    u: list[Field]
    t: float

    @property
    def grid(self) -> Grid:
        return self.u[0].grid

    def copy(self) -> "IncState":
        return IncState([ui.copy() for ui in self.u], self.t)


@dataclass(frozen=True)
class SolverConfig:
    """Stepping policy and tolerances."""

    cfl: float = 0.4
    dt: float | None = None  # fixed step; None derives one from the CFL limits
    rho_floor_frac: float = 0.25
    muscl: bool = True
    check_every: int = 50
    projection_tol: float = 1e-9
    sponge_cells: int = 8
    sponge_strength: float = 0.2


# --- spectral helpers ---------------------------------------------------------


def _tangential_fft(values: np.ndarray, grid: Grid) -> np.ndarray:
    return np.fft.rfftn(values, axes=tuple(range(grid.d)))


def _tangential_ifft(spec: np.ndarray, grid: Grid) -> np.ndarray:
    return np.fft.irfftn(spec, s=(grid.n_perp,) * grid.d, axes=tuple(range(grid.d)))


def _mode_wavenumbers(grid: Grid):
    """Per-direction wavenumber arrays (rfft layout, broadcastable) and kappa^2."""
    full = tangential_wavenumbers(grid)
    half = np.abs(full[: grid.n_perp // 2 + 1])
    ks = []
    if grid.d == 1:
        ks.append(half.reshape(-1, 1))
    else:
        ks.append(full.reshape(-1, 1, 1))
        ks.append(half.reshape(1, -1, 1))
    kappa2 = sum(k ** 2 for k in ks)
    return ks, kappa2


def _first_deriv_multipliers(grid: Grid):
    """Wavenumbers for first derivatives with the Nyquist modes zeroed,
    plus the matching kappa^2, so that div, grad and the Helmholtz/Poisson
    composites annihilate each other exactly."""
    ks, _ = _mode_wavenumbers(grid)
    out = []
    for direction, k in enumerate(ks):
        k = k.copy()
        nyq = [slice(None)] * k.ndim
        nyq[direction] = grid.n_perp // 2 if (grid.d == 2 and direction == 0) else -1
        k[tuple(nyq)] = 0.0
        out.append(k)
    kappa2 = sum(k ** 2 for k in out)
    return out, kappa2


def _batched_tangential_derivs(arrays, grid: Grid, direction: int, order: int):
    """Spectral tangential derivatives of several same-shaped arrays at once."""
    stack = np.stack(arrays)
    axes = tuple(a + 1 for a in range(grid.d))
    spec = np.fft.rfftn(stack, axes=axes)
    ks, _ = _mode_wavenumbers(grid)
    mult = (1j * ks[direction]) ** order
    if order % 2 == 1:
        mult = mult.copy()
        nyq = [slice(None)] * mult.ndim
        nyq[direction] = grid.n_perp // 2 if (grid.d == 2 and direction == 0) else -1
        mult[tuple(nyq)] = 0.0
    out = np.fft.irfftn(spec * mult[np.newaxis], s=(grid.n_perp,) * grid.d, axes=axes)
    return [out[i] for i in range(len(arrays))]


def _apply_normal(arr: np.ndarray, D: sp.spmatrix) -> np.ndarray:
    flat = arr.reshape(-1, arr.shape[-1])
    return (flat @ D.T).reshape(arr.shape)


# --- banded mode solver ---------------------------------------------------------


class _ModeBlockSolver:
    """LU-factored block-diagonal solver: one banded block per tangential mode."""

    def __init__(self, blocks):
        self.n_blocks = len(blocks)
        self.block_size = blocks[0].shape[0]
        self.lu = spla.splu(sp.block_diag(blocks, format="csc"))

    def solve(self, rhs_modes: np.ndarray) -> np.ndarray:
        """rhs_modes: complex array of shape (n_blocks, block_size)."""
        flat = rhs_modes.reshape(self.n_blocks * self.block_size)
        sol = self.lu.solve(np.column_stack([flat.real, flat.imag]))
        return (sol[:, 0] + 1j * sol[:, 1]).reshape(self.n_blocks, self.block_size)


def _dirichlet_rows(mat: sp.lil_matrix, rows) -> None:
    for r in rows:
        mat.rows[r] = [r]
        mat.data[r] = [1.0]


# --- far-field characteristic closure ---------------------------------------------


def apply_characteristic_bc(
    rho: np.ndarray,
    m: list[np.ndarray],
    t: float,
    grid: Grid,
    params: PhysParams,
    sponge_cells: int = 8,
    sponge_strength: float = 0.2,
) -> None:
    """Non-reflecting closure at x3 = +-L, in place.

    Outgoing acoustic characteristics are extrapolated from one node inside,
    incoming ones are pinned to the far-field constants (rho_bar, +-rho_bar
    u_bar, 0); tangential momenta leave with zero normal gradient.  A thin
    strip of cells additionally damps the incoming Riemann variable: it
    vanishes for physical states, so this only absorbs spurious reflection,
    which otherwise closes a weak feedback loop at very small eps.
    """
    p = params
    a_eps = p.sound_speed / p.eps
    for side, inner, orient in ((-1, grid.n3 - 1, +1.0), (0, 1, -1.0)):
        drho = rho[..., inner] - p.rho_bar
        dm3 = m[-1][..., inner]
        r_out = a_eps * drho + orient * dm3
        rho[..., side] = p.rho_bar + p.eps * r_out / (2.0 * p.sound_speed)
        m[-1][..., side] = orient * 0.5 * r_out
        for i in range(grid.d):
            m[i][..., side] = m[i][..., inner]
    if sponge_cells > 0 and sponge_strength > 0.0:
        k = min(sponge_cells, grid.n3 // 4)
        ramp = sponge_strength * (np.arange(k, 0, -1) / k) ** 2
        for side_slice, orient in ((slice(grid.n3 + 1 - k, None), +1.0), (slice(0, k), -1.0)):
            strip = ramp[::-1] if orient > 0 else ramp
            drho = rho[..., side_slice] - p.rho_bar
            dm3 = m[-1][..., side_slice]
            r_out = a_eps * drho + orient * dm3
            r_in = (a_eps * drho - orient * dm3) * (1.0 - strip)
            rho[..., side_slice] = p.rho_bar + p.eps * (r_out + r_in) / (2.0 * p.sound_speed)
            m[-1][..., side_slice] = orient * 0.5 * (r_out - r_in)


# --- compressible stepper ----------------------------------------------------------


class CompressibleStepper:
    """Cached operators and factorizations for one (grid, params, cfg, dt)."""

    def __init__(self, grid: Grid, params: PhysParams, cfg: SolverConfig, dt: float):
        self.grid = grid
        self.params = params
        self.cfg = cfg
        self.dt = float(dt)
        n = grid.n3 + 1
        self.D1 = _normal_derivative_matrix(grid.n3, grid.h3, 1)
        self.D2 = _normal_derivative_matrix(grid.n3, grid.h3, 2)
        self.ks, self.kappa2 = _first_deriv_multipliers(grid)
        kappa2_modes = self.kappa2[..., 0].reshape(-1)
        tau = 0.5 * self.dt
        self.c2 = (params.sound_speed / params.eps) ** 2
        self.beta = (0.5 * tau) ** 2 * self.c2
        D1sq = (self.D1 @ self.D1).tolil()
        eye = sp.identity(n, format="lil")
        blocks = []
        for k2 in kappa2_modes:
            A = (eye + self.beta * (k2 * eye - D1sq)).tolil()
            _dirichlet_rows(A, (0, n - 1))
            blocks.append(A.tocsc())
        self.helmholtz = _ModeBlockSolver(blocks)
        self.rho_floor = cfg.rho_floor_frac * params.rho_bar

    # -- acoustic half step (Crank-Nicolson, exact flux form for the mass) --

    def _acoustic(self, rho: np.ndarray, m: list[np.ndarray], tau: float):
        g = self.grid
        rho_hat = _tangential_fft(rho, g)
        m_hat = [_tangential_fft(mi, g) for mi in m]
        div_hat = _apply_normal(m_hat[-1], self.D1)
        for i in range(g.d):
            div_hat = div_hat + 1j * self.ks[i] * m_hat[i]
        lap_rho = _apply_normal(_apply_normal(rho_hat, self.D1), self.D1) - self.kappa2 * rho_hat
        beta = (0.5 * tau) ** 2 * self.c2
        rhs = rho_hat - tau * div_hat + beta * lap_rho
        rhs[..., 0] = rho_hat[..., 0]
        rhs[..., -1] = rho_hat[..., -1]
        rho_new_hat = self.helmholtz.solve(rhs.reshape(-1, g.n3 + 1)).reshape(rho_hat.shape)
        gsum = rho_hat + rho_new_hat
        half = 0.5 * tau * self.c2
        m_new_hat = [m_hat[i] - half * 1j * self.ks[i] * gsum for i in range(g.d)]
        m_new_hat.append(m_hat[-1] - half * _apply_normal(gsum, self.D1))
        div_new = _apply_normal(m_new_hat[-1], self.D1)
        for i in range(g.d):
            div_new = div_new + 1j * self.ks[i] * m_new_hat[i]
        rho_cons_hat = rho_hat - 0.5 * tau * (div_hat + div_new)
        rho_out = _tangential_ifft(rho_cons_hat, g)
        m_out = [_tangential_ifft(mh, g) for mh in m_new_hat]
        if not np.all(np.isfinite(rho_out)):
            raise LinearSolveDiverged("acoustic Helmholtz solve produced non-finite density")
        return rho_out, m_out

    # -- explicit advection / viscosity / pressure remainder --

    def _muscl_div(self, q_pad: np.ndarray, faces: np.ndarray) -> np.ndarray:
        """Normal flux difference of u3*q with van Leer limited reconstruction.

        q_pad carries two ghost cells per side; faces holds the face-centered
        normal velocity on the n3+2 faces bounding the real nodes.
        """
        h = self.grid.h3
        dq = q_pad[..., 1:] - q_pad[..., :-1]
        a, b = dq[..., :-1], dq[..., 1:]
        denom = np.abs(a) + np.abs(b)
        safe = np.where(denom > 1e-300, denom, 1.0)
        slope = (np.sign(a) + np.sign(b)) * np.abs(a) * np.abs(b) / safe
        q_left = q_pad[..., 1:-2] + 0.5 * slope[..., :-1]
        q_right = q_pad[..., 2:-1] - 0.5 * slope[..., 1:]
        flux = np.where(faces >= 0.0, faces * q_left, faces * q_right)
        return (flux[..., 1:] - flux[..., :-1]) / h

    @staticmethod
    def _pad_normal(arr: np.ndarray) -> np.ndarray:
        left, right = arr[..., :1], arr[..., -1:]
        return np.concatenate([left, left, arr, right, right], axis=-1)

    def _explicit_rhs(self, rho: np.ndarray, m: list[np.ndarray], t: float, forcing=None):
        g, p = self.grid, self.params
        ncomp = g.d + 1
        u = [mi / rho for mi in m]
        varpi = p.varpi(rho, p.rho_bar) / p.eps ** 2
        div_u = _apply_normal(u[-1], self.D1)
        for i in range(g.d):
            div_u = div_u + _batched_tangential_derivs([u[i]], g, i, 1)[0]
        # tangential convective + pressure-remainder fluxes, one transform per direction
        tang_flux = []
        for i in range(g.d):
            batch = [u[i] * m[j] for j in range(ncomp)]
            batch[i] = batch[i] + varpi
            tang_flux.append(_batched_tangential_derivs(batch, g, i, 1))
        lap_tang = [_batched_tangential_derivs(u, g, i, 2) for i in range(g.d)]
        grad_divu_tang = [
            _batched_tangential_derivs([div_u], g, i, 1)[0] for i in range(g.d)
        ]
        if self.cfg.muscl:
            u3_pad = self._pad_normal(u[-1])
            all_faces = 0.5 * (u3_pad[..., 1:] + u3_pad[..., :-1])
            faces = all_faces[..., 1:-1]
        rhs = []
        for j in range(ncomp):
            if self.cfg.muscl:
                conv_n = self._muscl_div(self._pad_normal(m[j]), faces)
            else:
                conv_n = _apply_normal(u[-1] * m[j], self.D1)
            total = -conv_n
            for i in range(g.d):
                total = total - tang_flux[i][j]
            visc = _apply_normal(u[j], self.D2)
            for i in range(g.d):
                visc = visc + lap_tang[i][j]
            total = total + p.mu * visc
            if j == ncomp - 1:
                total = total - _apply_normal(varpi, self.D1)
                total = total + (p.mu + p.lam) * _apply_normal(div_u, self.D1)
            else:
                total = total + (p.mu + p.lam) * grad_divu_tang[j]
            if forcing is not None:
                total = total + forcing(j, t)
            rhs.append(total)
        return rhs

    # -- one full Strang step --

    def step(self, state: State, forcing=None) -> State:
        g = self.grid
        rho = state.rho.values.copy()
        m = [mi.values.copy() for mi in state.m]
        tau = 0.5 * self.dt
        dt = self.dt
        rho, m = self._acoustic(rho, m, tau)
        apply_characteristic_bc(rho, m, state.t, g, self.params, self.cfg.sponge_cells, self.cfg.sponge_strength)
        # SSP-RK3 on the nonstiff terms: stable for spectral convection
        k1 = self._explicit_rhs(rho, m, state.t, forcing)
        m1 = [mi + dt * ki for mi, ki in zip(m, k1)]
        apply_characteristic_bc(rho, m1, state.t + dt, g, self.params, self.cfg.sponge_cells, self.cfg.sponge_strength)
        k2 = self._explicit_rhs(rho, m1, state.t + dt, forcing)
        m2 = [0.75 * mi + 0.25 * (a + dt * b) for mi, a, b in zip(m, m1, k2)]
        apply_characteristic_bc(rho, m2, state.t + 0.5 * dt, g, self.params, self.cfg.sponge_cells, self.cfg.sponge_strength)
        k3 = self._explicit_rhs(rho, m2, state.t + 0.5 * dt, forcing)
        m = [mi / 3.0 + (2.0 / 3.0) * (a + dt * b) for mi, a, b in zip(m, m2, k3)]
        rho, m = self._acoustic(rho, m, tau)
        t_new = state.t + self.dt
        apply_characteristic_bc(rho, m, t_new, g, self.params, self.cfg.sponge_cells, self.cfg.sponge_strength)
        if np.min(rho) < self.rho_floor:
            raise DensityFloorViolation(
                f"density fell below {self.rho_floor:.3g} at t = {t_new:.4g}"
            )
        if not all(np.all(np.isfinite(mi)) for mi in m):
            raise LinearSolveDiverged(f"momentum diverged at t = {t_new:.4g}")
        return State(Field(g, rho), [Field(g, mi) for mi in m], t_new)


def advective_dt(state: State, cfg: SolverConfig, params: PhysParams) -> float:
    """Largest stable step from the advective, viscous and pressure-remainder
    limits; the acoustic speed a/eps does not enter."""
    g = state.grid
    u = [mi.values / state.rho.values for mi in state.m]
    limits = [g.h3 / max(np.max(np.abs(u[-1])), 1e-12)]
    for i in range(g.d):
        limits.append(g.h_perp / max(np.max(np.abs(u[i])), 1e-12))
    # explicit viscosity: 4th-order normal stencil spectral radius 16/(3 h^2)
    # plus the tangential spectral cutoff (pi n_perp)^2; Heun allows ~2/rate
    visc_rate = (params.mu_tilde / np.min(state.rho.values)) * (
        16.0 / (3.0 * g.h3 ** 2) + g.d * (np.pi * g.n_perp) ** 2
    )
    limits.append(2.0 / visc_rate)
    dc2 = np.max(np.abs(params.dpressure(state.rho.values) - params.sound_speed ** 2))
    if dc2 > 1e-14:
        limits.append(g.h3 * params.eps / np.sqrt(dc2))
    return cfg.cfl * min(limits)


_STEPPER_CACHE: dict = {}


def get_stepper(grid: Grid, params: PhysParams, cfg: SolverConfig, dt: float) -> CompressibleStepper:
    key = (grid, params, cfg, round(float(dt), 14))
    if key not in _STEPPER_CACHE:
        if len(_STEPPER_CACHE) > 16:
            _STEPPER_CACHE.clear()
        _STEPPER_CACHE[key] = CompressibleStepper(grid, params, cfg, dt)
    return _STEPPER_CACHE[key]


def step_compressible(
    s: State, cfg: SolverConfig, params: PhysParams, dt: float | None = None, forcing=None
) -> State:
    """Advance the compressible state one step (dt from config or CFL)."""
    if dt is None:
        dt = cfg.dt if cfg.dt is not None else advective_dt(s, cfg, params)
    return get_stepper(s.grid, params, cfg, dt).step(s, forcing)


def boundary_apply(s: State, cfg: SolverConfig, params: PhysParams) -> State:
    """Characteristic far-field closure at x3 = +-L (tangentially periodic)."""
    out = s.copy()
    rho = out.rho.values
    m = [mi.values for mi in out.m]
    apply_characteristic_bc(rho, m, s.t, s.grid, params, cfg.sponge_cells, cfg.sponge_strength)
    return State(Field(s.grid, rho), [Field(s.grid, mi) for mi in m], s.t)


# --- Leray projection ---------------------------------------------------------------


class _Projector:
    """Id - grad lap^{-1} div with spectral tangential and banded normal parts."""

    def __init__(self, grid: Grid):
        self.grid = grid
        n = grid.n3 + 1
        self.D1 = _normal_derivative_matrix(grid.n3, grid.h3, 1)
        self.ks, self.kappa2 = _first_deriv_multipliers(grid)
        k2_modes = self.kappa2[..., 0].reshape(-1)
        D1sq = (self.D1 @ self.D1).tolil()
        eye = sp.identity(n, format="lil")
        blocks = []
        self.zero_modes = []
        for idx, k2 in enumerate(k2_modes):
            if k2 == 0.0:
                self.zero_modes.append(idx)
                blocks.append(sp.identity(n, format="csc"))
                continue
            A = (D1sq - k2 * eye).tolil()
            _dirichlet_rows(A, (0, n - 1))
            blocks.append(A.tocsc())
        self.solver = _ModeBlockSolver(blocks)

    def project(self, comps: list[np.ndarray]) -> list[np.ndarray]:
        g = self.grid
        hats = [_tangential_fft(c, g) for c in comps]
        div_hat = _apply_normal(hats[-1], self.D1)
        for i in range(g.d):
            div_hat = div_hat + 1j * self.ks[i] * hats[i]
        rhs = div_hat.reshape(-1, g.n3 + 1).copy()
        rhs[:, 0] = 0.0
        rhs[:, -1] = 0.0
        rhs[self.zero_modes] = 0.0
        chi = self.solver.solve(rhs).reshape(div_hat.shape)
        out = [hats[i] - 1j * self.ks[i] * chi for i in range(g.d)]
        w3 = hats[-1] - _apply_normal(chi, self.D1)
        # the only far-field-decaying gradient in the tangential mean is the
        # normal component itself; Leray on the strip removes it entirely
        flat = w3.reshape(-1, g.n3 + 1)
        flat[self.zero_modes] = 0.0
        out.append(flat.reshape(w3.shape))
        res = [_tangential_ifft(h, g) for h in out]
        if not all(np.all(np.isfinite(r)) for r in res):
            raise PoissonSolveDiverged("projection produced non-finite values")
        return res

    def divergence(self, comps: list[np.ndarray]) -> np.ndarray:
        g = self.grid
        div = _apply_normal(comps[-1], self.D1)
        for i in range(g.d):
            div = div + _batched_tangential_derivs([comps[i]], g, i, 1)[0]
        return div


_PROJECTOR_CACHE: dict = {}


def _get_projector(grid: Grid) -> _Projector:
    if grid not in _PROJECTOR_CACHE:
        if len(_PROJECTOR_CACHE) > 16:
            _PROJECTOR_CACHE.clear()
        _PROJECTOR_CACHE[grid] = _Projector(grid)
    return _PROJECTOR_CACHE[grid]


def leray_project(v: list[Field]) -> list[Field]:
    """Project velocity components onto the discretely divergence-free space."""
    grid = v[0].grid
    out = _get_projector(grid).project([vi.values for vi in v])
    return [Field(grid, o) for o in out]


def divergence_norm(u: list[Field]) -> float:
    """L2 norm of the discrete divergence used by the projector."""
    grid = u[0].grid
    div = _get_projector(grid).divergence([ui.values for ui in u])
    w = grid.trapezoid_weights()
    return float(np.sqrt(np.dot(w, (div ** 2).mean(axis=tuple(range(grid.d))))))


# --- incompressible stepper ------------------------------------------------------------


class IncompressibleStepper:
    def __init__(self, grid: Grid, params: PhysParams, cfg: SolverConfig, dt: float):
        self.grid = grid
        self.params = params
        self.cfg = cfg
        self.dt = float(dt)
        self.D1 = _normal_derivative_matrix(grid.n3, grid.h3, 1)
        self.D2 = _normal_derivative_matrix(grid.n3, grid.h3, 2)
        self.proj = _get_projector(grid)

    def _rhs(self, u: list[np.ndarray]):
        g, p = self.grid, self.params
        nu = p.mu / p.rho_bar
        grads_t = [_batched_tangential_derivs(u, g, i, 1) for i in range(g.d)]
        laps_t = [_batched_tangential_derivs(u, g, i, 2) for i in range(g.d)]
        rhs = []
        for j in range(g.d + 1):
            adv = u[-1] * _apply_normal(u[j], self.D1)
            for i in range(g.d):
                adv = adv + u[i] * grads_t[i][j]
            visc = _apply_normal(u[j], self.D2)
            for i in range(g.d):
                visc = visc + laps_t[i][j]
            rhs.append(-adv + nu * visc)
        return rhs

    def apply_boundary(self, u: list[np.ndarray], t: float) -> None:
        p, g = self.params, self.grid
        ramp = theta(g.L / np.sqrt(t + p.t0), p)
        for i in range(g.d):
            u[i][..., 0] = -p.u_bar[i] * ramp
            u[i][..., -1] = p.u_bar[i] * ramp
        u[-1][..., 0] = 0.0
        u[-1][..., -1] = 0.0

    def step(self, state: IncState) -> IncState:
        g = self.grid
        u = [ui.values.copy() for ui in state.u]
        k1 = self._rhs(u)
        u_mid = [ui + self.dt * ki for ui, ki in zip(u, k1)]
        self.apply_boundary(u_mid, state.t + self.dt)
        u_mid = self.proj.project(u_mid)
        k2 = self._rhs(u_mid)
        u_new = [ui + 0.5 * self.dt * (a + b) for ui, a, b in zip(u, k1, k2)]
        self.apply_boundary(u_new, state.t + self.dt)
        u_new = self.proj.project(u_new)
        return IncState([Field(g, ui) for ui in u_new], state.t + self.dt)


_INC_CACHE: dict = {}


def step_incompressible(s: IncState, cfg: SolverConfig, params: PhysParams, dt: float | None = None) -> IncState:
    if dt is None:
        dt = cfg.dt
        if dt is None:
            raise ValueError("incompressible stepping needs an explicit dt")
    key = (s.grid, params, cfg, round(float(dt), 14))
    if key not in _INC_CACHE:
        if len(_INC_CACHE) > 16:
            _INC_CACHE.clear()
        _INC_CACHE[key] = IncompressibleStepper(s.grid, params, cfg, dt)
    return _INC_CACHE[key].step(s)


# --- convenience states ---------------------------------------------------------------


def layer_state(grid: Grid, params: PhysParams, t: float = 0.0) -> State:
    """Exact background state (rho_bar, rho_bar u^vs) at solver time t."""
    x3 = grid.x3_broadcast()
    comps = vortex_layer_velocity(x3, t, params)
    m = [Field(grid, np.broadcast_to(params.rho_bar * c, grid.shape).copy()) for c in comps]
    m.append(Field(grid, np.zeros(grid.shape)))
    rho = Field(grid, np.full(grid.shape, params.rho_bar))
    return State(rho, m, t)
