"""Closed-form background objects: shear layer, vorticity, diffusion waves.

Everything here is an explicit function of (x3, t) evaluated through the
error function and Gaussians, so normal derivatives up to fourth order and
exact time derivatives are available analytically.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

from .jets import Jet, gaussian_derivs, gaussian_jet
from .params import PhysParams


# --- self-similar shear profile ---------------------------------------------


def theta(xi, params: PhysParams):
    """Odd ramp Theta(xi) = (2/sqrt(pi)) int_0^{(1/2)sqrt(rho/mu) xi} e^{-eta^2} d eta.

    Evaluated through erf, which carries ~1e-16 relative error; direct
    quadrature per call would dominate runtime.
    """
    return erf(0.5 * np.sqrt(params.rho_bar / params.mu) * np.asarray(xi, dtype=float))


def theta_jet(x3, s: float, params: PhysParams) -> Jet:
    """Jet of Theta(x3 / sqrt(s)) in x3 for a given age s."""
    x3 = np.asarray(x3, dtype=float)
    q = params.rho_bar / (4.0 * params.mu * s)
    base = theta(x3 / np.sqrt(s), params)
    # d/dx3 Theta(x3/sqrt(s)) = 2 sqrt(q/pi) exp(-q x3^2)
    slope = gaussian_derivs(x3, q, 2.0 * np.sqrt(q / np.pi), 3)
    return Jet.from_levels(base, *slope)


def vortex_layer_velocity(x3, t, params: PhysParams, age: float | None = None):
    """Tangential velocity components of the viscous layer at age t + age.

    The layer is an exact shear solution: only tangential components, each a
    function of x3 alone, with limits +-u_bar as x3 -> +-infinity.
    """
    s = t + (params.t0 if age is None else age)
    if s <= 0:
        raise ValueError("layer age t + age must be positive")
    ramp = theta(np.asarray(x3, dtype=float) / np.sqrt(s), params)
    return tuple(ub * ramp for ub in params.u_bar)


def vortex_layer_velocity_jet(x3, t, params: PhysParams, age: float | None = None) -> list[Jet]:
    s = t + (params.t0 if age is None else age)
    base = theta_jet(x3, s, params)
    return [base * ub for ub in params.u_bar]


def vortex_layer_vorticity(x3, t, params: PhysParams, age: float | None = None):
    """Gaussian vorticity profile of the layer.

    Returns d_x3 of each tangential velocity component; for d = 1 this is the
    single in-plane vorticity magnitude, for d = 2 the pair (d3 u1, d3 u2)
    whose arrangement against e3 gives the 3D curl.
    """
    s = t + (params.t0 if age is None else age)
    if s <= 0:
        raise ValueError("layer age must be positive")
    x3 = np.asarray(x3, dtype=float)
    pref = np.sqrt(params.rho_bar / np.pi) / np.sqrt(params.mu * s)
    shape = pref * np.exp(-params.rho_bar * x3 ** 2 / (4.0 * params.mu * s))
    comps = tuple(ub * shape for ub in params.u_bar)
    return comps[0] if params.d == 1 else comps


def vortex_layer_dt(x3, t, params: PhysParams, age: float | None = None):
    """Exact time derivative of each layer component (heat equation)."""
    jets = vortex_layer_velocity_jet(x3, t, params, age)
    nu = params.mu / params.rho_bar
    return tuple(nu * j.order(2) for j in jets)


# --- diffusion waves ---------------------------------------------------------


def wave_speed(params: PhysParams, branch: str) -> float:
    if branch == "center":
        return 0.0
    if branch == "plus":
        return params.sound_speed / params.eps
    if branch == "minus":
        return -params.sound_speed / params.eps
    raise ValueError(f"unknown branch {branch!r}")


def _wave_frame(x3, t, params: PhysParams, branch: str):
    s = t + params.Lambda
    if s <= 0:
        raise ValueError("t + Lambda must be positive")
    xi = np.asarray(x3, dtype=float) - wave_speed(params, branch) * s
    q = params.rho_bar / (4.0 * params.mu * s)
    amp = np.sqrt(params.rho_bar) / (2.0 * np.sqrt(np.pi * params.mu * s))
    return xi, q, amp


def diffusion_wave(x3, t, params: PhysParams, branch: str = "center"):
    """Unit-mass Gaussian kernel, stationary or traveling at +-a/eps.

    The traveling branches are exact translates of the centered kernel:
    theta_pm(x3, t) = theta(x3 -+ (a/eps)(t + Lambda), t).
    """
    xi, q, amp = _wave_frame(x3, t, params, branch)
    return amp * np.exp(-q * xi ** 2)


def diffusion_wave_jet(x3, t, params: PhysParams, branch: str = "center", base_order: int = 0) -> Jet:
    """Jet of the base_order-th x3-derivative of a diffusion wave."""
    xi, q, amp = _wave_frame(x3, t, params, branch)
    return gaussian_jet(xi, q, amp, base_order)


def diffusion_wave_dt(x3, t, params: PhysParams, branch: str = "center"):
    """Exact time derivative from the transport-diffusion equation."""
    xi, q, amp = _wave_frame(x3, t, params, branch)
    derivs = gaussian_derivs(xi, q, amp, 2)
    return params.mu / params.rho_bar * derivs[2] - wave_speed(params, branch) * derivs[1]
