"""Physical and scaling constants shared by every module."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


@dataclass(frozen=True)
class PhysParams:
    """Physical constants of the scaled compressible system.

    Attributes:
        rho_bar: far-field density (> 0).
        u_bar: tangential far-field velocity, one entry per tangential
            direction; the normal component is zero by construction.
        mu: shear viscosity (> 0).
        lam: second viscosity, constrained by mu + lam >= 0.
        gamma: adiabatic exponent of the pressure law p(rho) = rho**gamma.
        eps: Mach number in (0, 1].
        t0: age of the background shear layer (> 0).
        Lambda: age of the auxiliary flow and of the diffusion waves (>= 1).
    """

    rho_bar: float = 1.0
    u_bar: tuple[float, ...] = (1.0,)
    mu: float = 0.01
    lam: float = 0.0
    gamma: float = 1.4
    eps: float = 0.1
    t0: float = 100.0
    Lambda: float = 1.0

    def __post_init__(self):
        if self.rho_bar <= 0:
            raise ValueError("rho_bar must be positive")
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if self.mu + self.lam < 0:
            raise ValueError("mu + lam must be nonnegative")
        if self.gamma <= 1:
            raise ValueError("gamma must exceed 1")
        if not 0 < self.eps <= 1:
            raise ValueError("eps must lie in (0, 1]")
        if self.t0 <= 0:
            raise ValueError("t0 must be positive")
        if self.Lambda < 1:
            raise ValueError("Lambda must be >= 1")
        object.__setattr__(self, "u_bar", tuple(float(c) for c in self.u_bar))

    @property
    def d(self) -> int:
        """Number of tangential directions carried by u_bar."""
        return len(self.u_bar)

    @property
    def mu_tilde(self) -> float:
        """Longitudinal viscosity 2*mu + lam."""
        return 2.0 * self.mu + self.lam

    @property
    def sound_speed(self) -> float:
        """Reference sound speed sqrt(p'(rho_bar)) = sqrt(gamma rho_bar^(gamma-1))."""
        return float(np.sqrt(self.gamma * self.rho_bar ** (self.gamma - 1.0)))

    @property
    def u_bar_mag(self) -> float:
        return float(np.sqrt(sum(c * c for c in self.u_bar)))

    def pressure(self, rho):
        return rho ** self.gamma

    def dpressure(self, rho):
        return self.gamma * rho ** (self.gamma - 1.0)

    def d2pressure(self, rho):
        return self.gamma * (self.gamma - 1.0) * rho ** (self.gamma - 2.0)

    def d3pressure(self, rho):
        g = self.gamma
        return g * (g - 1.0) * (g - 2.0) * rho ** (g - 3.0)

    def varpi(self, rho1, rho2):
        """Pressure remainder p(rho1) - p(rho2) - p'(rho2)(rho1 - rho2)."""
        return self.pressure(rho1) - self.pressure(rho2) - self.dpressure(rho2) * (rho1 - rho2)

    def with_lambda(self, Lambda: float) -> "PhysParams":
        return replace(self, Lambda=float(Lambda))


def lambda_from_data(params: PhysParams, m0_norm: float, c1: float = 10.0) -> float:
    """Auxiliary-flow age from the amplitude of the flow and the data.

    Follows the selection rule Lambda = max(C1 (|u_bar|^2 + M0), 1) with a
    configurable constant C1.  The value is only a default; experiments may
    override it to probe how the estimates degrade for small Lambda.
    """
    return max(c1 * (params.u_bar_mag ** 2 + m0_norm), 1.0)
