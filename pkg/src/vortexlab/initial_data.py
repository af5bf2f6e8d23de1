"""Named initial-data families for the perturbation (eps*b0, v0).

Four smooth families cover the regimes the stability theory distinguishes:

* ``nonzero-bump``: tangentially modulated bumps, no zero-mode content in
  (b0, v03) and matched modulation phases, so every wave amplitude vanishes
  identically and the smallness channel chi is the only one excited.
* ``tangential-zeromode``: a pure zero-mode tangential velocity bump, the
  arbitrarily large channel (chi = 0); the flow stays an exact shear.
* ``acoustic-pulse``: a right-moving planar density/velocity pulse exciting
  the fast characteristic.
* ``mixed``: zero-mode acoustic pulse, tangential zero-mode bump and a
  divergence-free non-zero-mode roll.  The non-zero modes are built from a
  streamfunction on purpose: tangentially modulated acoustic content cannot
  radiate through the periodic directions and would sit in the box as an
  eps-independent oscillation, which is exactly what Mach sweeps must not
  seed.

All shapes are closed-form C-infinity functions; the seed only jitters the
tangential modulation phases (shared between b0 and v0 so the exact phase
cancellations survive).
"""

from __future__ import annotations

import numpy as np

from .grid import Field, Grid
from .params import PhysParams

FAMILIES = ("nonzero-bump", "tangential-zeromode", "acoustic-pulse", "mixed")


def _gauss(x3, center, width):
    return np.exp(-((x3 - center) ** 2) / (2.0 * width ** 2))


def _dipole(x3, center, width):
    return (x3 - center) / width * _gauss(x3, center, width)


def make_initial_data(
    grid: Grid,
    params: PhysParams,
    family: str,
    chi_amp: float = 0.05,
    zm_amp: float = 0.0,
    seed: int = 0,
) -> tuple[Field, list[Field]]:
    """Build (b0, v0) on the grid; v0 components tangential first, normal last."""
    if family not in FAMILIES:
        raise ValueError(f"unknown initial-data family {family!r}")
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=grid.d)
    mesh = grid.meshgrid()
    x3 = mesh[-1]
    zero = np.zeros(grid.shape)

    def mod_sin(direction):
        return np.sin(2.0 * np.pi * mesh[direction] + phases[direction])

    def mod_cos(direction):
        return np.cos(2.0 * np.pi * mesh[direction] + phases[direction])

    b0 = zero.copy()
    v0 = [zero.copy() for _ in range(grid.d + 1)]

    if family == "nonzero-bump":
        a = chi_amp
        b0 = b0 + a * mod_sin(0) * _gauss(x3, 0.0, 2.0)
        for i in range(grid.d):
            v0[i] = v0[i] + a * mod_cos(i) * _gauss(x3, -1.0, 2.5)
        v0[grid.d] = v0[grid.d] + a * mod_cos(0) * _dipole(x3, 0.5, 2.0)
        # optional small zero-mode tangential bump: not part of chi, narrow so
        # its self-similar heat decay is visible inside the fit window
        for i in range(grid.d):
            v0[i] = v0[i] + zm_amp * _gauss(x3, 0.0, 0.4)

    if family in ("tangential-zeromode", "mixed"):
        width = 0.5 if family == "tangential-zeromode" else 3.0
        for i in range(grid.d):
            v0[i] = v0[i] + zm_amp * _gauss(x3, (-1.0) ** i * 1.5 * (width / 3.0), width)

    if family in ("acoustic-pulse", "mixed"):
        a = chi_amp
        shape = _gauss(x3, -0.25 * grid.L if family == "acoustic-pulse" else 0.0, 2.0)
        b0 = b0 + a * shape
        v0[grid.d] = v0[grid.d] + a * params.sound_speed / params.rho_bar * shape

    if family == "mixed":
        # divergence-free non-zero-mode roll from the streamfunction
        # psi_i = (a / 2 pi) cos(2 pi x_i + phase) G: v_i += d3 psi_i, v_3 -= d_i psi_i
        a = chi_amp
        for i in range(grid.d):
            shape = _gauss(x3, 0.5, 2.0)
            v0[i] = v0[i] + (a / (2.0 * np.pi)) * mod_cos(i) * (-(x3 - 0.5) / 2.0 ** 2) * shape
            v0[grid.d] = v0[grid.d] + a * mod_sin(i) * shape

    return Field(grid, b0), [Field(grid, comp) for comp in v0]
