"""Discretization of the periodic strip T^d x [-L, L] and fields on it.

Tangential directions are unit tori sampled at n_perp equispaced points each;
the normal axis is the truncation [-L, L] of the real line with n3 uniform
intervals.  Field values are stored with the tangential axes first and the
normal axis last, so ``values[..., j]`` is the tangential slice at the j-th
normal node.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Tensor grid for the truncated strip.

    d: number of tangential directions (1 or 2).
    n_perp: points per tangential direction (power of two).
    L: half-length of the truncated normal axis.
    n3: number of normal intervals (n3 + 1 nodes).
    """

    d: int = 1
    n_perp: int = 64
    L: float = 40.0
    n3: int = 1024

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError("d must be 1 or 2")
        if self.n_perp < 2 or (self.n_perp & (self.n_perp - 1)) != 0:
            raise ValueError("n_perp must be a power of two")
        if self.n3 < 16:
            raise ValueError("n3 must be at least 16")
        if self.L <= 0:
            raise ValueError("L must be positive")

    @property
    def h3(self) -> float:
        return 2.0 * self.L / self.n3

    @property
    def h_perp(self) -> float:
        return 1.0 / self.n_perp

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_perp,) * self.d + (self.n3 + 1,)

    @property
    def tangential_axes(self) -> tuple[int, ...]:
        return tuple(range(self.d))

    def x3(self) -> np.ndarray:
        return np.linspace(-self.L, self.L, self.n3 + 1)

    def x_perp(self, direction: int) -> np.ndarray:
        if not 0 <= direction < self.d:
            raise ValueError("tangential direction out of range")
        return np.arange(self.n_perp) / self.n_perp

    def meshgrid(self):
        """Coordinate arrays broadcastable against field values."""
        axes = [self.x_perp(i) for i in range(self.d)] + [self.x3()]
        return np.meshgrid(*axes, indexing="ij")

    def x3_broadcast(self) -> np.ndarray:
        """x3 shaped (1, ..., n3+1) for arithmetic against field values."""
        return self.x3().reshape((1,) * self.d + (-1,))

    def trapezoid_weights(self) -> np.ndarray:
        """Quadrature weights along the normal axis."""
        w = np.full(self.n3 + 1, self.h3)
        w[0] = w[-1] = 0.5 * self.h3
        return w


@dataclass
class Field:
    """Scalar field on the full grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"field shape {self.values.shape} does not match grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())

    def __add__(self, other):
        return Field(self.grid, self.values + _raw(other))

    def __sub__(self, other):
        return Field(self.grid, self.values - _raw(other))

    def __mul__(self, other):
        return Field(self.grid, self.values * _raw(other))

    __rmul__ = __mul__


@dataclass
class Profile:
    """Scalar function of the normal coordinate only."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n3 + 1,):
            raise ValueError("profile length must be n3 + 1")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("profile contains non-finite values")

    def copy(self) -> "Profile":
        return Profile(self.grid, self.values.copy())

    def broadcast(self) -> Field:
        """Extend to a full Field constant in the tangential directions."""
        g = self.grid
        return Field(g, np.broadcast_to(self.values, g.shape).copy())

    def __add__(self, other):
        return Profile(self.grid, self.values + _raw(other))

    def __sub__(self, other):
        return Profile(self.grid, self.values - _raw(other))

    def __mul__(self, other):
        return Profile(self.grid, self.values * _raw(other))

    __rmul__ = __mul__


def _raw(x):
    if isinstance(x, (Field, Profile)):
        return x.values
    return x


def field_from_function(grid: Grid, fn) -> Field:
    """Sample fn(x1[, x2], x3) on the grid."""
    return Field(grid, np.asarray(fn(*grid.meshgrid()), dtype=float))


def profile_from_function(grid: Grid, fn) -> Profile:
    return Profile(grid, np.asarray(fn(grid.x3()), dtype=float))


# --- serialization ---------------------------------------------------------
#
# Flat binary of float64 with a one-line JSON header carrying (d, n_perp, n3,
# L, kind).  Values are written row-major with the tangential index fastest,
# i.e. the transpose of the in-memory layout.

_MAGIC = b"VLFIELD1\n"


def save_field(path, obj: Field | Profile) -> None:
    g = obj.grid
    kind = "profile" if isinstance(obj, Profile) else "field"
    header = json.dumps({"d": g.d, "n_perp": g.n_perp, "n3": g.n3, "L": g.L, "kind": kind})
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(header.encode() + b"\n")
        if kind == "field":
            np.ascontiguousarray(np.moveaxis(obj.values, -1, 0)).tofile(f)
        else:
            obj.values.tofile(f)


def load_field(path) -> Field | Profile:
    with open(path, "rb") as f:
        magic = f.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a field file")
        header = json.loads(f.readline().decode())
        g = Grid(d=header["d"], n_perp=header["n_perp"], L=header["L"], n3=header["n3"])
        data = np.fromfile(f, dtype=float)
    if header["kind"] == "profile":
        return Profile(g, data)
    arr = np.moveaxis(data.reshape((g.n3 + 1,) + (g.n_perp,) * g.d), 0, -1)
    return Field(g, arr.copy())


def profile_to_csv(path, profiles: dict[str, Profile]) -> None:
    """Write named profiles as columns next to the x3 coordinate."""
    items = list(profiles.items())
    if not items:
        raise ValueError("no profiles given")
    g = items[0][1].grid
    cols = [g.x3()] + [p.values for _, p in items]
    names = ["x3"] + [name for name, _ in items]
    buf = io.StringIO()
    buf.write(",".join(names) + "\n")
    for row in np.column_stack(cols):
        buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
    with open(path, "w") as f:
        f.write(buf.getvalue())
