"""Truncated derivative stacks (value and first four x3-derivatives).

The ansatz error terms need clean analytic derivatives of products and
quotients of Gaussians and error-function profiles.  A Jet carries
[f, f', f'', f''', f''''] evaluated on a common point set and implements the
Leibniz, quotient and chain rules at that truncation order.
"""

from __future__ import annotations

import numpy as np

K = 4  # highest derivative carried

_BINOM = np.array(
    [
        [1, 0, 0, 0, 0],
        [1, 1, 0, 0, 0],
        [1, 2, 1, 0, 0],
        [1, 3, 3, 1, 0],
        [1, 4, 6, 4, 1],
    ],
    dtype=float,
)

# physicists' Hermite polynomials H_0 .. H_5 as coefficient callbacks
_HERMITE = (
    lambda y: np.ones_like(y),
    lambda y: 2.0 * y,
    lambda y: 4.0 * y ** 2 - 2.0,
    lambda y: 8.0 * y ** 3 - 12.0 * y,
    lambda y: 16.0 * y ** 4 - 48.0 * y ** 2 + 12.0,
    lambda y: 32.0 * y ** 5 - 160.0 * y ** 3 + 120.0 * y,
)


class Jet:
    __slots__ = ("v",)

    def __init__(self, stack):
        self.v = np.asarray(stack, dtype=float)
        if self.v.shape[0] != K + 1:
            raise ValueError(f"jet needs {K + 1} derivative levels")

    @classmethod
    def constant(cls, value, like: np.ndarray) -> "Jet":
        stack = np.zeros((K + 1,) + np.shape(like))
        stack[0] = value
        return cls(stack)

    @classmethod
    def from_levels(cls, *levels) -> "Jet":
        return cls(np.stack(np.broadcast_arrays(*levels)))

    def order(self, j: int) -> np.ndarray:
        return self.v[j]

    @property
    def value(self) -> np.ndarray:
        return self.v[0]

    def d3(self) -> "Jet":
        """Jet of the x3-derivative; the top level is no longer trusted.

        Only orders 0..K-1 of the result are exact, which is all the error
        monitors consume.  The top level is padded with zeros.
        """
        stack = np.concatenate([self.v[1:], np.zeros((1,) + self.v.shape[1:])])
        return Jet(stack)

    def __add__(self, other):
        return Jet(self.v + _coerce(other, self))

    __radd__ = __add__

    def __sub__(self, other):
        return Jet(self.v - _coerce(other, self))

    def __rsub__(self, other):
        return Jet(_coerce(other, self) - self.v)

    def __neg__(self):
        return Jet(-self.v)

    def __mul__(self, other):
        o = _coerce(other, self)
        out = np.empty(np.broadcast_shapes(self.v.shape, o.shape))
        for n in range(K + 1):
            acc = self.v[0] * 0.0
            for k in range(n + 1):
                acc = acc + _BINOM[n, k] * self.v[k] * o[n - k]
            out[n] = acc
        return Jet(out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = _coerce(other, self)
        out = np.empty(np.broadcast_shapes(self.v.shape, o.shape))
        out[0] = self.v[0] / o[0]
        for n in range(1, K + 1):
            acc = self.v[n]
            for k in range(n):
                acc = acc - _BINOM[n, k] * out[k] * o[n - k]
            out[n] = acc / o[0]
        return Jet(out)

    def __rtruediv__(self, other):
        if isinstance(other, Jet):
            return other / self
        return Jet(_coerce(other, self)) / self

    def compose(self, g_derivs) -> "Jet":
        """Chain rule (Faa di Bruno to order 4) for a scalar map g.

        g_derivs: five callables (g, g', g'', g''', g'''') taking the jet
        value.
        """
        g0, g1, g2, g3, g4 = (g(self.v[0]) for g in g_derivs)
        f1, f2, f3, f4 = self.v[1], self.v[2], self.v[3], self.v[4]
        return Jet.from_levels(
            g0,
            g1 * f1,
            g2 * f1 ** 2 + g1 * f2,
            g3 * f1 ** 3 + 3.0 * g2 * f1 * f2 + g1 * f3,
            g4 * f1 ** 4
            + 6.0 * g3 * f1 ** 2 * f2
            + 3.0 * g2 * f2 ** 2
            + 4.0 * g2 * f1 * f3
            + g1 * f4,
        )


def _coerce(other, like: Jet) -> np.ndarray:
    if isinstance(other, Jet):
        return other.v
    stack = np.zeros((K + 1,) + np.shape(like.v[0]))
    stack[0] = other
    return stack


def gaussian_derivs(x: np.ndarray, q: float, amplitude: float, n_max: int) -> list[np.ndarray]:
    """Derivatives 0..n_max of amplitude * exp(-q x^2) via Hermite ladders."""
    if n_max >= len(_HERMITE):
        raise ValueError("Hermite ladder implemented up to order 5")
    x = np.asarray(x, dtype=float)
    y = np.sqrt(q) * x
    e = amplitude * np.exp(-(y ** 2))
    r = np.sqrt(q)
    return [((-r) ** n) * _HERMITE[n](y) * e for n in range(n_max + 1)]


def gaussian_jet(x: np.ndarray, q: float, amplitude: float = 1.0, base_order: int = 0) -> Jet:
    """Jet of the base_order-th derivative of amplitude * exp(-q x^2)."""
    derivs = gaussian_derivs(x, q, amplitude, base_order + K)
    return Jet.from_levels(*derivs[base_order : base_order + K + 1])
