"""Truncated power series in the four generating variables (w_m, w_n, w_u, w_v).

A :class:`Jet4` stores a dense ``(d+1, d+1, d+1, d+1)`` complex array whose entry
``[a, b, c, e]`` is the coefficient of ``w_m**a * w_n**b * w_u**c * w_v**e``.
Every variable is capped at degree ``d``; products discard anything beyond the
cap.  The cap ideal is generated by monomials, so the non-constant part of a
jet is nilpotent (its ``4d+1``-th power vanishes) and ``log``, ``exp`` and real
powers are finite sums, exact up to rounding.

The coefficient at ``(r_m, r_n, r_u, r_v)`` equals the mixed derivative
``d^(r_m+r_n+r_u+r_v) f / (dw_m^r_m ...)`` at zero divided by
``r_m! r_n! r_u! r_v!``; :func:`deriv_coeff` therefore applies no factorials.
"""
from __future__ import annotations

import cmath
from numbers import Number

import numpy as np
from .modes import DomainError

NVARS = 4
W_M, W_N, W_U, W_V = range(NVARS)


class SingularSeriesError(ArithmeticError):
    """Logarithm or fractional power of a series with zero constant term."""


class Jet4:
    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        c = np.asarray(coeffs, dtype=complex)
        if c.ndim != NVARS or len(set(c.shape)) != 1:
            raise DomainError(f"Jet4 needs a 4-d cube of coefficients, got shape {c.shape}")
        self.coeffs = c

    @property
    def d_max(self) -> int:
        return self.coeffs.shape[0] - 1

    @classmethod
    def zeros(cls, d_max: int) -> "Jet4":
        return cls(np.zeros((d_max + 1,) * NVARS, dtype=complex))

    @classmethod
    def constant(cls, value, d_max: int) -> "Jet4":
        j = cls.zeros(d_max)
        j.coeffs[0, 0, 0, 0] = value
        return j

    @classmethod
    def variable(cls, which: int, d_max: int) -> "Jet4":
        """The monomial w_m, w_n, w_u or w_v (``which`` = 0..3)."""
        j = cls.zeros(d_max)
        if d_max >= 1:
            idx = [0] * NVARS
            idx[which] = 1
            j.coeffs[tuple(idx)] = 1.0
        return j

    @property
    def constant_term(self) -> complex:
        return complex(self.coeffs[0, 0, 0, 0])

    def copy(self) -> "Jet4":
        return Jet4(self.coeffs.copy())

    def _coerce(self, other) -> "Jet4":
        if isinstance(other, Jet4):
            if other.d_max != self.d_max:
                raise DomainError(f"degree caps differ: {self.d_max} vs {other.d_max}")
            return other
        if isinstance(other, Number):
            return Jet4.constant(other, self.d_max)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return Jet4(self.coeffs + other.coeffs)

    __radd__ = __add__

    def __neg__(self):
        return Jet4(-self.coeffs)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return Jet4(self.coeffs - other.coeffs)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Number):
            return Jet4(self.coeffs * other)
        if isinstance(other, Jet4):
            return mul(self, other)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Number):
            return Jet4(self.coeffs / other)
        if isinstance(other, Jet4):
            return mul(self, pow_real(other, -1))
        return NotImplemented

    def __pow__(self, p):
        return pow_real(self, p)

    def __repr__(self):
        nz = np.count_nonzero(self.coeffs)
        return f"Jet4(d_max={self.d_max}, nonzero={nz}, c0={self.constant_term:.6g})"


def mul(x: Jet4, y: Jet4) -> Jet4:
    """Truncated Cauchy product."""
    if x.d_max != y.d_max:
        raise DomainError(f"degree caps differ: {x.d_max} vs {y.d_max}")
    a, b = x.coeffs, y.coeffs
    # loop over the sparser factor
    if np.count_nonzero(a) > np.count_nonzero(b):
        a, b = b, a
    n = a.shape[0]
    out = np.zeros_like(b)
    for i, j, k, m in np.argwhere(a != 0):
        out[i:, j:, k:, m:] += a[i, j, k, m] * b[: n - i, : n - j, : n - k, : n - m]
    return Jet4(out)


def _split(x: Jet4) -> tuple[complex, Jet4]:
    x0 = x.constant_term
    if x0 == 0:
        raise SingularSeriesError("series has zero constant term")
    g = x.coeffs / x0
    g[0, 0, 0, 0] = 0.0
    return x0, Jet4(g)


def _horner(g: Jet4, coefs) -> Jet4:
    """sum_k coefs[k] * g**k for nilpotent g (constant term zero)."""
    acc = Jet4.constant(coefs[-1], g.d_max)
    for c in coefs[-2::-1]:
        acc = mul(acc, g)
        acc.coeffs[0, 0, 0, 0] += c
    return acc


def binomial_coefficients(p, kmax: int) -> list:
    """Generalised binomial coefficients C(p, k), k = 0..kmax, for any real p."""
    out = [1.0]
    for k in range(1, kmax + 1):
        out.append(out[-1] * (p - k + 1) / k)
    return out


def _nil_order(x: Jet4) -> int:
    # g**k vanishes once k exceeds the largest total degree, NVARS * d_max
    return NVARS * x.d_max


def pow_real(x: Jet4, p) -> Jet4:
    """x**p through the principal branch: x0**p * (1 + g)**p with g = x/x0 - 1.

    The binomial series in the nilpotent part ``g`` terminates, so the result
    equals ``exp(p * log(x))`` exactly in the truncated ring.
    """
    if isinstance(p, (int, np.integer)) and p >= 0:
        out = Jet4.constant(1.0, x.d_max)
        base = x
        e = int(p)
        while e:
            if e & 1:
                out = mul(out, base)
            e >>= 1
            if e:
                base = mul(base, base)
        return out
    x0, g = _split(x)
    kmax = _nil_order(x)
    coefs = binomial_coefficients(p, kmax)
    res = _horner(g, coefs)
    return Jet4(res.coeffs * cmath.exp(p * cmath.log(x0)))


def log(x: Jet4) -> Jet4:
    x0, g = _split(x)
    kmax = _nil_order(x)
    coefs = [0.0] + [(-1) ** (k + 1) / k for k in range(1, kmax + 1)]
    res = _horner(g, coefs)
    res.coeffs[0, 0, 0, 0] += cmath.log(x0)
    return res


def exp(x: Jet4) -> Jet4:
    h = x.copy()
    c0 = h.constant_term
    h.coeffs[0, 0, 0, 0] = 0.0
    kmax = _nil_order(x)
    coefs = [1.0]
    for k in range(1, kmax + 1):
        coefs.append(coefs[-1] / k)
    res = _horner(h, coefs)
    return Jet4(res.coeffs * cmath.exp(c0))


def deriv_coeff(x: Jet4, orders) -> complex:
    orders = tuple(int(o) for o in orders)
    if len(orders) != NVARS or min(orders) < 0:
        raise DomainError(f"orders must be four non-negative ints, got {orders}")
    if max(orders) > x.d_max:
        raise DomainError(f"order {orders} exceeds degree cap {x.d_max}")
    return complex(x.coeffs[orders])
