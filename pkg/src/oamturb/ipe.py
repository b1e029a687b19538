"""Coherent and dissipative superoperators of the single-photon propagation equation.

Conventions
-----------
Density matrices are column-stacked: ``col(rho)[m + N*n] = rho[m, n]``.  A
superoperator entry ``X[(m, n), (u, v)]`` therefore lives at row ``m + N*n``,
column ``u + N*v`` and ``col(A @ rho @ B) = kron(B.T, A) @ col(rho)``.

Both generators are returned either per metre of propagation (``units="z"``)
or per unit of the dimensionless distance ``t = z * lambda / (pi * omega_0**2)``
(``units="t"``, the default), the latter being the former times the Rayleigh
range.

The dissipator is the Kolmogorov (infinite outer scale) limit, with the
outer-scale divergence of the pair-diagonal entries already cancelled against
the total scattering rate, so no regularising parameter appears.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.special import binom, gamma, gammaln

from . import series
from .modes import DomainError, ModeIndex, PhysicalParams, Truncation, dimension
from .series import Jet4

UNITS = ("t", "z")
# 5 pi^3 / (9 sqrt(2) Gamma(1/3)); multiplies C_n^2 / lambda^2
_DISS_PREFACTOR = 5 * math.pi**3 / (9 * math.sqrt(2) * gamma(1 / 3))


def _unit_scale(params: PhysicalParams, units: str) -> float:
    if units == "t":
        return params.z_R
    if units == "z":
        return 1.0
    raise DomainError(f"units must be one of {UNITS}, got {units!r}")


# ---------------------------------------------------------------------------
# free-space propagation
# ---------------------------------------------------------------------------


def free_space_element(m: ModeIndex, n: ModeIndex, params: PhysicalParams) -> complex:
    """Matrix element S_{m,n} of the free-space term, in 1/m."""
    if m.l != n.l:
        return 0j
    a = abs(m.l)
    two_zr = 2 * params.z_R
    if m.r == n.r:
        return 1j * (1 + a + 2 * m.r) / two_zr
    if abs(m.r - n.r) == 1:
        r = (m.r + n.r - 1) // 2
        return 1j * math.sqrt(1 + a + r) * math.sqrt(1 + r) / two_zr
    return 0j


def free_space_matrix(trunc: Truncation, params: PhysicalParams, units: str = "z") -> np.ndarray:
    N = dimension(trunc)
    modes = list(trunc.modes())
    S = np.zeros((N, N), dtype=complex)
    for i, mi in enumerate(modes):
        for j in range(max(0, i - 1), min(N, i + 2)):
            S[i, j] = free_space_element(mi, modes[j], params)
    return S * _unit_scale(params, units)


def assemble_coherent(trunc: Truncation, params: PhysicalParams, units: str = "t") -> np.ndarray:
    """C[(m,n),(u,v)] = S[u,m] delta[v,n] - S[v,n] delta[m,u]."""
    S = free_space_matrix(trunc, params, units)
    eye = np.eye(S.shape[0])
    return np.kron(eye, S.T) - np.kron(S.T, eye)


def divergent_term(params: PhysicalParams, kappa0: float) -> float:
    """Total scattering rate L_T at finite outer-scale wavenumber kappa0 (1/m), in 1/m.

    Diagnostic only: assembled dissipators already have it cancelled.
    """
    if not kappa0 > 0:
        raise DomainError(f"kappa0 must be positive, got {kappa0}")
    return 8 * math.pi**3 * params.cn2 / (3 * kappa0 ** (10 / 6) * params.wavelength**2 * gamma(1 / 3))


# ---------------------------------------------------------------------------
# dissipator generating function
# ---------------------------------------------------------------------------


def sum_bound(a: int, b: int) -> int:
    """M(a, b) = (|a| + |b| - |a - b|) / 2."""
    return (abs(a) + abs(b) - abs(a - b)) // 2


def selection_rule(lm: int, ln: int, lu: int, lv: int) -> bool:
    return lm - lu == ln - lv


def _omega_poly(t: float, e: int, d: int, conj: bool) -> np.ndarray:
    """Coefficients in w of Omega(t,w)**e, Omega = (1-it) - (1+it) w, e >= 0.

    ``conj`` conjugates the t-dependence only (w stays a formal variable).
    """
    alpha, beta = (1 - 1j * t), (1 + 1j * t)
    if conj:
        alpha, beta = beta, alpha
    k = np.arange(d + 1)
    out = binom(e, k) * alpha ** (e - k).astype(float) * (-beta) ** k.astype(float)
    out[k > e] = 0.0
    return out


def _pair_factor(t: float, e_first: int, e_second: int, n: int, d: int, conj_first: bool) -> np.ndarray:
    """2-variable series Omega(x)^e1 Omega*(y)^e2 (1 - x y)^(-n) as a (d+1, d+1) array.

    The first variable carries Omega (or Omega* when ``conj_first``), the second
    the opposite conjugation.
    """
    px = _omega_poly(t, e_first, d, conj_first)
    py = _omega_poly(t, e_second, d, not conj_first)
    outer = np.outer(px, py)
    # (1 - xy)^(-n) = sum_k C(n+k-1, k) (xy)^k
    out = np.zeros_like(outer)
    for k in range(d + 1):
        ck = binom(n + k - 1, k)
        out[k:, k:] += ck * outer[: d + 1 - k, : d + 1 - k]
    return out


@dataclass
class DissipatorContext:
    """Per-distance cache shared by every azimuthal quadruple.

    Holds the powers B**P of the mixing polynomial, which depend on the
    quadruple only through the integer j = sum|l|/2 - (s + s').
    """

    params: PhysicalParams
    trunc: Truncation
    t: float
    d_max: int = field(init=False)
    _bpow: dict = field(init=False, default_factory=dict, repr=False)
    _binv: Jet4 | None = field(init=False, default=None, repr=False)

    def __post_init__(self):
        self.d_max = self.trunc.L_cut
        self.B = mixing_polynomial(self.t, self.params.waist, self.d_max)

    def B_power(self, j: int) -> Jet4:
        """B**(5/6 - j)."""
        if j not in self._bpow:
            if j == 0:
                try:
                    self._bpow[0] = series.pow_real(self.B, 5 / 6)
                except series.SingularSeriesError as exc:
                    raise series.SingularSeriesError(
                        f"B has zero constant term at t={self.t}"
                    ) from exc
            else:
                if self._binv is None:
                    self._binv = series.pow_real(self.B, -1)
                self._bpow[j] = series.mul(self.B_power(j - 1), self._binv)
        return self._bpow[j]


def mixing_polynomial(t: float, waist: float, d_max: int) -> Jet4:
    """B(w_m, w_n, w_u, w_v; t) as a jet.

    B = -omega_0^2 poly / ((w_m w_u - 1)(w_n w_v - 1)) with the polynomial
    written out term by term; B(0) = 2 omega_0^2 (1 + t^2).
    """
    wm, wn, wu, wv = (Jet4.variable(i, d_max) for i in range(4))
    one = Jet4.constant(1.0, d_max)
    poly = (
        t**2 * (wm * (wn * (2 * wu * wv + wu + wv) + wu * wv - 1) + wn * wu * wv - wn - wu - wv - 2)
        + 2j * t * (wm * (wn * wu - wn * wv - wu * wv + 1) + wn * wu * wv - wn - wu + wv)
        + wm * (2 * wn * wu * wv - wn * wu - wn * wv - wu * wv + 1)
        - wn * wu * wv + wn + wu + wv - 2.0
    )
    denom = (wm * wu - one) * (wn * wv - one)
    return (-(waist**2)) * series.mul(poly, series.pow_real(denom, -1))


def dissipator_generating(
    quad: tuple[int, int, int, int],
    t: float,
    params: PhysicalParams,
    trunc: Truncation,
    ctx: DissipatorContext | None = None,
) -> Jet4:
    """Radial generating function of the dissipator block for one azimuthal quadruple.

    Returns, per metre, the double sum over (s, s') whose coefficient at
    (r_m, r_n, r_u, r_v), multiplied by :func:`radial_norm`, is the dissipator
    entry D[(m,n),(u,v)].  Caller must ensure the selection rule holds.
    """
    lm, ln, lu, lv = quad
    if not selection_rule(*quad):
        raise DomainError(f"quadruple {quad} violates l_m - l_u = l_n - l_v")
    if ctx is None:
        ctx = DissipatorContext(params, trunc, t)
    d = ctx.d_max
    am, an, au, av = (abs(x) for x in quad)
    total = am + an + au + av
    phase = 1j ** ((am + au - an - av) % 4)
    pref = _DISS_PREFACTOR * params.cn2 / params.wavelength**2 * phase
    lfac = gammaln(am + 1) + gammaln(an + 1) + gammaln(au + 1) + gammaln(av + 1)

    # left factors depend on s (pair m,u), right factors on s' (pair n,v)
    left = {}
    for s in range(sum_bound(lm, lu) + 1):
        f = _pair_factor(t, au - s, am - s, am + au - s + 1, d, conj_first=False)
        left[s] = f * math.exp(-(gammaln(s + 1) + gammaln(am - s + 1) + gammaln(au - s + 1)))
    right = {}
    for s2 in range(sum_bound(ln, lv) + 1):
        g = _pair_factor(t, av - s2, an - s2, an + av - s2 + 1, d, conj_first=True)
        right[s2] = g * math.exp(-(gammaln(s2 + 1) + gammaln(an - s2 + 1) + gammaln(av - s2 + 1)))

    out = np.zeros((d + 1,) * 4, dtype=complex)
    for sigma in range(len(left) + len(right) - 1):
        acc = np.zeros((d + 1, d + 1, d + 1, d + 1), dtype=complex)
        for s, f in left.items():
            s2 = sigma - s
            if s2 in right:
                # f over (w_m, w_u), g over (w_n, w_v) -> axes (a, b, c, e) = (m, n, u, v)
                acc += np.einsum("ac,be->abce", f, right[s2])
        j = total // 2 - sigma
        scal = (-1) ** sigma * math.exp(lfac) * params.waist ** (2 * j) * gamma(j - 5 / 6)
        out += scal * series.mul(Jet4(acc), ctx.B_power(j)).coeffs
    return Jet4(pref * out)


def radial_norm(lm, ln, lu, lv, rm, rn, ru, rv) -> float:
    """prod sqrt(r! / (r + |l|)!) over the four modes."""
    s = 0.0
    for l, r in ((lm, rm), (ln, rn), (lu, ru), (lv, rv)):
        s += gammaln(r + 1) - gammaln(r + abs(l) + 1)
    return math.exp(0.5 * s)


def dissipator_element(
    m: ModeIndex,
    n: ModeIndex,
    u: ModeIndex,
    v: ModeIndex,
    t: float,
    params: PhysicalParams,
    trunc: Truncation,
    units: str = "t",
    ctx: DissipatorContext | None = None,
) -> complex:
    if not selection_rule(m.l, n.l, u.l, v.l):
        return 0j
    for x in (m, n, u, v):
        if not trunc.contains(x):
            raise DomainError(f"{x} outside truncation L_cut={trunc.L_cut}")
    jet = dissipator_generating((m.l, n.l, u.l, v.l), t, params, trunc, ctx)
    c = series.deriv_coeff(jet, (m.r, n.r, u.r, v.r))
    return c * radial_norm(m.l, n.l, u.l, v.l, m.r, n.r, u.r, v.r) * _unit_scale(params, units)


def assemble_dissipator(
    trunc: Truncation, params: PhysicalParams, t: float, units: str = "t"
) -> np.ndarray:
    """Full N^2 x N^2 dissipator at distance t (dimensionless)."""
    N = dimension(trunc)
    L = trunc.L_cut
    R = L + 1
    ctx = DissipatorContext(params, trunc, t)
    scale = _unit_scale(params, units)
    ls = range(-L, L + 1)
    rr = np.arange(R)
    # log sqrt(r!/(r+|l|)!) per (l, r)
    half_log = {l: 0.5 * (gammaln(rr + 1) - gammaln(rr + abs(l) + 1)) for l in ls}
    D = np.zeros((N, N, N, N), dtype=complex)  # D[m, n, u, v]
    for lm, ln, lu in product(ls, repeat=3):
        lv = ln - lm + lu
        if abs(lv) > L:
            continue
        jet = dissipator_generating((lm, ln, lu, lv), t, params, trunc, ctx).coeffs
        norm = np.exp(
            half_log[lm][:, None, None, None]
            + half_log[ln][None, :, None, None]
            + half_log[lu][None, None, :, None]
            + half_log[lv][None, None, None, :]
        )
        bm, bn, bu, bv = ((x + L) * R for x in (lm, ln, lu, lv))
        D[bm : bm + R, bn : bn + R, bu : bu + R, bv : bv + R] = jet * norm * scale
    # row m + N n, column u + N v
    return D.transpose(1, 0, 3, 2).reshape(N * N, N * N)
