import math
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm
from scipy.special import gamma

from oamturb import ipe
from oamturb.modes import DomainError, ModeIndex, PhysicalParams, Truncation, dimension, from_index, to_index
from oamturb.series import deriv_coeff

from oracles import dissipator_entry_quadrature

P = PhysicalParams()


def idx(m, n, N):
    return m + N * n


# ---------------------------------------------------------------- free space


def test_free_space_examples():
    zr = P.z_R
    assert ipe.free_space_element(ModeIndex(0, 0), ModeIndex(0, 0), P) == pytest.approx(1j / (2 * zr))
    assert ipe.free_space_element(ModeIndex(2, 0), ModeIndex(3, 0), P) == 0
    assert ipe.free_space_element(ModeIndex(2, 1), ModeIndex(3, 1), P) == 0
    assert ipe.free_space_element(ModeIndex(1, 0), ModeIndex(1, 1), P) == pytest.approx(
        1j * math.sqrt(2) * math.sqrt(1) / (2 * zr))


def test_free_space_support_exhaustive():
    tr = Truncation(4)
    for m in tr.modes():
        for n in tr.modes():
            val = ipe.free_space_element(m, n, P)
            assert val.real == 0
            if m.l != n.l or abs(m.r - n.r) > 1:
                assert val == 0
            else:
                assert val != 0


def _coherent_by_hand(tr, params):
    """Entry-by-entry C[(m,n),(u,v)] = S[u,m] d[v,n] - S[v,n] d[m,u], in 1/m."""
    N = tr.N
    modes = list(tr.modes())
    C = np.zeros((N * N, N * N), dtype=complex)
    for m, n, u, v in np.ndindex(N, N, N, N):
        val = 0j
        if v == n:
            val += ipe.free_space_element(modes[u], modes[m], params)
        if m == u:
            val -= ipe.free_space_element(modes[v], modes[n], params)
        C[idx(m, n, N), idx(u, v, N)] = val
    return C


def test_coherent_L1_enumeration_oracle():
    tr = Truncation(1)
    C = ipe.assemble_coherent(tr, P, units="z")
    np.testing.assert_allclose(C, _coherent_by_hand(tr, P), atol=1e-20, rtol=1e-14)


def test_coherent_structure():
    tr = Truncation(2)
    N = tr.N
    C = ipe.assemble_coherent(tr, P)
    assert np.all(C.real == 0)
    assert np.abs(C + C.conj().T).max() <= 1e-13
    lv = tr.l_values()
    C4 = C.reshape(N, N, N, N)  # [n, m, v, u]
    nz = np.argwhere(C4 != 0)
    for n, m, v, u in nz:
        assert lv[u] == lv[m] or lv[v] == lv[n]


def test_coherent_is_commutator_with_S():
    tr = Truncation(2)
    S = ipe.free_space_matrix(tr, P, units="t")
    C = ipe.assemble_coherent(tr, P)
    rng = np.random.default_rng(3)
    X = rng.normal(size=(tr.N, tr.N)) + 1j * rng.normal(size=(tr.N, tr.N))
    lhs = (C @ X.reshape(-1, order="F")).reshape(tr.N, tr.N, order="F")
    np.testing.assert_allclose(lhs, S @ X - X @ S, atol=1e-13)


def test_units():
    tr = Truncation(1)
    np.testing.assert_allclose(ipe.assemble_coherent(tr, P, "t"), ipe.assemble_coherent(tr, P, "z") * P.z_R)
    with pytest.raises(DomainError):
        ipe.assemble_coherent(tr, P, "furlong")


# ---------------------------------------------------------------- divergent term


def test_divergent_term():
    assert ipe.divergent_term(P, 1.0) == pytest.approx(0.3086424, rel=1e-6)
    assert ipe.divergent_term(PhysicalParams(cn2=0.0), 1.0) == 0.0
    assert ipe.divergent_term(P, 0.5) / ipe.divergent_term(P, 1.0) == pytest.approx(2 ** (10 / 6), rel=1e-14)
    with pytest.raises(DomainError):
        ipe.divergent_term(P, 0.0)


# ---------------------------------------------------------------- generating function


def test_sum_bound_nonnegative_integer():
    for a in range(-5, 6):
        for b in range(-5, 6):
            M = ipe.sum_bound(a, b)
            assert M >= 0 and M == (abs(a) + abs(b) - abs(a - b)) / 2


@pytest.mark.parametrize("t", [0.0, 1.0, 7.5])
def test_all_zero_quadruple_hand_value(t):
    tr = Truncation(2)
    jet = ipe.dissipator_generating((0, 0, 0, 0), t, P, tr)
    B0 = 2 * P.waist**2 * (1 + t * t)
    A = 5 * math.pi**3 * P.cn2 / (9 * math.sqrt(2) * P.wavelength**2 * gamma(1 / 3))
    assert jet.constant_term == pytest.approx(A * gamma(-5 / 6) * B0 ** (5 / 6), rel=1e-13)


def test_mixing_polynomial_constant():
    B = ipe.mixing_polynomial(3.0, 0.01, 2)
    assert B.constant_term == pytest.approx(2 * 1e-4 * 10, rel=1e-14)


def test_zero_turbulence_gives_zero_jet():
    tr = Truncation(2)
    jet = ipe.dissipator_generating((1, 0, 0, -1), 2.0, PhysicalParams(cn2=0.0), tr)
    assert not np.any(jet.coeffs)


def test_generating_rejects_selection_violation():
    with pytest.raises(DomainError):
        ipe.dissipator_generating((1, 0, 0, 0), 0.0, P, Truncation(1))


quads = st.tuples(st.integers(-2, 2), st.integers(-2, 2), st.integers(-2, 2)).filter(
    lambda q: abs(q[1] - q[0] + q[2]) <= 2)


@settings(max_examples=15, deadline=None)
@given(quads, st.floats(0.0, 20.0), st.tuples(*[st.integers(0, 2)] * 4))
def test_generating_conjugation_symmetry(q, t, r):
    tr = Truncation(2)
    lm, ln, lu = q
    lv = ln - lm + lu
    a = ipe.dissipator_generating((lm, ln, lu, lv), t, P, tr)
    b = ipe.dissipator_generating((ln, lm, lv, lu), t, P, tr)
    rm, rn, ru, rv = r
    x = deriv_coeff(a, (rm, rn, ru, rv))
    y = deriv_coeff(b, (rn, rm, rv, ru))
    assert abs(x - np.conj(y)) <= 1e-12 * max(abs(x), 1e-300)


# ---------------------------------------------------------------- elements vs oracle

# D[(m,n),(u,v)] per metre from the momentum-space quadrature oracle (tests/oracles.py)
FROZEN = [
    (((0, 0), (0, 0), (0, 0), (0, 0)), 0.0, -0.00025117329681108015 + 0j),
    (((1, 0), (1, 0), (0, 0), (0, 0)), 0.0, 0.00010465554033795261 + 0j),
    (((1, 1), (0, 0), (0, 1), (-1, 0)), 1.0, 0.00023716075714803157j),
    (((2, 0), (-1, 1), (1, 0), (-2, 1)), 0.5, 0.00016013403361879805 + 0.00021351204482506395j),
    (((-1, 2), (1, 0), (-1, 1), (1, 1)), 2.0, -1.289057085110501e-05 - 4.4196242918074255e-05j),
    (((0, 1), (0, 1), (0, 1), (0, 1)), 1.0, -0.0011266412141130507 + 0j),
]


@pytest.mark.parametrize("modes, t, expect", FROZEN)
def test_element_matches_frozen_oracle(modes, t, expect):
    tr = Truncation(2)
    m, n, u, v = (ModeIndex(*x) for x in modes)
    val = ipe.dissipator_element(m, n, u, v, t, P, tr, units="z")
    assert abs(val - expect) <= 1e-9 * abs(expect)


@pytest.mark.parametrize("modes, t", [
    (((1, 0), (0, 1), (1, 1), (0, 0)), 0.3),
    (((-2, 1), (0, 0), (-1, 0), (1, 2)), 4.0),
    (((2, 2), (2, 2), (1, 1), (1, 1)), 1.5),
])
def test_element_matches_live_oracle(modes, t):
    tr = Truncation(2)
    m, n, u, v = (ModeIndex(*x) for x in modes)
    val = ipe.dissipator_element(m, n, u, v, t, P, tr, units="z")
    ref = dissipator_entry_quadrature(*modes, t, P.wavelength, P.waist, P.cn2)
    assert abs(val - ref) <= 1e-9 * max(abs(ref), 1e-12)


def test_element_selection_rule_and_zero_turbulence():
    tr = Truncation(2)
    m, n, u, v = ModeIndex(1, 0), ModeIndex(0, 0), ModeIndex(0, 0), ModeIndex(0, 0)
    assert ipe.dissipator_element(m, n, u, v, 1.0, P, tr) == 0
    m, n, u, v = ModeIndex(1, 0), ModeIndex(1, 0), ModeIndex(0, 0), ModeIndex(0, 0)
    assert ipe.dissipator_element(m, n, u, v, 1.0, PhysicalParams(cn2=0.0), tr) == 0


@settings(max_examples=20, deadline=None)
@given(st.lists(st.integers(0, 14), min_size=4, max_size=4), st.floats(0.0, 50.0))
def test_element_pair_hermiticity(ids, t):
    tr = Truncation(2)
    m, n, u, v = (from_index(i, tr) for i in ids)
    a = ipe.dissipator_element(m, n, u, v, t, P, tr)
    b = ipe.dissipator_element(n, m, v, u, t, P, tr)
    assert abs(a - np.conj(b)) <= 1e-12 * max(abs(a), 1e-300)


# ---------------------------------------------------------------- assembly


@pytest.fixture(scope="module")
def D2():
    return ipe.assemble_dissipator(Truncation(2), P, 1.0)


def test_assembly_matches_elements(D2):
    tr = Truncation(2)
    N = tr.N
    rng = np.random.default_rng(0)
    for _ in range(40):
        m, n, u, v = rng.integers(0, N, 4)
        val = ipe.dissipator_element(*(from_index(int(i), tr) for i in (m, n, u, v)), 1.0, P, tr)
        assert D2[idx(m, n, N), idx(u, v, N)] == pytest.approx(val, rel=1e-12, abs=1e-300)


def _pair_swap(N):
    """Permutation sending row (m,n) -> (n,m)."""
    k = np.arange(N * N)
    m, n = k % N, k // N
    return n + N * m


def test_assembly_pair_hermitian_and_selection(D2):
    tr = Truncation(2)
    N = tr.N
    p = _pair_swap(N)
    scale = np.abs(D2).max()
    assert np.abs(D2 - D2[p][:, p].conj()).max() <= 1e-12 * scale
    lv = tr.l_values()
    k = np.arange(N * N)
    dl_row = lv[k % N] - lv[k // N]  # l_m - l_n
    bad = dl_row[:, None] != dl_row[None, :]  # l_m - l_n != l_u - l_v  <=>  l_m - l_u != l_n - l_v
    assert np.all(D2[bad] == 0)
    assert np.count_nonzero(D2[~bad]) > 0.9 * (~bad).sum()


def test_structure_stable_in_t():
    tr = Truncation(2)
    a = ipe.assemble_dissipator(tr, P, 50.0)
    b = ipe.assemble_dissipator(tr, P, 100.0)
    np.testing.assert_array_equal(a != 0, b != 0)


def test_magnitude_decays_with_azimuthal_shift():
    tr = Truncation(3)
    D = ipe.assemble_dissipator(tr, P, 100.0)
    N = tr.N
    lv = tr.l_values()
    k = np.arange(N * N)
    lm = lv[k % N][:, None]
    lu = lv[k % N][None, :]
    shift = np.abs(lm - lu)
    mag = np.abs(D)
    medians = [np.median(mag[(shift == s) & (mag > 0)]) for s in (0, 1, 2)]
    assert medians[0] >= medians[1] >= medians[2]


def test_units_and_zero_turbulence():
    tr = Truncation(1)
    np.testing.assert_allclose(ipe.assemble_dissipator(tr, P, 2.0, "t"),
                               ipe.assemble_dissipator(tr, P, 2.0, "z") * P.z_R, rtol=1e-15)
    assert not np.any(ipe.assemble_dissipator(tr, PhysicalParams(cn2=0.0), 2.0))


def test_dimensional_consistency_of_evolution():
    """Evolving over t with t-unit generators equals evolving over z = t z_R with per-metre ones."""
    tr = Truncation(2)
    t = 0.7
    Gt = ipe.assemble_coherent(tr, P, "t") + ipe.assemble_dissipator(tr, P, 0.0, "t")
    Gz = ipe.assemble_coherent(tr, P, "z") + ipe.assemble_dissipator(tr, P, 0.0, "z")
    rho = np.zeros((tr.N, tr.N), complex)
    rho[4, 4] = 1
    x = rho.reshape(-1, order="F")
    a = expm(Gt * t) @ x
    b = expm(Gz * P.z_of_t(t)) @ x
    assert np.abs(a - b).max() <= 1e-10


@pytest.mark.slow
def test_full_assembly_L4_time():
    t0 = time.perf_counter()
    D = ipe.assemble_dissipator(Truncation(4), P, 100.0)
    assert time.perf_counter() - t0 < 600
    assert D.shape == (2025, 2025)
