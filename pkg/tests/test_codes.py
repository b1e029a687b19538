import json
import math
from itertools import combinations, product

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oamturb import codes
from oamturb.codes import (
    H, CodeSpace, ConditioningError, detect, encode_detecting, erasure_decode, exact_logical_error,
    logical_residual, lookup_decode, pauli_channel_map, pauli_from_string, pauli_to_string,
    pauli_twirl, entanglement_fidelity, scheme_simulate, simulate_pauli_frame, steane_syndrome,
)
from oamturb.modes import DomainError, ModeIndex, PhysicalParams, Truncation, to_index
from oamturb.multiphoton import ResourceLimitError

T2 = Truncation(2)
IDENTITY = pauli_channel_map([1.0, 0.0, 0.0, 0.0])


def xz(s):
    return pauli_from_string(s)


# ---------------------------------------------------------------- OAM detection code


def test_encode_basis_state():
    rho = encode_detecting(1.0, 0.0, 1, T2)
    i = to_index(ModeIndex(1, 0), T2)
    expect = np.zeros_like(rho)
    expect[i, i] = 1
    np.testing.assert_array_equal(rho, expect)


def test_encode_equal_superposition():
    rho = encode_detecting(1 / math.sqrt(2), 1 / math.sqrt(2), 2, T2)
    i, j = to_index(ModeIndex(2, 0), T2), to_index(ModeIndex(-2, 0), T2)
    assert rho[i, j] == pytest.approx(0.5)
    assert np.linalg.matrix_rank(rho) == 1


@settings(max_examples=25)
@given(st.floats(0, math.pi), st.floats(0, 2 * math.pi))
def test_encode_is_pure(theta, phi):
    rho = encode_detecting(math.cos(theta / 2), np.exp(1j * phi) * math.sin(theta / 2), 1, T2)
    assert np.trace(rho).real == pytest.approx(1.0)
    assert np.trace(rho @ rho).real == pytest.approx(1.0)


def test_encode_rejects_unnormalised_and_out_of_range():
    with pytest.raises(DomainError):
        encode_detecting(1.0, 1.0, 1, T2)
    with pytest.raises(DomainError):
        encode_detecting(1.0, 0.0, 3, T2)


def test_code_space_projector():
    P = CodeSpace(2, T2).projector
    np.testing.assert_array_equal(P @ P, P)
    assert np.trace(P) == 2


def test_detect_examples():
    code = CodeSpace(1, T2)
    rho = encode_detecting(0.6, 0.8, 1, T2)
    p_ok, cond, p_d = detect(rho, code)
    assert p_d == pytest.approx(0.0, abs=1e-15) and p_ok == pytest.approx(1.0)
    np.testing.assert_allclose(cond, [[0.36, 0.48], [0.48, 0.64]])

    out = np.zeros_like(rho)
    k = to_index(ModeIndex(2, 0), T2)
    out[k, k] = 1
    with pytest.raises(ConditioningError):
        detect(out, code)

    half = 0.5 * rho + 0.5 * out
    p_ok, cond, p_d = detect(half, code)
    assert p_d == pytest.approx(0.5)
    np.testing.assert_allclose(cond, [[0.36, 0.48], [0.48, 0.64]])


# ---------------------------------------------------------------- Steane layer


def test_parity_check_columns_distinct_nonzero():
    cols = {tuple(c) for c in H.T}
    assert len(cols) == 7 and (0, 0, 0) not in cols
    assert np.all((H @ H.T) % 2 == 0)


def test_syndrome_examples():
    assert steane_syndrome(*xz("XIIIIII")) == (1, 0, 0, 0, 0, 0)
    assert steane_syndrome(*xz("XXIIIII"))[:3] == tuple(H[:, 5])
    assert steane_syndrome(*xz("IIIIIII")) == (0,) * 6
    assert steane_syndrome(*xz("ZIIIIII")) == (0, 0, 0, 1, 0, 0)
    assert steane_syndrome(*xz("YIIIIII")) == (1, 0, 0, 1, 0, 0)


paulis7 = st.text(alphabet="IXYZ", min_size=7, max_size=7)


@given(paulis7, paulis7)
def test_syndrome_linearity(a, b):
    xa, za = xz(a)
    xb, zb = xz(b)
    sa, sb = steane_syndrome(xa, za), steane_syndrome(xb, zb)
    assert steane_syndrome(xa ^ xb, za ^ zb) == tuple(p ^ q for p, q in zip(sa, sb))


@given(paulis7)
def test_pauli_string_round_trip(s):
    assert pauli_to_string(*xz(s)) == s


def test_pauli_string_rejects_garbage():
    with pytest.raises(DomainError):
        pauli_from_string("XXQ")


def test_lookup_table_minimum_weight():
    assert len(codes.LOOKUP) == 64
    for key, (x, z) in codes.LOOKUP.items():
        assert int("".join(map(str, steane_syndrome(x, z))), 2) == key
    # every single-qubit Pauli is its own minimum-weight correction
    for q, p in product(range(7), "XYZ"):
        s = "".join(p if i == q else "I" for i in range(7))
        x, z = lookup_decode(steane_syndrome(*xz(s)))
        assert pauli_to_string(x, z) == s
    weights = sorted(int(np.sum(x | z)) for x, z in codes.LOOKUP.values())
    assert weights.count(0) == 1 and weights.count(1) == 21 and max(weights) == 2


def test_worked_erasure_example():
    x, z = xz("XXIIIII")
    res = erasure_decode(steane_syndrome(x, z), {0, 1})
    assert res.ok and pauli_to_string(res.x, res.z) == "XXIIIII"
    assert logical_residual(x ^ res.x, z ^ res.z) == (False, False)


def test_erasure_pair_syndromes_distinct():
    synd = {steane_syndrome(x, z) for x, z in codes._patterns([0, 1])}
    assert len(synd) == 16


def test_empty_erasure_zero_syndrome():
    res = erasure_decode((0,) * 6, ())
    assert res.ok and not res.x.any() and not res.z.any()


def test_erasure_decoding_exhaustive():
    patterns = [p for w in (1, 2) for p in combinations(range(7), w)]
    assert len(patterns) == 28
    checked = 0
    for pos in patterns:
        for x, z in codes._patterns(pos):
            res = erasure_decode(steane_syndrome(x, z), pos)
            assert res.ok
            r = (x ^ res.x, z ^ res.z)
            assert steane_syndrome(*r) == (0,) * 6
            assert logical_residual(*r) == (False, False)
            checked += 1
    assert checked == 7 * 4 + 21 * 16


def test_three_erasures_can_fail_without_raising():
    # qubits 1, 2 and 6 carry a weight-3 logical operator, so identity and X_L look alike
    res = erasure_decode((0,) * 6, (0, 1, 5))
    assert res.ok is False and res.reason
    assert erasure_decode(steane_syndrome(*xz("XXXIIII")), (0, 1, 2)).ok


def test_erasure_position_domain():
    with pytest.raises(DomainError):
        erasure_decode((0,) * 6, (7,))
    with pytest.raises(DomainError):
        erasure_decode((0,) * 5, (1,))


# ---------------------------------------------------------------- channel reduction


def random_channel(rng):
    K = [rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)) for _ in range(3)]
    S = sum(k.conj().T @ k for k in K)
    w, V = np.linalg.eigh(S)
    Sm = V @ np.diag(w ** -0.5) @ V.conj().T
    K = [k @ Sm for k in K]
    return sum(np.kron(k.conj(), k) for k in K)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_twirl_preserves_entanglement_fidelity(seed):
    M = random_channel(np.random.default_rng(seed))
    p = pauli_twirl(M)
    assert p.sum() == pytest.approx(1.0)
    assert entanglement_fidelity(pauli_channel_map(p)) == pytest.approx(entanglement_fidelity(M), abs=1e-10)
    assert p[0] == pytest.approx(entanglement_fidelity(M), abs=1e-10)


def test_twirl_of_pauli_channel_is_itself():
    p = np.array([0.7, 0.1, 0.05, 0.15])
    np.testing.assert_allclose(pauli_twirl(pauli_channel_map(p)), p, atol=1e-15)


# ---------------------------------------------------------------- Monte Carlo


def test_noiseless_scheme_has_no_errors():
    res = scheme_simulate(0.0, IDENTITY, 10_000, seed=3)
    assert res.logical_errors == 0 and res.heralded_failures == 0
    assert res.erasure_histogram[0] == 10_000


@pytest.mark.parametrize("forced", [(0,), (2, 6), (4, 5)])
def test_forced_erasures_always_corrected(forced):
    err, her, hist = simulate_pauli_frame(0.0, [1, 0, 0, 0], 20_000, seed=9, forced_erasures=forced)
    assert err == 0 and her == 0
    assert hist[len(forced)] == 20_000


def test_three_forced_erasures_are_heralded():
    err, her, _ = simulate_pauli_frame(0.0, [1, 0, 0, 0], 1000, seed=1, forced_erasures=(0, 1, 2))
    assert her == 1000 and err == 0


def test_simulation_is_deterministic():
    a = simulate_pauli_frame(0.05, [0.97, 0.01, 0.01, 0.01], 150_000, seed=42)
    b = simulate_pauli_frame(0.05, [0.97, 0.01, 0.01, 0.01], 150_000, seed=42)
    c = simulate_pauli_frame(0.05, [0.97, 0.01, 0.01, 0.01], 150_000, seed=43)
    assert a[:2] == b[:2] and np.array_equal(a[2], b[2])
    assert a[:2] != c[:2]


def test_simulation_input_validation():
    with pytest.raises(DomainError):
        simulate_pauli_frame(0.1, [0.5, 0.5, 0.1, 0], 10, 0)
    with pytest.raises(DomainError):
        simulate_pauli_frame(1.5, [1, 0, 0, 0], 10, 0)
    with pytest.raises(DomainError):
        simulate_pauli_frame(0.1, [1, 0, 0, 0], 0, 0)


def test_erasure_histogram_is_binomial():
    p = 0.2
    _, _, hist = simulate_pauli_frame(p, [1, 0, 0, 0], 200_000, seed=5)
    expect = np.array([math.comb(7, k) * p**k * (1 - p) ** (7 - k) for k in range(8)]) * 200_000
    sigma = np.sqrt(expect + 1)
    assert np.all(np.abs(hist - expect) <= 5 * sigma)


def test_monte_carlo_matches_exact_reference():
    p_d, q = 0.05, [0.97, 0.01, 0.01, 0.01]
    M = pauli_channel_map(q)
    exact_err, exact_her = exact_logical_error(p_d, M)
    n = 10_000
    err, her, _ = simulate_pauli_frame(p_d, q, n, seed=11)
    for got, ref in ((err / n, exact_err), (her / n, exact_her)):
        assert abs(got - ref) <= 3 * math.sqrt(ref * (1 - ref) / n)


def test_exact_reference_noiseless():
    err, her = exact_logical_error(0.0, IDENTITY)
    assert err == pytest.approx(0.0, abs=1e-12) and her == 0.0


def test_result_json_keys():
    res = scheme_simulate(0.01, IDENTITY, 100, seed=1, provenance={"t": 0.1, "cn2": 1e-14})
    doc = json.loads(res.to_json())
    for key in ("params", "t", "trials", "seed", "logical_error_rate", "heralded_failure_rate",
                "erasure_histogram"):
        assert key in doc
    assert doc["t"] == 0.1 and sum(doc["erasure_histogram"]) == 100


def test_run_scheme_zero_distance():
    res = codes.run_scheme(PhysicalParams(), Truncation(1), 1, 0.0, 1000, seed=1)
    assert res.logical_error_rate == 0.0 and res.p_detect == 0.0


def test_collective_noise_refused():
    with pytest.raises(ResourceLimitError):
        codes.noise_generator(PhysicalParams(), Truncation(1), "collective")
    with pytest.raises(DomainError):
        codes.noise_generator(PhysicalParams(), Truncation(1), "correlated")
