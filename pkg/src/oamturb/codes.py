"""OAM error-detecting code, the Steane [[7,1,3]] layer and Monte Carlo of the concatenation.

Paulis on 7 qubits are pairs of bit vectors ``(x, z)``; Y on a qubit sets both
bits.  Qubit positions are 0-based internally and printed 1-based.

The X-part syndrome ``H x`` is what the Z-type checks see, the Z-part ``H z``
is what the X-type checks see; the 6-bit syndrome is their concatenation.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations, product

import numpy as np

from .modes import DomainError, Truncation, dimension

# 7-bit Hamming parity-check matrix; rows are even-weight and mutually orthogonal
H = np.array(
    [
        [1, 0, 0, 0, 1, 1, 1],
        [0, 1, 0, 1, 0, 1, 1],
        [0, 0, 1, 1, 1, 0, 1],
    ],
    dtype=np.uint8,
)
N_QUBITS = 7
MAX_ERASURES = 2
PAULI_LABELS = "IXYZ"
# single-qubit Pauli index -> (x, z)
PAULI_XZ = {0: (0, 0), 1: (1, 0), 2: (1, 1), 3: (0, 1)}


class ConditioningError(ArithmeticError):
    """No population survived in the code space."""


# ---------------------------------------------------------------------------
# OAM code space
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CodeSpace:
    n_oam: int
    trunc: Truncation

    def __post_init__(self):
        if int(self.n_oam) != self.n_oam or not 1 <= self.n_oam <= self.trunc.L_cut:
            raise DomainError(f"n_oam must be in 1..L_cut={self.trunc.L_cut}, got {self.n_oam}")

    @property
    def indices(self) -> tuple[int, int]:
        L = self.trunc.L_cut
        R = L + 1
        return (self.n_oam + L) * R, (-self.n_oam + L) * R

    @property
    def basis(self) -> np.ndarray:
        """2 x N matrix whose rows are |n,0> (logical 0) and |-n,0> (logical 1)."""
        B = np.zeros((2, dimension(self.trunc)))
        B[0, self.indices[0]] = 1.0
        B[1, self.indices[1]] = 1.0
        return B

    @property
    def projector(self) -> np.ndarray:
        B = self.basis
        return B.T @ B


def encode_detecting(alpha, beta, n: int, trunc: Truncation, atol: float = 1e-10) -> np.ndarray:
    norm = abs(alpha) ** 2 + abs(beta) ** 2
    if abs(norm - 1.0) > atol:
        raise DomainError(f"|alpha|^2 + |beta|^2 = {norm}, expected 1")
    code = CodeSpace(n, trunc)
    psi = np.array([alpha, beta], dtype=complex) @ code.basis
    return np.outer(psi, psi.conj())


def detect(rho, code: CodeSpace, floor: float = 1e-12) -> tuple[float, np.ndarray, float]:
    """(p_noerror, conditional 2x2 state, p_detect); leakage counts as detected."""
    rho = np.asarray(rho)
    B = code.basis
    blk = B @ rho @ B.T
    p_ok = float(np.trace(blk).real)
    if p_ok < floor:
        raise ConditioningError(f"code-space population {p_ok:.3e} below {floor:.1e}")
    p_ok = min(p_ok, 1.0)
    return p_ok, blk / np.trace(blk).real, 1.0 - p_ok


# ---------------------------------------------------------------------------
# Steane code
# ---------------------------------------------------------------------------


def syndrome_bits(bits) -> np.ndarray:
    """H b over GF(2); works on (..., 7) arrays."""
    return (np.asarray(bits, dtype=np.uint8) @ H.T) % 2


def steane_syndrome(x, z) -> tuple[int, ...]:
    """6-bit syndrome (H x, H z) of the Pauli with bit vectors x, z."""
    return tuple(int(b) for b in np.concatenate([syndrome_bits(x), syndrome_bits(z)]))


def pauli_from_string(s: str) -> tuple[np.ndarray, np.ndarray]:
    s = s.strip().upper()
    if len(s) != N_QUBITS or set(s) - set(PAULI_LABELS):
        raise DomainError(f"expected a 7-letter Pauli string over IXYZ, got {s!r}")
    x = np.array([c in "XY" for c in s], dtype=np.uint8)
    z = np.array([c in "ZY" for c in s], dtype=np.uint8)
    return x, z


def pauli_to_string(x, z) -> str:
    out = []
    for a, b in zip(x, z):
        out.append("I" if not (a or b) else "X" if a and not b else "Z" if b and not a else "Y")
    return "".join(out)


def logical_residual(x, z) -> tuple[bool, bool]:
    """(flip, phase) logical action of a Pauli with zero syndrome.

    With logical X = X^7 and logical Z = Z^7, an odd-weight x-part flips the
    logical qubit and an odd-weight z-part applies a logical phase.
    """
    x = np.asarray(x, dtype=np.uint8)
    z = np.asarray(z, dtype=np.uint8)
    return bool(x.sum(axis=-1) % 2), bool(z.sum(axis=-1) % 2)


def _patterns(positions, labels=(0, 1, 2, 3)):
    for paulis in product(labels, repeat=len(positions)):
        x = np.zeros(N_QUBITS, dtype=np.uint8)
        z = np.zeros(N_QUBITS, dtype=np.uint8)
        for q, p in zip(positions, paulis):
            x[q], z[q] = PAULI_XZ[p]
        yield x, z


def _syndrome_key(x, z) -> int:
    s = steane_syndrome(x, z)
    return int("".join(map(str, s)), 2)


def _build_lookup():
    """Minimum-weight Pauli for each of the 64 syndromes; ties to the lowest qubit indices."""
    table: dict = {}
    for w in range(N_QUBITS + 1):
        for pos in combinations(range(N_QUBITS), w):
            for x, z in _patterns(pos, (1, 2, 3)):
                key = _syndrome_key(x, z)
                if key not in table:
                    table[key] = (x, z)
        if len(table) == 64:
            break
    return table


LOOKUP = _build_lookup()


def lookup_decode(syndrome) -> tuple[np.ndarray, np.ndarray]:
    key = int("".join(str(int(b)) for b in syndrome), 2)
    x, z = LOOKUP[key]
    return x.copy(), z.copy()


@dataclass(frozen=True)
class DecodeResult:
    ok: bool
    x: np.ndarray | None = None
    z: np.ndarray | None = None
    reason: str = ""


def erasure_decode(syndrome, erasures) -> DecodeResult:
    """The Pauli supported on ``erasures`` (0-based) that reproduces ``syndrome``.

    For at most two erasures the 16 candidates have distinct syndromes, so the
    answer is unique when it exists.  Larger patterns return the lowest-index
    consistent candidate only when it is unique.
    """
    pos = sorted({int(q) for q in erasures})
    if any(q < 0 or q >= N_QUBITS for q in pos):
        raise DomainError(f"erasure positions must lie in 0..6, got {pos}")
    target = tuple(int(b) for b in syndrome)
    if len(target) != 6:
        raise DomainError(f"syndrome must have 6 bits, got {len(target)}")
    hits = [(x, z) for x, z in _patterns(pos) if steane_syndrome(x, z) == target]
    if not hits:
        return DecodeResult(False, reason="no consistent correction")
    if len(hits) > 1:
        # candidates differing by a stabilizer are equivalent; otherwise ambiguous
        x0, z0 = hits[0]
        for x, z in hits[1:]:
            if any(logical_residual(x ^ x0, z ^ z0)):
                return DecodeResult(False, reason="ambiguous correction")
    return DecodeResult(True, hits[0][0], hits[0][1])


# precomputed erasure decoding: (erasure mask, syndrome key) -> (ok, x, z)
def _build_erasure_table():
    table = {}
    for w in range(MAX_ERASURES + 1):
        for pos in combinations(range(N_QUBITS), w):
            mask = sum(1 << q for q in pos)
            for key in range(64):
                bits = [(key >> (5 - i)) & 1 for i in range(6)]
                table[(mask, key)] = erasure_decode(bits, pos)
    return table


# ---------------------------------------------------------------------------
# single-photon channel reduction
# ---------------------------------------------------------------------------

_PAULIS = [
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.diag([1.0, -1.0]).astype(complex),
]


def apply_map(M: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Apply a 4x4 column-stacked superoperator to a 2x2 matrix."""
    return (M @ X.reshape(-1, order="F")).reshape(2, 2, order="F")


def pauli_transfer(M: np.ndarray) -> np.ndarray:
    """R[a, b] = tr(P_a M(P_b)) / 2."""
    R = np.empty((4, 4))
    for b, Pb in enumerate(_PAULIS):
        out = apply_map(M, Pb)
        for a, Pa in enumerate(_PAULIS):
            R[a, b] = 0.5 * np.trace(Pa @ out).real
    return R


def entanglement_fidelity(M: np.ndarray) -> float:
    return float(np.trace(pauli_transfer(M)) / 4)


def pauli_twirl(M: np.ndarray, neg_tol: float = 1e-9) -> np.ndarray:
    """Probabilities (p_I, p_X, p_Y, p_Z) of the Pauli-twirled channel."""
    R = pauli_transfer(M)
    rx, ry, rz = R[1, 1], R[2, 2], R[3, 3]
    ri = R[0, 0]
    p = 0.25 * np.array([ri + rx + ry + rz, ri + rx - ry - rz, ri - rx + ry - rz, ri - rx - ry + rz])
    if p.min() < -neg_tol:
        raise DomainError(f"twirled channel has negative probability {p.min():.3e}")
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def pauli_channel_map(p) -> np.ndarray:
    M = np.zeros((4, 4), dtype=complex)
    for pk, P in zip(p, _PAULIS):
        M += pk * np.kron(P.conj(), P)
    return M


# ---------------------------------------------------------------------------
# Monte Carlo of the concatenated scheme
# ---------------------------------------------------------------------------

CHUNK = 1 << 16


def _chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    # counter-based stream per chunk: reproducible regardless of scheduling
    key = np.array([int(seed) & (2**64 - 1), int(chunk)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass
class SchemeResult:
    trials: int
    seed: int
    p_detect: float
    pauli_probs: list
    logical_errors: int
    heralded_failures: int
    erasure_histogram: list
    provenance: dict = field(default_factory=dict)

    @property
    def logical_error_rate(self) -> float:
        return self.logical_errors / self.trials

    @property
    def heralded_failure_rate(self) -> float:
        return self.heralded_failures / self.trials

    def to_json(self) -> str:
        out = {
            "params": self.provenance,
            "t": self.provenance.get("t"),
            "trials": self.trials,
            "seed": self.seed,
            "p_detect": self.p_detect,
            "pauli_probs": list(self.pauli_probs),
            "logical_error_rate": self.logical_error_rate,
            "heralded_failure_rate": self.heralded_failure_rate,
            "erasure_histogram": list(self.erasure_histogram),
        }
        return json.dumps(out, indent=2, sort_keys=True) + "\n"


_DEPOLARIZED = np.full(4, 0.25)


def _decode_tables():
    """Vectorised decode tables indexed by (erasure mask, syndrome key).

    ok[mask, key] is False when decoding fails; cx/cz hold the correction as
    7-bit integers.  Masks with more than two erasures are left failing.
    """
    ok = np.zeros((128, 64), dtype=bool)
    cx = np.zeros((128, 64), dtype=np.int64)
    cz = np.zeros((128, 64), dtype=np.int64)
    weights = 1 << np.arange(N_QUBITS)
    for (mask, key), res in _build_erasure_table().items():
        if mask == 0:
            x, z = LOOKUP[key]
            ok[0, key] = True
            cx[0, key], cz[0, key] = int(x @ weights), int(z @ weights)
        elif res.ok:
            ok[mask, key] = True
            cx[mask, key], cz[mask, key] = int(res.x @ weights), int(res.z @ weights)
    return ok, cx, cz


_TABLES = None


def _tables():
    global _TABLES
    if _TABLES is None:
        _TABLES = _decode_tables()
    return _TABLES


def _popcount7(v: np.ndarray) -> np.ndarray:
    return sum((v >> q) & 1 for q in range(N_QUBITS))


_SYND_X = None


def _syndrome_of_int():
    """6-bit syndrome key for every 7-bit (x, z) pair, as two 128-entry halves."""
    global _SYND_X
    if _SYND_X is None:
        bits = ((np.arange(128)[:, None] >> np.arange(N_QUBITS)[None, :]) & 1).astype(np.uint8)
        s = syndrome_bits(bits)
        _SYND_X = (s[:, 0] << 2) | (s[:, 1] << 1) | s[:, 2]
    return _SYND_X


def simulate_pauli_frame(p_detect: float, pauli_probs, trials: int, seed: int,
                         forced_erasures=None) -> tuple[int, int, np.ndarray]:
    """(logical errors, heralded failures, erasure histogram) over ``trials`` trials.

    Erased photons get a uniformly random Pauli (the completely depolarising
    replacement); survivors draw from ``pauli_probs``.  Trials with more than
    two erasures are heralded failures and not decoded.
    """
    if trials < 1:
        raise DomainError(f"trials must be >= 1, got {trials}")
    if not 0.0 <= p_detect <= 1.0:
        raise DomainError(f"p_detect must lie in [0, 1], got {p_detect}")
    probs = np.asarray(pauli_probs, dtype=float)
    if probs.shape != (4,) or probs.min() < 0 or abs(probs.sum() - 1) > 1e-12:
        raise DomainError(f"pauli_probs must be a probability 4-vector, got {probs}")
    ok_t, cx_t, cz_t = _tables()
    synd = _syndrome_of_int()
    weights = 1 << np.arange(N_QUBITS)
    cum_s = np.cumsum(probs)
    cum_e = np.cumsum(_DEPOLARIZED)
    xbit = np.array([0, 1, 1, 0])
    zbit = np.array([0, 0, 1, 1])
    forced = None
    if forced_erasures is not None:
        forced = np.zeros(N_QUBITS, dtype=bool)
        forced[list(forced_erasures)] = True
    errors = 0
    heralded = 0
    hist = np.zeros(N_QUBITS + 1, dtype=np.int64)
    for c in range(math.ceil(trials / CHUNK)):
        m = min(CHUNK, trials - c * CHUNK)
        rng = _chunk_rng(seed, c)
        u_erase = rng.random((m, N_QUBITS))
        u_pauli = rng.random((m, N_QUBITS))
        erased = u_erase < p_detect
        if forced is not None:
            erased = erased | forced[None, :]
        pa = np.where(erased, np.searchsorted(cum_e, u_pauli, side="right"),
                      np.searchsorted(cum_s, u_pauli, side="right"))
        pa = np.minimum(pa, 3)
        ex = xbit[pa] @ weights
        ez = zbit[pa] @ weights
        mask = erased @ weights
        count = erased.sum(axis=1)
        hist += np.bincount(count, minlength=N_QUBITS + 1)
        her = count > MAX_ERASURES
        heralded += int(her.sum())
        key = (synd[ex] << 3) | synd[ez]
        live = ~her
        ok = ok_t[mask[live], key[live]]
        rx = ex[live] ^ cx_t[mask[live], key[live]]
        rz = ez[live] ^ cz_t[mask[live], key[live]]
        bad = (_popcount7(rx) % 2 == 1) | (_popcount7(rz) % 2 == 1)
        errors += int((~ok | bad).sum())
    return errors, heralded, hist


def scheme_simulate(p_detect: float, conditional_map: np.ndarray, trials: int, seed: int,
                    provenance: dict | None = None) -> SchemeResult:
    """Monte Carlo of the Steane layer over photons with detection probability
    ``p_detect`` and the (untwirled) conditional code-space map ``conditional_map``."""
    probs = pauli_twirl(conditional_map)
    errors, heralded, hist = simulate_pauli_frame(p_detect, probs, trials, seed)
    return SchemeResult(trials, int(seed), float(p_detect), [float(p) for p in probs], errors,
                        heralded, [int(h) for h in hist], dict(provenance or {}))


# ---------------------------------------------------------------------------
# exact 2^7 density-matrix reference
# ---------------------------------------------------------------------------


def _apply_map_1q(rho: np.ndarray, q: int, M: np.ndarray) -> np.ndarray:
    """Apply a 4x4 column-stacked single-qubit map on qubit q."""
    r = np.moveaxis(rho, (q, N_QUBITS + q), (0, 1))
    shp = r.shape
    flat = r.reshape(2, 2, -1)
    # column stacking: index a + 2 b
    vec = np.stack([flat[0, 0], flat[1, 0], flat[0, 1], flat[1, 1]])
    out = M @ vec
    new = np.empty_like(flat)
    new[0, 0], new[1, 0], new[0, 1], new[1, 1] = out
    return np.moveaxis(new.reshape(shp), (0, 1), (q, N_QUBITS + q))


def _logical_states():
    """|0_L>, |1_L> of the Steane code as 128-vectors (qubit 0 most significant)."""
    words = []
    for m in product((0, 1), repeat=3):
        words.append(np.array(m, dtype=np.uint8) @ H % 2)
    zero = np.zeros(128)
    one = np.zeros(128)
    for w in words:
        zero[int("".join(map(str, w)), 2)] += 1
        w1 = w ^ 1
        one[int("".join(map(str, w1)), 2)] += 1
    return zero / np.linalg.norm(zero), one / np.linalg.norm(one)


def exact_logical_error(p_detect: float, conditional_map: np.ndarray) -> tuple[float, float]:
    """(logical error probability, heralded failure probability) by direct density-matrix evolution.

    The logical channel is built on the four operators |i_L><j_L|, the
    decoder applied branch by branch over erasure patterns and syndromes, and
    the error probability read as 1 - entanglement fidelity of the decoded
    logical channel (decode failures count fully as errors).
    """
    zero, one = _logical_states()
    basis = [zero, one]
    dep = pauli_channel_map(_DEPOLARIZED)
    ok_t, cx_t, cz_t = _tables()
    # syndrome projectors on the 128-dim space, via the stabilizer generators
    bits = ((np.arange(128)[:, None] >> np.arange(N_QUBITS - 1, -1, -1)[None, :]) & 1).astype(np.uint8)
    z_synd = syndrome_bits(bits)  # Z-type checks read H x on computational states
    had = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
    H7 = had
    for _ in range(N_QUBITS - 1):
        H7 = np.kron(H7, had)
    sx_key = (z_synd[:, 0] << 2) | (z_synd[:, 1] << 1) | z_synd[:, 2]
    # projectors: P_{sx} diagonal in computational basis, P_{sz} diagonal in Hadamard basis
    Px = [np.diag((sx_key == s).astype(float)) for s in range(8)]
    Pz = [H7 @ np.diag((sx_key == s).astype(float)) @ H7 for s in range(8)]

    def pauli_op(xmask, zmask):
        op = np.array([[1.0 + 0j]])
        for q in range(N_QUBITS):
            a, b = (xmask >> q) & 1, (zmask >> q) & 1
            P = _PAULIS[{(0, 0): 0, (1, 0): 1, (1, 1): 2, (0, 1): 3}[(a, b)]]
            op = np.kron(op, P)
        return op

    logical_error = 0.0
    heralded = 0.0
    for mask in range(128):
        k = bin(mask).count("1")
        prob = p_detect**k * (1 - p_detect) ** (N_QUBITS - k)
        if prob == 0:
            continue
        if k > MAX_ERASURES:
            heralded += prob
            continue
        # logical channel chi_00 for this erasure pattern
        out = np.zeros((2, 2, 2, 2), dtype=complex)  # [i, j] -> decoded 2x2
        for i in range(2):
            for j in range(2):
                rho = np.outer(basis[i], basis[j]).reshape((2,) * (2 * N_QUBITS)).astype(complex)
                for q in range(N_QUBITS):
                    M = dep if (mask >> q) & 1 else conditional_map
                    rho = _apply_map_1q(rho, q, M)
                rho = rho.reshape(128, 128)
                for sx in range(8):
                    for sz in range(8):
                        P = Px[sx] @ Pz[sz]
                        br = P @ rho @ P.conj().T
                        key = (sx << 3) | sz
                        if not ok_t[mask, key]:
                            continue  # missing weight counts as error
                        Cop = pauli_op(cx_t[mask, key], cz_t[mask, key])
                        br = Cop @ br @ Cop.conj().T
                        for a in range(2):
                            for b in range(2):
                                out[i, j, a, b] += basis[a] @ br @ basis[b]
        # entanglement fidelity of the decoded logical map
        Mlog = np.zeros((4, 4), dtype=complex)
        for i in range(2):
            for j in range(2):
                Mlog[:, i + 2 * j] = out[i, j].reshape(-1, order="F")
        fe = entanglement_fidelity(Mlog)
        logical_error += prob * (1.0 - fe)
    return float(logical_error), float(heralded)


# ---------------------------------------------------------------------------
# single-photon process from the propagation model
# ---------------------------------------------------------------------------

NOISE_MODELS = ("full", "dominant", "collective")


def noise_generator(params, trunc: Truncation, noise: str = "full", t_ref: float = 0.0):
    """Generator for the single-photon process.

    ``"full"`` uses the assembled dissipator; ``"dominant"`` keeps only the
    leading pair of Lindblad operators (one raising, one lowering l by one).
    ``"collective"`` asks for the permutation-symmetric 7-photon dissipator;
    even at L_cut=1 that superoperator is far beyond the size cap, so the
    resource guard in :mod:`oamturb.multiphoton` refuses it.
    """
    from . import channel, ipe
    from .evolve import Generator

    if noise not in NOISE_MODELS:
        raise DomainError(f"noise must be one of {NOISE_MODELS}, got {noise!r}")
    if noise == "full":
        return Generator.build(params, trunc, t_ref)
    D = ipe.assemble_dissipator(trunc, params, t_ref)
    Dt = channel.project_traceless(channel.choi_reshuffle(D))
    lset = channel.extract_lindblads(Dt, l_values=trunc.l_values())
    if noise == "collective":
        from .multiphoton import collective_dissipator

        collective_dissipator(lset, N_QUBITS)
        raise AssertionError("unreachable: collective dissipator passed the size cap")
    D2 = channel.dissipator_from_operators(lset.operators[:2])
    return Generator.build(params, trunc, t_ref, D=D2)


def single_photon_process(n_oam: int, t: float, gen) -> tuple[float, np.ndarray, dict]:
    """(p_detect, conditional 4x4 code-space map, provenance) at distance t."""
    from .evolve import evolve_code_space

    if not t > 0:
        return 0.0, pauli_channel_map([1.0, 0.0, 0.0, 0.0]), {**gen.provenance(), "n": n_oam, "t": 0.0}
    ev = evolve_code_space(n_oam, gen, [0.0, float(t)])
    p_d, M = ev.conditional_channel(1)
    return p_d, M, {**ev.provenance, "t": float(t)}


def run_scheme(params, trunc: Truncation, n_oam: int, t: float, trials: int, seed: int,
               noise: str = "full", t_ref: float = 0.0, gen=None) -> SchemeResult:
    gen = gen or noise_generator(params, trunc, noise, t_ref)
    p_d, M, prov = single_photon_process(n_oam, t, gen)
    if p_d >= 1.0:
        M = pauli_channel_map(_DEPOLARIZED)
    prov["noise"] = noise
    return scheme_simulate(p_d, M, trials, seed, prov)
