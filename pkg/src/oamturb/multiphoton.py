"""Collective operators for n co-propagating photons.

A single-photon operator ``A`` is lifted to ``sum_i I^(i-1) (x) A (x) I^(n-i)``
on the n-photon space, with photon 1 the most significant tensor factor.
Lifted operators are kept sparse; the dense form is only handed out for
dimensions below :data:`DENSE_LIMIT`.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np
import scipy.sparse as sp

from .channel import LindbladSet
from .modes import DomainError

DENSE_LIMIT = 256
# N**n above this is refused for operators; the superoperator cap applies to (N**n)**2
MAX_OPERATOR_DIM = 2_000_000
MAX_SUPEROP_DIM = 60_000


class ResourceLimitError(MemoryError):
    """The requested n-photon space exceeds the configured size cap."""


def _check_dim(N: int, n: int, cap: int, what: str) -> int:
    dim = N**n
    if dim > cap:
        raise ResourceLimitError(f"{what}: N^n = {N}^{n} = {dim} exceeds cap {cap}")
    return dim


@dataclass(frozen=True)
class CollectiveOperator:
    n_photons: int
    base: np.ndarray
    lifted: sp.csr_matrix

    @property
    def dim(self) -> int:
        return self.lifted.shape[0]

    def dense(self) -> np.ndarray:
        if self.dim > DENSE_LIMIT:
            raise ResourceLimitError(f"dense form refused above dimension {DENSE_LIMIT} (got {self.dim})")
        return self.lifted.toarray()


def lift(base, n: int, cap: int = MAX_OPERATOR_DIM) -> CollectiveOperator:
    base = np.asarray(base, dtype=complex)
    if base.ndim != 2 or base.shape[0] != base.shape[1]:
        raise DomainError(f"base operator must be square, got shape {base.shape}")
    if int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n}")
    n = int(n)
    N = base.shape[0]
    _check_dim(N, n, cap, "lift")
    A = sp.csr_matrix(base)
    out = sp.csr_matrix((N**n, N**n), dtype=complex)
    for i in range(n):
        left = sp.identity(N**i, dtype=complex, format="csr")
        right = sp.identity(N ** (n - i - 1), dtype=complex, format="csr")
        out = out + sp.kron(sp.kron(left, A, format="csr"), right, format="csr")
    out.sum_duplicates()
    out.eliminate_zeros()
    return CollectiveOperator(n, base.copy(), out.tocsr())


def collective_dissipator(lset: LindbladSet, n: int, cap: int = MAX_SUPEROP_DIM) -> sp.csr_matrix:
    """Column-stacked dissipator built from the lifted Lindblad operators.

    sum_k conj(L~_k) (x) L~_k - 1/2 I (x) L~_k^dag L~_k - 1/2 conj(L~_k^dag L~_k) (x) I
    """
    if len(lset) == 0:
        raise DomainError("empty Lindblad set")
    N = lset.N
    dim = _check_dim(N, n, MAX_OPERATOR_DIM, "collective_dissipator")
    if dim * dim > cap:
        raise ResourceLimitError(f"collective_dissipator: superoperator side (N^n)^2 = {dim * dim} exceeds cap {cap}")
    eye = sp.identity(dim, dtype=complex, format="csr")
    out = sp.csr_matrix((dim * dim, dim * dim), dtype=complex)
    for op in lset.operators:
        L = lift(op, n).lifted
        LdL = (L.conj().T @ L).tocsr()
        out = out + sp.kron(L.conj(), L, format="csr")
        out = out - 0.5 * sp.kron(eye, LdL, format="csr") - 0.5 * sp.kron(LdL.conj(), eye, format="csr")
    out.sum_duplicates()
    return out.tocsr()


def photon_permutation(N: int, n: int, perm) -> np.ndarray:
    """Index map of the unitary that sends photon ``i`` to slot ``perm[i]``.

    Returns ``p`` with ``(P x)[p[k]] = x[k]``; P is a permutation matrix.
    """
    perm = tuple(int(i) for i in perm)
    if sorted(perm) != list(range(n)):
        raise DomainError(f"{perm} is not a permutation of {n} photons")
    digits = np.indices((N,) * n).reshape(n, -1)
    moved = np.empty_like(digits)
    moved[list(perm)] = digits
    return np.ravel_multi_index(tuple(moved), (N,) * n)


def permute_operator(A, N: int, n: int, perm):
    """P A P^T for the photon permutation ``perm``."""
    p = photon_permutation(N, n, perm)
    inv = np.argsort(p)
    return A[inv][:, inv]


def permute_superoperator(X, N: int, n: int, perm):
    """(P (x) P) X (P (x) P)^T, i.e. conjugation of the map by rho -> P rho P^T."""
    p = photon_permutation(N, n, perm)
    dim = N**n
    pp = (p[:, None] + dim * p[None, :]).reshape(-1, order="F")
    inv = np.argsort(pp)
    return X[inv][:, inv]


def transpositions(n: int):
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def transposition(n: int, i: int, j: int) -> tuple:
    perm = list(range(n))
    perm[i], perm[j] = perm[j], perm[i]
    return tuple(perm)


def all_permutations(n: int):
    return list(permutations(range(n)))


def max_asymmetry(X, N: int, n: int, perms=None) -> float:
    """Largest |P X P^T - X| entry over ``perms`` (default: all transpositions)."""
    if perms is None:
        perms = [transposition(n, i, j) for i, j in transpositions(n)]
    X = sp.csr_matrix(X)
    is_super = X.shape[0] == (N**n) ** 2
    worst = 0.0
    for perm in perms:
        Y = permute_superoperator(X, N, n, perm) if is_super else permute_operator(X, N, n, perm)
        diff = abs(Y - X)
        if diff.nnz:
            worst = max(worst, float(diff.max()))
    return worst


def shift_weights(op, l_values, n: int) -> dict:
    """Squared weight of a lifted operator grouped by the per-photon l shifts.

    Keys are tuples of shifts (one per photon), so ``(1, 0, 0)`` collects the
    entries raising photon 1 by one unit and leaving the others alone.
    """
    l_values = np.asarray(l_values)
    N = len(l_values)
    A = sp.coo_matrix(op)
    rows = np.array(np.unravel_index(A.row, (N,) * n))
    cols = np.array(np.unravel_index(A.col, (N,) * n))
    shifts = l_values[rows] - l_values[cols]
    out: dict = {}
    w = np.abs(A.data) ** 2
    for k, key in enumerate(map(tuple, shifts.T.tolist())):
        out[key] = out.get(key, 0.0) + float(w[k])
    return out
