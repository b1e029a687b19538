"""Discrete Lindblad operators from a dissipator superoperator.

The dissipator is reshuffled into its Choi matrix, the identity direction
``col(I)`` is projected out on both sides, and the eigenpairs of what remains
give ``col(L_k) = sqrt(lambda_k) v_k``.  Column stacking throughout, with the
Choi entry ``((m,u),(n,v))`` taken from superoperator entry ``((m,n),(u,v))``.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .modes import DomainError

log = logging.getLogger(__name__)


class EigensolverError(ArithmeticError):
    pass


def vec(A: np.ndarray) -> np.ndarray:
    return np.asarray(A).reshape(-1, order="F")


def unvec(v: np.ndarray, N: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    if N is None:
        N = int(round(np.sqrt(v.size)))
    return v.reshape(N, N, order="F")


def _side(X: np.ndarray) -> int:
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {X.shape}")
    N = int(round(np.sqrt(X.shape[0])))
    if N * N != X.shape[0]:
        raise DomainError(f"side {X.shape[0]} is not a perfect square")
    return N


def choi_reshuffle(X: np.ndarray) -> np.ndarray:
    """Swap superoperator <-> Choi indexing; an involution."""
    N = _side(X)
    # row m + N n -> axes (n, m); column u + N v -> axes (v, u)
    X4 = np.asarray(X).reshape(N, N, N, N)
    return X4.transpose(3, 1, 2, 0).reshape(N * N, N * N)


def traceless_projector(N: int) -> np.ndarray:
    i = vec(np.eye(N))
    return np.eye(N * N) - np.outer(i, i) / N


def project_traceless(choi: np.ndarray, N: int | None = None) -> np.ndarray:
    """P choi P with P = I - col(I) col(I)^dagger / N, then Hermitian part."""
    n = _side(choi)
    if N is None:
        N = n
    elif N != n:
        raise DomainError(f"N={N} inconsistent with matrix side {choi.shape[0]}")
    i = vec(np.eye(N)) / np.sqrt(N)
    # P X P without forming P: X - i(i^H X) - (X i)i^H + i (i^H X i) i^H
    Xi = choi @ i
    iX = i.conj() @ choi
    iXi = i.conj() @ Xi
    out = choi - np.outer(i, iX) - np.outer(Xi, i.conj()) + iXi * np.outer(i, i.conj())
    return 0.5 * (out + out.conj().T)


@dataclass
class LindbladSet:
    """Lindblad operators ordered by decreasing eigenvalue magnitude."""

    eigenvalues: np.ndarray
    operators: np.ndarray  # (K, N, N)
    tol: float = 1e-10
    negative_count: int = 0
    most_negative: float = 0.0
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.eigenvalues)

    def __getitem__(self, k):
        return self.eigenvalues[k], self.operators[k]

    @property
    def N(self) -> int:
        return self.operators.shape[1] if len(self) else int(self.metadata.get("N", 0))

    def truncated(self, k: int) -> "LindbladSet":
        return LindbladSet(
            self.eigenvalues[:k].copy(), self.operators[:k].copy(), self.tol,
            self.negative_count, self.most_negative, dict(self.metadata),
        )

    def save(self, path, provenance: dict | None = None) -> Path:
        """Write ``<path>.json`` (manifest) and ``<path>.bin`` (operator stack)."""
        from .container import write_container

        path = Path(path)
        bin_path = path.with_suffix(".bin")
        header = {"kind": "lindblad_set", "K": len(self), "N": self.N}
        header.update(provenance or {})
        write_container(bin_path, self.operators.reshape(len(self), -1) if len(self) else
                        np.zeros((0, self.N * self.N), complex), header)
        manifest = {
            "eigenvalues": [float(x) for x in self.eigenvalues],
            "dims": {"K": len(self), "N": self.N},
            "tolerance": self.tol,
            "negative_count": self.negative_count,
            "most_negative": self.most_negative,
            "operators_file": bin_path.name,
            "provenance": provenance or {},
        }
        json_path = path.with_suffix(".json")
        json_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return json_path

    @classmethod
    def load(cls, json_path) -> "LindbladSet":
        from .container import read_container

        json_path = Path(json_path)
        manifest = json.loads(json_path.read_text(encoding="utf-8"))
        data, _ = read_container(json_path.with_name(manifest["operators_file"]))
        K, N = manifest["dims"]["K"], manifest["dims"]["N"]
        return cls(
            np.array(manifest["eigenvalues"], dtype=float),
            data.reshape(K, N, N),
            manifest["tolerance"],
            manifest["negative_count"],
            manifest["most_negative"],
            {"N": N, **manifest.get("provenance", {})},
        )


def _fix_phase(op: np.ndarray, rtol: float = 1e-8) -> np.ndarray:
    """Rotate the global phase so the largest entry is real and positive.

    Near-ties are broken by the transpose-symmetric key (min(i,j), max(i,j)),
    so an operator and its adjoint pick mirrored entries.
    """
    mag = np.abs(op)
    top = mag.max()
    if top == 0:
        return op
    cand = np.argwhere(mag >= top * (1 - rtol)).tolist()
    i, j = min(cand, key=lambda ij: (min(ij), max(ij), ij[0]))
    z = op[i, j]
    return op * (abs(z) / z)


def extract_lindblads(
    Dt: np.ndarray,
    tol: float = 1e-10,
    l_values: np.ndarray | None = None,
    degeneracy_rtol: float = 1e-8,
) -> LindbladSet:
    """Eigen-decompose a projected Choi matrix into Lindblad operators.

    Eigenvalues above ``tol * max|lambda|`` are kept.  Negative eigenvalues
    below ``-tol * max|lambda|`` mean the map is not completely positive; they
    are counted and logged, not turned into operators.

    With ``l_values`` (azimuthal index per basis state) each cluster of
    degenerate eigenvalues is rotated so that its operators carry a definite
    shift ``l_row - l_col``, ordered from raising to lowering.
    """
    N = _side(Dt)
    H = 0.5 * (Dt + Dt.conj().T)
    try:
        w, V = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        cond = np.linalg.cond(H)
        raise EigensolverError(f"eigh failed on {H.shape} matrix, cond={cond:.3e}") from exc
    order = np.argsort(-np.abs(w), kind="stable")
    w, V = w[order], V[:, order]
    scale = np.abs(w).max() if w.size else 0.0
    if scale == 0:
        return LindbladSet(np.zeros(0), np.zeros((0, N, N), complex), tol, metadata={"N": N})

    neg = w < -tol * scale
    n_neg = int(neg.sum())
    most_neg = float(w.min()) if n_neg else 0.0
    if n_neg:
        log.warning("projected Choi matrix has %d negative eigenvalues (min %.3e, max|lambda| %.3e)",
                    n_neg, most_neg, scale)
    keep = w > tol * scale
    w, V = w[keep], V[:, keep]

    if l_values is not None and len(w):
        l_values = np.asarray(l_values)
        # shift of entry (m, u) is l_m - l_u, flattened in column-stacked order
        dl = vec(l_values[:, None] - l_values[None, :]).astype(float)
        start = 0
        while start < len(w):
            stop = start + 1
            while stop < len(w) and abs(w[stop] - w[start]) <= degeneracy_rtol * scale:
                stop += 1
            if stop - start > 1:
                blk = V[:, start:stop]
                M = blk.conj().T @ (dl[:, None] * blk)
                mu, U = np.linalg.eigh(0.5 * (M + M.conj().T))
                idx = np.argsort(-mu, kind="stable")
                V[:, start:stop] = blk @ U[:, idx]
            start = stop

    ops = np.empty((len(w), N, N), dtype=complex)
    for k in range(len(w)):
        ops[k] = _fix_phase(unvec(np.sqrt(w[k]) * V[:, k], N))
    return LindbladSet(w.copy(), ops, tol, n_neg, most_neg, {"N": N})


def dissipator_from_operators(ops) -> np.ndarray:
    """sum_k conj(L_k) (x) L_k - 1/2 I (x) L_k^dag L_k - 1/2 conj(L_k^dag L_k) (x) I."""
    ops = list(ops)
    if not ops:
        raise DomainError("need at least one operator")
    N = ops[0].shape[0]
    eye = np.eye(N)
    out = np.zeros((N * N, N * N), dtype=complex)
    for L in ops:
        LdL = L.conj().T @ L
        out += np.kron(L.conj(), L) - 0.5 * np.kron(eye, LdL) - 0.5 * np.kron(LdL.conj(), eye)
    return out


def reconstruct_dissipator(lset: LindbladSet) -> np.ndarray:
    if len(lset) == 0:
        N = lset.N
        return np.zeros((N * N, N * N), dtype=complex)
    return dissipator_from_operators(lset.operators)


def shift_profile(op: np.ndarray, l_values: np.ndarray) -> dict[int, float]:
    """Squared Frobenius weight of ``op`` per azimuthal shift l_row - l_col."""
    l_values = np.asarray(l_values)
    dl = l_values[:, None] - l_values[None, :]
    w = np.abs(op) ** 2
    return {int(s): float(w[dl == s].sum()) for s in np.unique(dl)}
