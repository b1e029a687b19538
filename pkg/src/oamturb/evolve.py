"""Propagation of column-stacked density matrices and the code-space observables.

``propagate`` solves ``d col(rho)/dt = (C + D) col(rho)`` on a grid with one
dense matrix exponential per distinct step length.

The observables (trace, detectable-error probability, minimum fidelity) are
evaluated for the two-mode code state ``alpha|n,0> + beta|-n,0>``.  They are
linear in the four evolved code-space operators ``|c_i><c_j|``, so a sweep
evolves those four once and serves every ``(alpha, beta)`` from them.

Two choices are exposed:

``frame``
    ``"free"`` (default) reads the state in the frame that co-moves with
    free-space diffraction, ``rho_I = exp(-S t) rho exp(S t)``.  Without
    turbulence the code space is then invariant, and the detector is matched
    to the diffracted code modes.  ``"lab"`` reads ``rho`` as is.
``condition``
    ``"trace"`` (default) renormalises by the full trace before taking the
    fidelity; ``"code"`` renormalises by the code-space population instead.

The dissipator is evaluated once, at ``t_ref`` (default 0, the transmitter
plane), and held fixed along the sweep.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.optimize import minimize

from . import ipe
from .modes import DomainError, ModeIndex, PhysicalParams, Truncation, dimension, to_index

log = logging.getLogger(__name__)

FRAMES = ("free", "lab")
CONDITIONS = ("trace", "code")
HERMITIAN_TOL = 1e-10
POSITIVITY_TOL = 1e-6


@dataclass
class Trajectory:
    t: np.ndarray
    states: np.ndarray | None = None  # (len(t), N, N)
    observables: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)


def check_grid(t_grid) -> np.ndarray:
    t = np.asarray(t_grid, dtype=float).ravel()
    if t.size == 0:
        raise DomainError("empty t grid")
    if t[0] != 0.0:
        raise DomainError(f"t grid must start at 0, got {t[0]}")
    if not np.all(np.isfinite(t)):
        raise DomainError("t grid has non-finite values")
    if np.any(np.diff(t) <= 0):
        raise DomainError("t grid must be strictly increasing")
    return t


def uniform_grid(t_max: float, steps: int) -> np.ndarray:
    if not (math.isfinite(t_max) and t_max > 0):
        raise DomainError(f"t_max must be positive and finite, got {t_max}")
    if steps < 2:
        raise DomainError(f"need at least 2 grid points, got {steps}")
    return np.linspace(0.0, t_max, int(steps))


class StepCache:
    """expm(G * dt), keyed by dt rounded to 12 significant digits."""

    def __init__(self, G: np.ndarray):
        self.G = G
        self._cache: dict = {}

    def __call__(self, dt: float) -> np.ndarray:
        key = float(f"{dt:.12e}")
        E = self._cache.get(key)
        if E is None:
            E = expm(self.G * dt)
            self._cache[key] = E
        return E


def _evolve_columns(steps: StepCache, X0: np.ndarray, t: np.ndarray) -> np.ndarray:
    out = np.empty((len(t),) + X0.shape, dtype=complex)
    out[0] = X0
    for j in range(1, len(t)):
        out[j] = steps(t[j] - t[j - 1]) @ out[j - 1]
    return out


def propagate(rho0, C, D, t_grid, check: bool = True) -> Trajectory:
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.ndim != 2 or rho0.shape[0] != rho0.shape[1]:
        raise DomainError(f"rho0 must be square, got shape {rho0.shape}")
    N = rho0.shape[0]
    C = np.asarray(C)
    D = np.asarray(D)
    if C.shape != (N * N, N * N) or D.shape != (N * N, N * N):
        raise DomainError(f"generator shapes {C.shape}, {D.shape} do not match N={N}")
    t = check_grid(t_grid)
    cols = _evolve_columns(StepCache(C + D), rho0.reshape(-1, order="F"), t)
    states = cols.reshape(len(t), N, N, order="F").copy()
    states[0] = rho0
    traj = Trajectory(t, states, {"trace": np.trace(states, axis1=1, axis2=2).real})
    if check:
        traj.provenance["diagnostics"] = state_diagnostics(states)
    return traj


def state_diagnostics(states) -> dict:
    """Worst Hermiticity defect and most negative eigenvalue along a trajectory."""
    herm = 0.0
    neg = 0.0
    for rho in states:
        herm = max(herm, float(np.abs(rho - rho.conj().T).max()))
        ev = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
        neg = min(neg, float(ev.min()))
    if herm > HERMITIAN_TOL:
        log.warning("Hermiticity defect %.3e exceeds %.1e", herm, HERMITIAN_TOL)
    if neg < -POSITIVITY_TOL:
        log.warning("negative eigenvalue %.3e beyond tolerance %.1e", neg, POSITIVITY_TOL)
    return {"hermiticity": herm, "min_eigenvalue": neg}


# ---------------------------------------------------------------------------
# code-space observables
# ---------------------------------------------------------------------------


def code_indices(n: int, trunc: Truncation) -> tuple[int, int]:
    if int(n) != n or n < 1:
        raise DomainError(f"code index n must be a positive integer, got {n}")
    if n > trunc.L_cut:
        raise DomainError(f"n={n} exceeds L_cut={trunc.L_cut}")
    return to_index(ModeIndex(int(n), 0), trunc), to_index(ModeIndex(-int(n), 0), trunc)


def code_vector(alpha, beta, n: int, trunc: Truncation) -> np.ndarray:
    i0, i1 = code_indices(n, trunc)
    psi = np.zeros(dimension(trunc), dtype=complex)
    psi[i0], psi[i1] = alpha, beta
    return psi


@dataclass
class Generator:
    """C, D and the free-space matrix S for one parameter point."""

    params: PhysicalParams
    trunc: Truncation
    t_ref: float
    C: np.ndarray
    D: np.ndarray
    S: np.ndarray
    steps: StepCache

    @classmethod
    def build(cls, params: PhysicalParams, trunc: Truncation, t_ref: float = 0.0, D=None) -> "Generator":
        if not (math.isfinite(t_ref) and t_ref >= 0):
            raise DomainError(f"t_ref must be non-negative, got {t_ref}")
        C = ipe.assemble_coherent(trunc, params, units="t")
        if D is None:
            D = ipe.assemble_dissipator(trunc, params, t_ref, units="t")
        S = ipe.free_space_matrix(trunc, params, units="t")
        return cls(params, trunc, t_ref, C, D, S, StepCache(C + D))

    def provenance(self) -> dict:
        return {**self.params.as_dict(), "L_cut": self.trunc.L_cut, "t_ref": self.t_ref}


@dataclass
class CodeEvolution:
    """Evolved images of |c_i><c_j| for the code modes c_0 = |n,0>, c_1 = |-n,0>.

    ``block[k, i, j]`` is the 2x2 code-space block of the image of |c_i><c_j| at
    ``t[k]``; ``trace[k, i, j]`` its full trace.
    """

    n: int
    t: np.ndarray
    block: np.ndarray  # (T, 2, 2, 2, 2): [k, i, j] -> 2x2
    trace: np.ndarray  # (T, 2, 2)
    frame: str
    provenance: dict

    def state_parts(self, alpha, beta):
        """(full trace, 2x2 code block) of the evolved alpha|c0> + beta|c1>."""
        psi = np.array([alpha, beta], dtype=complex)
        w = np.outer(psi, psi.conj())
        tr = np.einsum("ij,kij->k", w, self.trace).real
        blk = np.einsum("ij,kijab->kab", w, self.block)
        return tr, blk

    def trace_curve(self, alpha=1 / math.sqrt(2), beta=1 / math.sqrt(2)) -> np.ndarray:
        return self.state_parts(*_normalise(alpha, beta))[0]

    def detect_curve(self, alpha=1 / math.sqrt(2), beta=1 / math.sqrt(2)) -> np.ndarray:
        _, blk = self.state_parts(*_normalise(alpha, beta))
        p = 1.0 - np.trace(blk, axis1=1, axis2=2).real
        return np.clip(p, 0.0, 1.0)

    def fidelity(self, alpha, beta, k: int, condition: str = "trace") -> float:
        if condition not in CONDITIONS:
            raise DomainError(f"condition must be one of {CONDITIONS}, got {condition!r}")
        psi = np.array(_normalise(alpha, beta), dtype=complex)
        w = np.outer(psi, psi.conj())
        tr = float(np.einsum("ij,ij->", w, self.trace[k]).real)
        blk = np.einsum("ij,ijab->ab", w, self.block[k])
        norm = tr if condition == "trace" else float(np.trace(blk).real)
        if norm < 1e-300:
            return 0.0
        return float((psi.conj() @ blk @ psi).real / norm)

    def conditional_channel(self, k: int) -> tuple[float, np.ndarray]:
        """(p_detect for the maximally mixed input, 4x4 column-stacked code-space map).

        The map sends col(X) to col(Pi E(X) Pi) restricted to the code space and
        divided by the survival probability, so it is trace preserving whenever
        survival does not depend on the input.
        """
        M = np.empty((4, 4), dtype=complex)
        for i in range(2):
            for j in range(2):
                M[:, i + 2 * j] = self.block[k, i, j].reshape(-1, order="F")
        surv = 0.5 * float(np.trace(self.block[k, 0, 0] + self.block[k, 1, 1]).real)
        p_d = min(max(1.0 - surv, 0.0), 1.0)
        if surv <= 0:
            return p_d, np.zeros((4, 4), dtype=complex)
        return p_d, M / surv


def _normalise(alpha, beta):
    nrm = math.sqrt(abs(alpha) ** 2 + abs(beta) ** 2)
    if nrm == 0:
        raise DomainError("alpha = beta = 0 is not a state")
    return alpha / nrm, beta / nrm


def evolve_code_space(
    n: int,
    gen: Generator,
    t_grid,
    frame: str = "free",
) -> CodeEvolution:
    if frame not in FRAMES:
        raise DomainError(f"frame must be one of {FRAMES}, got {frame!r}")
    trunc = gen.trunc
    N = dimension(trunc)
    t = check_grid(t_grid)
    idx = code_indices(n, trunc)
    X0 = np.zeros((N * N, 4), dtype=complex)
    pairs = [(i, j) for j in range(2) for i in range(2)]
    for c, (i, j) in enumerate(pairs):
        X0[idx[i] + N * idx[j], c] = 1.0
    cols = _evolve_columns(gen.steps, X0, t)
    block = np.empty((len(t), 2, 2, 2, 2), dtype=complex)
    trace = np.empty((len(t), 2, 2), dtype=complex)
    sel = np.array(idx)
    for k in range(len(t)):
        V = expm(-gen.S * t[k]) if frame == "free" else None
        for c, (i, j) in enumerate(pairs):
            rho = cols[k, :, c].reshape(N, N, order="F")
            if V is not None:
                rho = V @ rho @ V.conj().T
            trace[k, i, j] = np.trace(rho)
            block[k, i, j] = rho[np.ix_(sel, sel)]
    prov = {**gen.provenance(), "n": int(n), "frame": frame}
    return CodeEvolution(int(n), t, block, trace, frame, prov)


def trace_curve(n, params, trunc, t_max=100.0, steps=20, *, t_ref=0.0, frame="free", gen=None) -> Trajectory:
    gen = gen or Generator.build(params, trunc, t_ref)
    ev = evolve_code_space(n, gen, uniform_grid(t_max, steps), frame)
    return Trajectory(ev.t, None, {"trace": ev.trace_curve()}, ev.provenance)


def detect_probability(n, params, trunc, t, *, t_ref=0.0, frame="free", alpha=1 / math.sqrt(2),
                       beta=1 / math.sqrt(2), gen=None) -> float:
    """1 - tr(Pi_n rho(t)); population lost to the truncation counts as detected."""
    if t < 0:
        raise DomainError(f"t must be non-negative, got {t}")
    if t == 0:
        code_indices(n, trunc)
        return 0.0
    gen = gen or Generator.build(params, trunc, t_ref)
    ev = evolve_code_space(n, gen, [0.0, float(t)], frame)
    return float(ev.detect_curve(alpha, beta)[-1])


def detect_curve(n, params, trunc, t_max=100.0, steps=20, *, t_ref=0.0, frame="free", gen=None) -> Trajectory:
    gen = gen or Generator.build(params, trunc, t_ref)
    ev = evolve_code_space(n, gen, uniform_grid(t_max, steps), frame)
    return Trajectory(ev.t, None, {"p_detect": ev.detect_curve()}, ev.provenance)


@dataclass(frozen=True)
class SearchSpec:
    """Bloch-sphere grid (polar x azimuthal points) plus Nelder-Mead refinement."""

    n_theta: int = 64
    n_phi: int = 64
    refine: bool = True

    def __post_init__(self):
        if self.n_theta < 1 or self.n_phi < 1:
            raise DomainError(f"empty search grid {self.n_theta}x{self.n_phi}")


def _bloch(theta, phi):
    return math.cos(theta / 2), complex(math.cos(phi), math.sin(phi)) * math.sin(theta / 2)


def minimise_fidelity(ev: CodeEvolution, k: int, search: SearchSpec = SearchSpec(),
                      condition: str = "trace") -> tuple[float, complex, complex]:
    if condition not in CONDITIONS:
        raise DomainError(f"condition must be one of {CONDITIONS}, got {condition!r}")
    th = np.linspace(0.0, math.pi, search.n_theta)
    ph = np.linspace(0.0, 2 * math.pi, search.n_phi, endpoint=False)
    TH, PH = np.meshgrid(th, ph, indexing="ij")
    a = np.cos(TH / 2)
    b = np.exp(1j * PH) * np.sin(TH / 2)
    psi = np.stack([a, b], axis=-1)  # (T, P, 2)
    w = psi[..., :, None] * psi[..., None, :].conj()
    tr = np.einsum("tpij,ij->tp", w, ev.trace[k]).real
    blk = np.einsum("tpij,ijab->tpab", w, ev.block[k])
    num = np.einsum("tpa,tpab,tpb->tp", psi.conj(), blk, psi).real
    norm = tr if condition == "trace" else np.trace(blk, axis1=2, axis2=3).real
    with np.errstate(divide="ignore", invalid="ignore"):
        F = np.where(norm > 1e-300, num / norm, 0.0)
    i, j = np.unravel_index(int(np.argmin(F)), F.shape)
    best = (float(F[i, j]), float(th[i]), float(ph[j]))
    if search.refine:
        res = minimize(lambda x: ev.fidelity(*_bloch(*x), k, condition), x0=[best[1], best[2]],
                       method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 2000})
        if res.fun < best[0]:
            best = (float(res.fun), float(res.x[0]), float(res.x[1]))
    alpha, beta = _bloch(best[1], best[2])
    return min(max(best[0], 0.0), 1.0), alpha, beta


def min_fidelity(n, params, trunc, t, search: SearchSpec = SearchSpec(), *, t_ref=0.0, frame="free",
                 condition="trace", gen=None):
    """(F_min, alpha, beta) at distance t."""
    if t < 0:
        raise DomainError(f"t must be non-negative, got {t}")
    gen = gen or Generator.build(params, trunc, t_ref)
    grid = [0.0] if t == 0 else [0.0, float(t)]
    ev = evolve_code_space(n, gen, grid, frame)
    return minimise_fidelity(ev, len(grid) - 1, search, condition)


def min_fidelity_curve(n, params, trunc, t_max=100.0, steps=20, search: SearchSpec = SearchSpec(), *,
                       t_ref=0.0, frame="free", condition="trace", gen=None) -> Trajectory:
    gen = gen or Generator.build(params, trunc, t_ref)
    ev = evolve_code_space(n, gen, uniform_grid(t_max, steps), frame)
    res = [minimise_fidelity(ev, k, search, condition) for k in range(len(ev.t))]
    prov = {**ev.provenance, "condition": condition}
    return Trajectory(ev.t, None, {"f_min": np.array([r[0] for r in res])}, prov)
