"""Topmost hole states of a KpOperator and Kramers-pair bookkeeping."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DegenerateSubspaceUnresolved, NotConverged, UnpairedState
from .kp import NBANDS, KpOperator, time_reverse, total_angular_momentum

log = logging.getLogger(__name__)

DEFAULT_PAIR_TOL = 1e-6  # meV
_FZ = total_angular_momentum()


@dataclass(frozen=True, eq=False)
class EigenSet:
    """Eigenpairs sorted by decreasing energy; ``states`` is (dim, n)."""

    energies: np.ndarray
    states: np.ndarray
    residuals: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.energies)

    @property
    def pairs(self) -> list[tuple[float, np.ndarray]]:
        return [(float(e), self.states[:, i]) for i, e in enumerate(self.energies)]


def _rayleigh_ritz(H, V):
    V, _ = np.linalg.qr(V)
    HV = H @ V
    w, c = sla.eigh(V.conj().T @ HV)
    order = np.argsort(-w)
    w, c = w[order], c[:, order]
    X = V @ c
    R = HV @ c - X * w
    return w, X, np.linalg.norm(R, axis=0)


def _trial_energy(op: KpOperator) -> float:
    """Variational lower bound on the top eigenvalue from simple trial envelopes."""
    mesh = op.mesh
    shape = mesh.channel_shape()
    env = np.ones(shape)
    for ax, m in enumerate(shape):
        s = np.ones(m) if mesh.bc[ax] == "periodic" else np.sin(np.pi * np.arange(1, m + 1) / (m + 1))
        env = env * s.reshape([-1 if a == ax else 1 for a in range(3)])
    trials = [env.ravel()]
    diag = op.matrix.diagonal().real.reshape(-1, NBANDS)[:, 0]
    peak = np.unravel_index(int(np.argmax(diag)), shape)
    grids = np.meshgrid(*(np.arange(n) for n in shape), indexing="ij")
    r2 = sum(((g - p) / max(1.0, n / 4.0)) ** 2 for g, p, n in zip(grids, peak, shape))
    trials.append((env * np.exp(-r2)).ravel())
    best = -np.inf
    H = op.matrix
    for t in trials:
        t = t / np.linalg.norm(t)
        for band in range(NBANDS):
            psi = np.zeros((t.size, NBANDS), dtype=complex)
            psi[:, band] = t
            psi = psi.ravel()
            best = max(best, float(np.vdot(psi, H @ psi).real))
    return best


def lowest_hole_states(
    op: KpOperator,
    count: int,
    seed: int | None = 0,
    tol: float = 1e-12,
    sigma: float | None = None,
    maxiter: int | None = None,
) -> EigenSet:
    """The ``count`` highest eigenstates (top of the valence band).

    Shift-invert Lanczos with the shift placed just above a variational
    estimate of the top state; if a state is found above the shift the solve is
    repeated with the shift above the potential maximum, where the kinetic
    operator can only lower energies.
    """
    if count < 2:
        raise ValueError("count must be >= 2")
    H = op.matrix.tocsc()
    n = H.shape[0]
    want = min(count + 2, n - 1)
    upper = op.potential_max + 1.0
    if sigma is None:
        est = _trial_energy(op)
        sigma = est + 0.2 * max(upper - est, 0.0) + 1.0
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    attempts = []
    for shift in (sigma, upper):
        lu = spla.splu(H - shift * sp.identity(n, dtype=complex, format="csc"))
        opinv = spla.LinearOperator(H.shape, matvec=lu.solve, dtype=complex)
        try:
            w, v = spla.eigsh(
                H, k=want, sigma=shift, OPinv=opinv, v0=v0, tol=tol,
                ncv=min(n - 1, max(2 * want + 1, 30)), maxiter=maxiter,
            )
        except spla.ArpackNoConvergence as exc:
            raise NotConverged(f"eigensolver did not converge: {exc}") from None
        attempts.append(shift)
        if w.max() <= shift or shift == upper:
            break
        log.debug("state above shift %.3f meV; retrying above the potential maximum", shift)
    w, X, res = _rayleigh_ritz(H, v)
    scale = op.norm_estimate()
    if np.any(res > 1e-8 * scale):
        raise NotConverged(f"residual {res.max():.2e} exceeds 1e-8 * |H|")
    if want > count and abs(w[count - 1] - w[count]) < 1e-7 * max(1.0, abs(w[count])):
        raise DegenerateSubspaceUnresolved("requested window cuts through a degenerate cluster")
    return EigenSet(
        energies=w[:count].copy(),
        states=X[:, :count].copy(),
        residuals=res[:count].copy(),
        diagnostics={"shifts": attempts, "norm_estimate": scale, "dimension": n},
    )


def dense_states(op: KpOperator, count: int | None = None) -> EigenSet:
    """Dense Hermitian diagonalization (top ``count`` states, or all)."""
    H = op.matrix.toarray()
    n = H.shape[0]
    if count is None or count >= n:
        w, v = sla.eigh(H)
    else:
        w, v = sla.eigh(H, subset_by_index=[n - count, n - 1])
    order = np.argsort(-w)
    w, v = w[order], v[:, order]
    res = np.linalg.norm(op.matrix @ v - v * w, axis=0)
    return EigenSet(w, v, res, {"method": "dense", "dimension": n})


# --------------------------------------------------------------------------
# Kramers doublets


@dataclass(frozen=True, eq=False)
class KramersDoublet:
    """Degenerate pair with up = T down; ``up``/``down`` are (dim,) vectors."""

    energy: float
    up: np.ndarray
    down: np.ndarray
    provenance: dict = field(default_factory=dict)

    @property
    def states(self) -> np.ndarray:
        return np.column_stack([self.up, self.down])

    def rotated(self, u: np.ndarray) -> "KramersDoublet":
        """New basis (up', down') = (up, down) @ u for a 2x2 unitary u."""
        s = self.states @ np.asarray(u)
        return KramersDoublet(self.energy, s[:, 0], s[:, 1], dict(self.provenance))

    def partner_overlap(self) -> float:
        return float(abs(np.vdot(self.up, time_reverse(self.down))))


def _band_operator(states: np.ndarray, op6: np.ndarray) -> np.ndarray:
    s = states.reshape(-1, NBANDS, states.shape[1])
    return np.einsum("nak,ab,nbl->kl", s.conj(), op6, s)


def canonical_doublet(a: np.ndarray, b: np.ndarray, tol_partner: float = 0.999):
    """Fix the basis of span(a, b): up maximizes <F_z> (or F_x, F_y), down = -T up.

    The phase of up makes its largest component real positive, so the result
    does not depend on the eigensolver's arbitrary rotation of the pair.
    """
    span, _ = np.linalg.qr(np.column_stack([a, b]))
    up = None
    for axis in (2, 0, 1):
        m = _band_operator(span, _FZ[axis])
        w, c = np.linalg.eigh(m)
        if w[1] - w[0] > 1e-6:
            up = span @ c[:, 1]
            break
    if up is None:
        up = span[:, 0]
    k = int(np.argmax(np.abs(up)))
    up = up * (abs(up[k]) / up[k])
    t_up = time_reverse(up)
    proj = span @ (span.conj().T @ t_up)
    weight = float(np.linalg.norm(proj))
    if weight < tol_partner:
        raise UnpairedState(f"states are not time-reversal partners (overlap {weight:.4f})")
    down = -proj / weight
    return up, down


def pair_kramers(eigs: EigenSet, tol_energy: float = DEFAULT_PAIR_TOL, provenance: dict | None = None) -> list[KramersDoublet]:
    """Group consecutive eigenpairs into Kramers doublets."""
    n = len(eigs)
    if n % 2:
        raise UnpairedState("odd number of states")
    out = []
    for i in range(0, n, 2):
        e0, e1 = eigs.energies[i], eigs.energies[i + 1]
        if abs(e0 - e1) > tol_energy:
            raise UnpairedState(f"pair {i // 2} split by {abs(e0 - e1):.3e} meV > tolerance {tol_energy}")
        up, down = canonical_doublet(eigs.states[:, i], eigs.states[:, i + 1])
        out.append(KramersDoublet(0.5 * (e0 + e1), up, down, dict(provenance or {})))
    return out
