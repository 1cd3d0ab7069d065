"""Linear-response engine: magnetic moment, g-matrix, its gate derivative and
the Larmor/Rabi frequencies derived from them.

Conventions
-----------
* The zero-field qubit Hamiltonian in a Kramers doublet (up, down) is
  H1 = (1/2) mu_B sigma . (g B); rows of g follow the pseudo-spin axes.
* M1_a = -dH/dB_a at B = 0 (meV/T), evaluated by central differences.
* g_prime is per volt of the driven gate; f_R is in Hz for v_ac in volts.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla

from .constants import ELEMENTARY_CHARGE_MEV, H_PLANCK, MU_B
from .errors import (
    DegenerateExcitedState,
    MeshMismatch,
    OverlapTooSmall,
    SingularPrincipalFactor,
    ZeroLarmor,
)
from .kp import NBANDS
from .spectrum import KramersDoublet

HBAR = H_PLANCK / (2 * np.pi)  # meV s
DEFAULT_DELTA_B = 1e-4  # T
DEFAULT_DELTA_V = 1e-3  # V


# --------------------------------------------------------------------------
# magnetic moment


class MagneticMoment:
    """M1 = -dH/dB as three sparse matrices, from central differences of H(B)."""

    def __init__(self, op_factory: Callable, delta_b: float = DEFAULT_DELTA_B):
        self.delta_b = float(delta_b)
        ops = []
        for a in range(3):
            e = np.zeros(3)
            e[a] = self.delta_b
            hp = op_factory(e).matrix
            hm = op_factory(-e).matrix
            ops.append(((hm - hp) / (2 * self.delta_b)).tocsr())
        self.operators = ops
        self.dimension = ops[0].shape[0]

    def along(self, b) -> "object":
        b = np.asarray(b, dtype=float)
        return b[0] * self.operators[0] + b[1] * self.operators[1] + b[2] * self.operators[2]

    def elements(self, bra: np.ndarray, ket: np.ndarray | None = None) -> "MagneticMomentElements":
        bra = np.atleast_2d(np.asarray(bra).T).T if np.ndim(bra) == 1 else np.asarray(bra)
        ket = bra if ket is None else (np.asarray(ket)[:, None] if np.ndim(ket) == 1 else np.asarray(ket))
        if bra.shape[0] != self.dimension or ket.shape[0] != self.dimension:
            raise MeshMismatch("state dimension does not match the operator")
        el = np.array([bra.conj().T @ (m @ ket) for m in self.operators])
        return MagneticMomentElements(el, self.delta_b)


@dataclass(frozen=True, eq=False)
class MagneticMomentElements:
    """elements[a, i, j] = <bra_i| M1_a |ket_j> in meV/T."""

    elements: np.ndarray
    delta_b: float

    def along(self, b) -> np.ndarray:
        return np.einsum("a,aij->ij", np.asarray(b, dtype=float), self.elements)


def m1_elements(op_factory: Callable, states: np.ndarray, delta_b: float = DEFAULT_DELTA_B, kets=None) -> MagneticMomentElements:
    """Central-difference M1 matrix elements over a window of states (dim, n)."""
    return MagneticMoment(op_factory, delta_b).elements(states, kets)


# --------------------------------------------------------------------------
# g-matrix


def compute_g(doublet: KramersDoublet, m1) -> np.ndarray:
    """g-matrix of a doublet.

    ``m1`` is a MagneticMoment, or MagneticMomentElements whose first two
    window states are (doublet.up, doublet.down).
    """
    if isinstance(m1, MagneticMoment):
        el = m1.elements(doublet.states).elements
    else:
        el = m1.elements
    du = el[:, 1, 0]  # <down|M1_a|up>
    uu = el[:, 0, 0]  # <up|M1_a|up>
    return (-2.0 / MU_B) * np.array([du.real, du.imag, uu.real])


def align_doublet(reference: KramersDoublet, other: KramersDoublet, min_overlap: float = 0.5) -> KramersDoublet:
    """Rotate ``other`` so its overlap matrix with ``reference`` is alpha * I.

    Uses the polar factor of O_ij = <other_i|reference_j>, which for Kramers
    doublets equals the normalized projection of the reference states.
    """
    O = other.states.conj().T @ reference.states
    W, P = sla.polar(O)
    s = np.linalg.svd(O, compute_uv=False)
    if s.min() < min_overlap:
        raise OverlapTooSmall(f"doublet overlap {s.min():.3f} below {min_overlap}; reduce the bias step")
    out = other.rotated(W)
    prov = dict(out.provenance)
    prov["alpha"] = float(np.real(np.trace(P)) / 2)
    return KramersDoublet(out.energy, out.up, out.down, prov)


def su2_from_angles(a: float, b: float, c: float) -> np.ndarray:
    """Unitary exp(-i a sz/2) exp(-i b sy/2) exp(-i c sz/2)."""
    rz = lambda t: np.diag([np.exp(-0.5j * t), np.exp(0.5j * t)])
    ry = np.array([[np.cos(b / 2), -np.sin(b / 2)], [np.sin(b / 2), np.cos(b / 2)]])
    return rz(a) @ ry @ rz(c)


def su2_to_so3(u: np.ndarray) -> np.ndarray:
    """R with u^dagger sigma_i u = sum_j R_ij sigma_j.

    Rotating a doublet basis as states -> states @ u maps g to R^T g (and g'
    to R^T g').
    """
    s = _pauli()
    uh = np.asarray(u).conj().T
    return np.array([[0.5 * np.trace(s[j] @ uh @ s[i] @ u).real for j in range(3)] for i in range(3)])


def _pauli():
    return np.array([[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]], dtype=complex)


# --------------------------------------------------------------------------
# Larmor and Rabi


def effective_g(g: np.ndarray, b) -> float:
    b = np.asarray(b, dtype=float)
    if abs(np.linalg.norm(b) - 1) > 1e-9:
        raise ValueError("b must be a unit vector")
    return float(np.linalg.norm(np.asarray(g) @ b))


@dataclass(frozen=True)
class RabiResult:
    f_rabi: float  # Hz
    g_star: float
    larmor: np.ndarray  # rad/s, Omega vector
    larmor_prime: np.ndarray  # rad/s per volt
    B: float
    b: tuple
    v_ac: float

    @property
    def zeeman_splitting(self) -> float:
        """meV"""
        return self.g_star * MU_B * self.B

    @property
    def larmor_frequency(self) -> float:
        """Hz"""
        return self.zeeman_splitting / H_PLANCK


def rabi_from_g(g, g_prime, b, B: float, v_ac: float) -> RabiResult:
    """f_R = (mu_B B v_ac / 2 h g*) |(g b) x (g' b)|."""
    b = np.asarray(b, dtype=float)
    if abs(np.linalg.norm(b) - 1) > 1e-9:
        raise ValueError("b must be a unit vector")
    gb = np.asarray(g) @ b
    gpb = np.asarray(g_prime) @ b
    g_star = float(np.linalg.norm(gb))
    if g_star == 0:
        raise ZeroLarmor("g* = 0: Rabi frequency undefined for this orientation")
    f = MU_B * B * v_ac / (2 * H_PLANCK * g_star) * float(np.linalg.norm(np.cross(gb, gpb)))
    larmor = MU_B * B * gb / (2 * HBAR)
    larmor_p = MU_B * B * gpb / (2 * HBAR)
    return RabiResult(f, g_star, larmor, larmor_p, float(B), tuple(b), float(v_ac))


def rabi_map_arrays(g, g_prime, bs: np.ndarray, B, v_ac: float) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized (g*, f_R) over unit vectors ``bs`` (N, 3); B scalar or (N,).

    Rows with g* = 0 return f_R = nan.
    """
    gb = bs @ np.asarray(g).T
    gpb = bs @ np.asarray(g_prime).T
    gs = np.linalg.norm(gb, axis=1)
    cross = np.linalg.norm(np.cross(gb, gpb), axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = MU_B * np.asarray(B) * v_ac / (2 * H_PLANCK * gs) * cross
    f = np.where(gs > 0, f, np.nan)
    return gs, f


def rabi_diagonal_approx(g_diag, g_prime_diag, b, B: float, v_ac: float) -> float:
    """Approximate f_R for diagonal g and g' dropping the (g_x g'_y - g_y g'_x) term."""
    gx, gy, gz = g_diag
    px, py, pz = g_prime_diag
    bx, by, bz = np.asarray(b, dtype=float)
    num = np.sqrt((gz * px - pz * gx) ** 2 * bx**2 + (gz * py - pz * gy) ** 2 * by**2)
    den = np.sqrt(gx**2 * bx**2 + gy**2 * by**2 + gz**2 * bz**2)
    return float(MU_B * B * v_ac / (2 * H_PLANCK) * abs(bz) * num / den)


def diagonal_approx_neglected_ratio(g_diag, g_prime_diag) -> float:
    """Size of the dropped (g_x g'_y - g_y g'_x) term relative to the kept ones."""
    gx, gy, gz = g_diag
    px, py, pz = g_prime_diag
    kept = max(abs(gz * px - pz * gx), abs(gz * py - pz * gy))
    return float(abs(gx * py - gy * px) / kept) if kept else float("inf")


def channel_field(d1, mesh=None) -> np.ndarray:
    """Values of a mesh field (a UnitResponse or an array) on the k.p nodes."""
    if mesh is None:
        mesh = getattr(d1, "mesh", None)
    arr = getattr(d1, "d1", d1)
    arr = np.asarray(arr)
    if mesh is not None and arr.shape == mesh.shape:
        return arr.ravel()[mesh.channel_flat_index()]
    return arr.ravel()


def dipole_element(bra: np.ndarray, ket: np.ndarray, d1_nodes: np.ndarray) -> complex:
    """<bra| D1 |ket> with D1 diagonal in position and band."""
    w = np.repeat(np.asarray(d1_nodes, dtype=float), NBANDS)
    return complex(np.vdot(bra, w * ket))


def rabi_direct(state0: np.ndarray, state1: np.ndarray, d1, v_ac: float) -> float:
    """f_R = (e/h) v_ac |<1|D1|0>| for finite-field qubit eigenstates.

    ``d1`` is a UnitResponse or D1 on the k.p nodes.
    """
    nodes = channel_field(d1)
    return float(ELEMENTARY_CHARGE_MEV * v_ac / H_PLANCK * abs(dipole_element(state1, state0, nodes)))


# --------------------------------------------------------------------------
# perturbation series


@dataclass(frozen=True)
class PerturbationBreakdown:
    contributions: np.ndarray  # complex Hz, one per excited pair
    energies: np.ndarray  # E_n - E_0 (meV)
    qubit_splitting: float  # meV, from H1(B)

    @property
    def total(self) -> float:
        return float(abs(self.contributions.sum()))

    @property
    def magnitudes(self) -> np.ndarray:
        return np.abs(self.contributions)

    @property
    def phases(self) -> np.ndarray:
        return np.angle(self.contributions)

    @property
    def partial_sums(self) -> np.ndarray:
        return np.abs(np.cumsum(self.contributions))

    def dominant_share(self) -> float:
        m = self.magnitudes
        return float(m.max() / m.sum()) if m.sum() else 0.0


def _window_elements(m1, states: np.ndarray, b) -> np.ndarray:
    if isinstance(m1, MagneticMoment):
        mb = m1.along(b)
        return states.conj().T @ (mb @ states)
    el = m1.along(b)
    if el.shape[0] != states.shape[1]:
        raise MeshMismatch("M1 elements window does not match the doublet and excited pairs")
    return el


def perturbation_series(
    doublet: KramersDoublet,
    excited: Sequence[KramersDoublet],
    m1,
    d1_nodes: np.ndarray,
    b,
    B: float,
    v_ac: float,
    degeneracy_tol: float = 1e-9,
) -> PerturbationBreakdown:
    """Rabi frequency as a sum over excited Kramers pairs (first order in B and v_ac).

    ``m1`` is a MagneticMoment, or MagneticMomentElements over the window
    [doublet.up, doublet.down, excited[0].up, excited[0].down, ...].
    """
    b = np.asarray(b, dtype=float)
    states = np.column_stack([doublet.up, doublet.down] + [s for p in excited for s in (p.up, p.down)])
    mb = _window_elements(m1, states, b)
    h1 = -B * mb[:2, :2]
    h1 = 0.5 * (h1 + h1.conj().T)
    w, c = np.linalg.eigh(h1)
    # zeroth-order qubit states |0>, |1> in the full window
    q0 = np.zeros(states.shape[1], dtype=complex)
    q1 = np.zeros(states.shape[1], dtype=complex)
    q0[:2] = c[:, 0]
    q1[:2] = c[:, 1]
    dw = np.repeat(channel_field(d1_nodes).astype(float), NBANDS)
    D = states.conj().T @ (dw[:, None] * states)
    M0 = mb @ q0  # <n|b.M1|0>
    M1r = q1.conj() @ mb  # <1|b.M1|n>
    D0 = D @ q0
    D1r = q1.conj() @ D
    pref = ELEMENTARY_CHARGE_MEV * v_ac * B / H_PLANCK
    contribs = []
    dE = []
    for n, p in enumerate(excited):
        gap = doublet.energy - p.energy
        if abs(gap) < degeneracy_tol:
            raise DegenerateExcitedState(f"excited pair {n} is degenerate with the qubit doublet")
        idx = [2 + 2 * n, 3 + 2 * n]
        s = sum(D1r[i] * M0[i] + M1r[i] * D0[i] for i in idx)
        contribs.append(pref * s / gap)
        dE.append(p.energy - doublet.energy)
    return PerturbationBreakdown(np.array(contribs, dtype=complex), np.array(dE), float(w[1] - w[0]))


# --------------------------------------------------------------------------
# SVD, Zeeman tensor and TMR / IZR split


def svd_decompose(g) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """g = U diag(g_d) V^T with proper rotations U, V and |g_d| descending.

    Column signs are chosen so that the largest component of each V column is
    positive; a negative determinant of g shows up as a negative last factor.
    """
    g = np.asarray(g, dtype=float)
    U, s, Vt = np.linalg.svd(g)
    V = Vt.T.copy()
    s = s.copy()
    for i in range(3):
        k = int(np.argmax(np.abs(V[:, i])))
        if V[k, i] < 0:
            V[:, i] *= -1
            U[:, i] *= -1
    if np.linalg.det(V) < 0:
        V[:, 2] *= -1
        s[2] *= -1
    if np.linalg.det(U) < 0:
        U[:, 2] *= -1
        s[2] *= -1
    return U, s, V


def zeeman_tensor(g) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    G = g.T @ g
    return 0.5 * (G + G.T)


def principal_g_by_axis(g) -> np.ndarray:
    """|principal g-factors| assigned to the device axis closest to each principal axis."""
    U, gd, V = svd_decompose(g)
    out = np.zeros(3)
    taken = set()
    for i in np.argsort(-np.abs(gd)):
        order = np.argsort(-np.abs(V[:, i]))
        ax = next(int(a) for a in order if int(a) not in taken)
        taken.add(ax)
        out[ax] = abs(gd[i])
    return out


@dataclass(frozen=True, eq=False)
class GMatrixSet:
    g: np.ndarray
    g_prime: np.ndarray
    U: np.ndarray
    g_d: np.ndarray
    V: np.ndarray
    zeeman: np.ndarray
    zeeman_prime: np.ndarray  # d/dV of g^T g (product rule)
    zeeman_prime_fd: np.ndarray | None  # differenced at the aligned bias points
    tmr: np.ndarray  # principal frames, per volt
    izr: np.ndarray  # principal frames, per volt
    delta_v: float
    delta_b: float
    gate: str = ""
    bias: dict = field(default_factory=dict)
    basis: dict = field(default_factory=dict)

    @property
    def g_prime_principal(self) -> np.ndarray:
        return self.U.T @ self.g_prime @ self.V

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "axes": "x along wire, y in-plane across, z out of substrate",
            "g": self.g.tolist(),
            "g_prime": self.g_prime.tolist(),
            "U": self.U.tolist(),
            "g_d": self.g_d.tolist(),
            "V": self.V.tolist(),
            "zeeman": self.zeeman.tolist(),
            "zeeman_prime": self.zeeman_prime.tolist(),
            "zeeman_prime_fd": None if self.zeeman_prime_fd is None else self.zeeman_prime_fd.tolist(),
            "tmr_principal": self.tmr.tolist(),
            "izr_principal": self.izr.tolist(),
            "delta_v": self.delta_v,
            "delta_b": self.delta_b,
            "gate": self.gate,
            "bias": self.bias,
            "basis": self.basis,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "GMatrixSet":
        arr = lambda k: None if d.get(k) is None else np.array(d[k], dtype=float)
        return cls(
            g=arr("g"), g_prime=arr("g_prime"), U=arr("U"), g_d=arr("g_d"), V=arr("V"),
            zeeman=arr("zeeman"), zeeman_prime=arr("zeeman_prime"), zeeman_prime_fd=arr("zeeman_prime_fd"),
            tmr=arr("tmr_principal"), izr=arr("izr_principal"), delta_v=float(d["delta_v"]),
            delta_b=float(d["delta_b"]), gate=d.get("gate", ""), bias=dict(d.get("bias", {})),
            basis=dict(d.get("basis", {})),
        )


def split_tmr_izr(gset_or_g, g_prime=None, zeeman_prime=None) -> tuple[np.ndarray, np.ndarray]:
    """g-TMR and iso-Zeeman parts of g', both in the principal frames of g.

    tmr = g_d^-1 G' / 2 and izr = g' - tmr, with G' = d(g^T g)/dV. When G' is
    not given it follows from the product rule, which makes
    diag(g_d) izr antisymmetric to rounding error.
    """
    if isinstance(gset_or_g, GMatrixSet):
        g, g_prime, zeeman_prime = gset_or_g.g, gset_or_g.g_prime, gset_or_g.zeeman_prime
    else:
        g = gset_or_g
    g = np.asarray(g, dtype=float)
    gp = np.asarray(g_prime, dtype=float)
    U, gd, V = svd_decompose(g)
    if np.any(np.abs(gd) < 1e-12 * max(1.0, np.abs(gd).max())):
        raise SingularPrincipalFactor("a principal g-factor vanishes; TMR/IZR split undefined")
    if zeeman_prime is None:
        zeeman_prime = gp.T @ g + g.T @ gp
    gp_pf = U.T @ gp @ V
    Gp_pf = V.T @ np.asarray(zeeman_prime) @ V
    tmr = 0.5 * Gp_pf / gd[:, None]
    izr = gp_pf - tmr
    return tmr, izr


def make_gmatrix_set(g, g_plus, g_minus, delta_v, delta_b=DEFAULT_DELTA_B, gate="", bias=None, basis=None) -> GMatrixSet:
    """Assemble a GMatrixSet from g at V0 and aligned g at V0 +/- delta_v."""
    g = np.asarray(g, dtype=float)
    gp = (np.asarray(g_plus) - np.asarray(g_minus)) / (2 * delta_v)
    U, gd, V = svd_decompose(g)
    Gp = gp.T @ g + g.T @ gp
    Gp_fd = (zeeman_tensor(g_plus) - zeeman_tensor(g_minus)) / (2 * delta_v)
    tmr, izr = split_tmr_izr(g, gp, Gp) if np.all(np.abs(gd) > 1e-12) else (np.full((3, 3), np.nan),) * 2
    return GMatrixSet(
        g=g, g_prime=gp, U=U, g_d=gd, V=V, zeeman=zeeman_tensor(g), zeeman_prime=0.5 * (Gp + Gp.T),
        zeeman_prime_fd=Gp_fd, tmr=tmr, izr=izr, delta_v=float(delta_v), delta_b=float(delta_b),
        gate=gate, bias=dict(bias or {}), basis=dict(basis or {}),
    )


def compute_g_prime(gate: str, v0: dict, delta_v: float, pipeline, align: bool = True) -> np.ndarray:
    """Central difference of aligned g-matrices at V0 +/- delta_v on ``gate``."""
    return pipeline.g_prime(gate, v0, delta_v, align=align)[0]


def state_hash(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()[:16]
