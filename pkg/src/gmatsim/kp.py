"""Six-band k.p Hamiltonian of the silicon valence band on the channel mesh.

Band order: |3/2,+3/2>, |3/2,+1/2>, |3/2,-1/2>, |3/2,-3/2>, |1/2,+1/2>, |1/2,-1/2>.
Energies are electron energies in meV (valence band maximum at 0, bands
disperse downwards); the topmost eigenstates are the hole states.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .constants import E_OVER_HBAR, ELEMENTARY_CHARGE_MEV, HBAR2_2M0, MU_B
from .device import DeviceModel, MaterialParams, Mesh
from .errors import MeshMismatch, ValidationError

NBANDS = 6
HH_BANDS = (0, 3)
LH_BANDS = (1, 2)
SO_BANDS = (4, 5)
_S2 = math.sqrt(2.0)
_S3 = math.sqrt(3.0)
_S32 = math.sqrt(1.5)


def _valence_matrix(P, Q, R, S, delta=0.0) -> np.ndarray:
    """-[[...]] six-band form built from the scalar blocks P, Q, R, S."""
    Rc, Sc = np.conj(R), np.conj(S)
    m = np.array(
        [
            [P + Q, -S, R, 0, S / _S2, -_S2 * R],
            [-Sc, P - Q, 0, R, _S2 * Q, -_S32 * S],
            [Rc, 0, P - Q, S, -_S32 * Sc, -_S2 * Q],
            [0, Rc, Sc, P + Q, _S2 * Rc, Sc / _S2],
            [Sc / _S2, _S2 * Q, -_S32 * S, _S2 * R, P + delta, 0],
            [-_S2 * Rc, -_S32 * Sc, -_S2 * Q, S / _S2, 0, P + delta],
        ],
        dtype=complex,
    )
    return -m


def _kinetic_pqrs(k, g1, g2, g3):
    kx, ky, kz = k
    c = HBAR2_2M0
    P = c * g1 * (kx * kx + ky * ky + kz * kz)
    Q = c * g2 * (kx * kx + ky * ky - 2 * kz * kz)
    R = c * _S3 * (-g3 * (kx * kx - ky * ky) + 2j * g2 * kx * ky)
    S = c * 2 * _S3 * g3 * (kx - 1j * ky) * kz
    return P, Q, R, S


def _strain_pqrs(eps, material: MaterialParams):
    """Bir-Pikus blocks; deformation potentials (eV) converted to meV.

    Obtained from the kinetic blocks by k_a k_b -> eps_ab with
    (hbar^2/2m0) g1 -> -a_v, (hbar^2/2m0) g2 -> -b_v/2 and
    (hbar^2/2m0) g3 -> -d_v/(2 sqrt 3), in the same device axes.
    """
    a = 1e3 * material.a_v
    b = 1e3 * material.b_v
    d = 1e3 * material.d_v
    e = np.asarray(eps, dtype=float)
    P = -a * (e[0, 0] + e[1, 1] + e[2, 2])
    Q = -0.5 * b * (e[0, 0] + e[1, 1] - 2 * e[2, 2])
    R = 0.5 * d * (e[0, 0] - e[1, 1]) - 1j * _S3 * b * e[0, 1]
    S = -d * (e[0, 2] - 1j * e[1, 2])
    return P, Q, R, S


def luttinger_params(material: MaterialParams, gamma3_override: float | None = None):
    g3 = material.gamma3 if gamma3_override is None else gamma3_override
    return material.gamma1, material.gamma2, g3


def bulk_hamiltonian(k, material: MaterialParams, strain=None, gamma3_override=None) -> np.ndarray:
    """6x6 bulk Hamiltonian at wavevector k (1/nm), optional homogeneous strain."""
    g1, g2, g3 = luttinger_params(material, gamma3_override)
    P, Q, R, S = _kinetic_pqrs(np.asarray(k, dtype=float), g1, g2, g3)
    if strain is not None:
        dP, dQ, dR, dS = _strain_pqrs(strain, material)
        P, Q, R, S = P + dP, Q + dQ, R + dR, S + dS
    return _valence_matrix(P, Q, R, S, material.delta_so)


def strain_hamiltonian(strain, material: MaterialParams) -> np.ndarray:
    """Per-node 6x6 Bir-Pikus block for a homogeneous strain tensor."""
    eps = np.asarray(strain, dtype=float)
    if not np.allclose(eps, eps.T, atol=1e-15):
        raise ValidationError("strain tensor must be symmetric")
    return _valence_matrix(*_strain_pqrs(eps, material))


def kinetic_coefficients(material: MaterialParams, gamma3_override=None) -> dict:
    """Hermitian 6x6 C_ab with H_kin(k) = sum_{a<=b} C_ab k_a k_b."""
    g = luttinger_params(material, gamma3_override)

    def hk(k):
        return _valence_matrix(*_kinetic_pqrs(np.asarray(k, dtype=float), *g))

    e = np.eye(3)
    h0 = hk(np.zeros(3))
    out = {}
    for a in range(3):
        out[(a, a)] = hk(e[a]) - h0
        for b in range(a + 1, 3):
            out[(a, b)] = hk(e[a] + e[b]) - hk(e[a]) - hk(e[b]) + h0
    return out


def spin_orbit_block(material: MaterialParams) -> np.ndarray:
    return np.diag([0, 0, 0, 0, -material.delta_so, -material.delta_so]).astype(complex)


# --------------------------------------------------------------------------
# Bloch Zeeman term and angular momentum


def bloch_matrices(kappa: float) -> np.ndarray:
    """(Kx, Ky, Kz) such that the Bloch Zeeman term is mu_B B.K."""
    k1 = 1 + kappa
    k2 = 1 + 2 * kappa
    kx = -np.array(
        [
            [0, _S3 * kappa, 0, 0, -_S32 * k1, 0],
            [_S3 * kappa, 0, 2 * kappa, 0, 0, -k1 / _S2],
            [0, 2 * kappa, 0, _S3 * kappa, k1 / _S2, 0],
            [0, 0, _S3 * kappa, 0, 0, _S32 * k1],
            [-_S32 * k1, 0, k1 / _S2, 0, 0, k2],
            [0, -k1 / _S2, 0, _S32 * k1, k2, 0],
        ],
        dtype=complex,
    )
    ky = 1j * np.array(
        [
            [0, _S3 * kappa, 0, 0, -_S32 * k1, 0],
            [-_S3 * kappa, 0, 2 * kappa, 0, 0, -k1 / _S2],
            [0, -2 * kappa, 0, _S3 * kappa, -k1 / _S2, 0],
            [0, 0, -_S3 * kappa, 0, 0, -_S32 * k1],
            [_S32 * k1, 0, k1 / _S2, 0, 0, k2],
            [0, k1 / _S2, 0, _S32 * k1, -k2, 0],
        ],
        dtype=complex,
    )
    kz = -np.array(
        [
            [3 * kappa, 0, 0, 0, 0, 0],
            [0, kappa, 0, 0, _S2 * k1, 0],
            [0, 0, -kappa, 0, 0, _S2 * k1],
            [0, 0, 0, -3 * kappa, 0, 0],
            [0, _S2 * k1, 0, 0, k2, 0],
            [0, 0, _S2 * k1, 0, 0, -k2],
        ],
        dtype=complex,
    )
    return np.array([kx, ky, kz])


def angular_momentum() -> tuple[np.ndarray, np.ndarray]:
    """Orbital (L) and spin (S) matrices in the band basis, each (3, 6, 6).

    The Bloch term reads -(3 kappa + 1) L + 2 S, so it is linear in kappa;
    two evaluations separate the two operators.
    """
    k_zero = bloch_matrices(0.0)  # -L + 2S
    k_third = bloch_matrices(-1.0 / 3.0)  # 2S
    S = 0.5 * k_third
    L = k_third - k_zero
    return L, S


def total_angular_momentum() -> np.ndarray:
    L, S = angular_momentum()
    return L + S


def bloch_zeeman(field: "MagneticField", material: MaterialParams) -> np.ndarray:
    """Per-node 6x6 Bloch Zeeman block mu_B B.K (meV)."""
    K = bloch_matrices(material.kappa)
    return MU_B * np.einsum("a,aij->ij", field.vector, K)


def j32_matrices() -> np.ndarray:
    """Spin-3/2 matrices (Jx, Jy, Jz), basis m = 3/2 .. -3/2."""
    m = np.array([1.5, 0.5, -0.5, -1.5])
    jp = np.zeros((4, 4))
    for i in range(1, 4):
        jp[i - 1, i] = math.sqrt(1.5 * 2.5 - m[i] * (m[i] + 1))
    jx = 0.5 * (jp + jp.T)
    jy = -0.5j * (jp - jp.T)
    return np.array([jx, jy, np.diag(m)]).astype(complex)


# time reversal T = U_T K0 (K0 complex conjugation) in the band basis
TIME_REVERSAL_U = np.zeros((6, 6), dtype=complex)


def _init_time_reversal():
    # T|j,m> = (-1)^(j-m) |j,-m>, consistent with the Bloch phases above
    u = TIME_REVERSAL_U
    u[3, 0] = 1
    u[2, 1] = -1
    u[1, 2] = 1
    u[0, 3] = -1
    u[5, 4] = 1
    u[4, 5] = -1


_init_time_reversal()


# --------------------------------------------------------------------------
# magnetic field and flags


@dataclass(frozen=True)
class MagneticField:
    """Field of magnitude ``magnitude`` (T) along the unit vector ``b``.

    theta is the polar angle from z; phi the azimuth measured from y towards x,
    so theta = phi = 90 deg is B || x.
    """

    magnitude: float
    b: tuple[float, float, float] = (0.0, 0.0, 1.0)

    def __post_init__(self):
        v = np.asarray(self.b, dtype=float)
        n = np.linalg.norm(v)
        if n == 0:
            raise ValidationError("field direction must be nonzero")
        object.__setattr__(self, "b", tuple(float(c) for c in v / n))

    @classmethod
    def from_vector(cls, vec) -> "MagneticField":
        v = np.asarray(vec, dtype=float)
        n = float(np.linalg.norm(v))
        if n == 0:
            return cls(0.0)
        return cls(n, tuple(v / n))

    @classmethod
    def from_angles(cls, magnitude: float, theta_deg: float, phi_deg: float) -> "MagneticField":
        return cls(magnitude, tuple(direction(theta_deg, phi_deg)))

    @property
    def vector(self) -> np.ndarray:
        return self.magnitude * np.asarray(self.b)

    @property
    def angles(self) -> tuple[float, float]:
        return angles_of(np.asarray(self.b))


def direction(theta_deg, phi_deg) -> np.ndarray:
    """Unit vector(s) for polar angle theta (from z) and azimuth phi (from y)."""
    t = np.radians(theta_deg)
    p = np.radians(phi_deg)
    return np.stack(np.broadcast_arrays(np.sin(t) * np.sin(p), np.sin(t) * np.cos(p), np.cos(t)), axis=-1)


def angles_of(b) -> tuple[float, float]:
    bx, by, bz = b
    theta = math.degrees(math.atan2(math.hypot(bx, by), bz))
    phi = math.degrees(math.atan2(bx, by)) % 360.0
    return theta, phi


@dataclass(frozen=True)
class CouplingFlags:
    peierls_on: bool = True
    bloch_zeeman_on: bool = True
    strain_on: bool = True
    gamma3_override: float | None = None
    gamma3_scope: str = "all"  # "all" or "magnetic" (only the operator used for M1)

    def key(self) -> tuple:
        return (self.peierls_on, self.bloch_zeeman_on, self.strain_on, self.gamma3_override, self.gamma3_scope)

    def for_hamiltonian(self) -> "CouplingFlags":
        """Flags for the zero-field operator (drops a magnetic-only override)."""
        if self.gamma3_override is not None and self.gamma3_scope == "magnetic":
            return CouplingFlags(self.peierls_on, self.bloch_zeeman_on, self.strain_on)
        return self

    def for_magnetic(self) -> "CouplingFlags":
        return CouplingFlags(self.peierls_on, self.bloch_zeeman_on, self.strain_on, self.gamma3_override, "all")


ALL_OFF = CouplingFlags(peierls_on=False, bloch_zeeman_on=False, strain_on=False)


# --------------------------------------------------------------------------
# Peierls phases


def vector_potential(points, field: MagneticField, origin, gauge: str = "symmetric") -> np.ndarray:
    """A(r) in T nm. ``symmetric``: B x (r - r0) / 2. ``wire``: x-independent gauge."""
    r = np.asarray(points, dtype=float) - np.asarray(origin, dtype=float)
    B = field.vector
    if gauge == "symmetric":
        return 0.5 * np.cross(B, r)
    if gauge == "wire":
        A = np.zeros_like(r)
        A[..., 0] = B[1] * r[..., 2] - B[2] * r[..., 1]
        A[..., 2] = B[0] * r[..., 1]
        return A
    raise ValidationError(f"unknown gauge {gauge!r}")


def link_phase(r_from, r_to, field: MagneticField, origin, gauge: str = "symmetric") -> np.ndarray:
    """exp(i e/hbar int A.dl) along the straight link r_from -> r_to.

    A is linear in r, so the line integral is A(midpoint).(r_to - r_from).
    The sign corresponds to the minimal coupling k -> -i grad + (e/hbar) A
    of a valence electron (charge -e).
    """
    r_from = np.asarray(r_from, dtype=float)
    r_to = np.asarray(r_to, dtype=float)
    mid = 0.5 * (r_from + r_to)
    A = vector_potential(mid, field, origin, gauge)
    return np.exp(1j * E_OVER_HBAR * np.sum(A * (r_to - r_from), axis=-1))


def stencil_offsets() -> list[tuple[int, int, int]]:
    offs = []
    for a in range(3):
        for s in (1, -1):
            o = [0, 0, 0]
            o[a] = s
            offs.append(tuple(o))
    for a in range(3):
        for b in range(a + 1, 3):
            for sa in (1, -1):
                for sb in (1, -1):
                    o = [0, 0, 0]
                    o[a], o[b] = sa, sb
                    offs.append(tuple(o))
    return offs


def _channel_links(mesh: Mesh, offset):
    """Valid (source, target) k.p node pairs for a stencil offset."""
    shape = mesh.channel_shape()
    grids = np.meshgrid(*(np.arange(n) for n in shape), indexing="ij")
    valid = np.ones(shape, dtype=bool)
    tgt = []
    for ax in range(3):
        t = grids[ax] + offset[ax]
        if mesh.bc[ax] == "periodic":
            t = np.mod(t, shape[ax])
        else:
            valid &= (t >= 0) & (t < shape[ax])
        tgt.append(t)
    src = np.flatnonzero(valid)
    dst = np.ravel_multi_index(tuple(np.clip(t, 0, n - 1)[valid] for t, n in zip(tgt, shape)), shape)
    return src, dst


def default_gauge(mesh: Mesh) -> str:
    return "wire" if mesh.bc[0] == "periodic" else "symmetric"


def peierls_phases(mesh: Mesh, field: MagneticField, gauge_origin=None, gauge: str | None = None) -> dict:
    """Link phases for every stencil offset: {offset: (src, dst, phase)}."""
    gauge = gauge or default_gauge(mesh)
    if gauge_origin is None:
        gauge_origin = channel_center(mesh)
    pts = mesh.channel_points()
    h = np.asarray(mesh.spacing)
    out = {}
    for off in stencil_offsets():
        src, dst = _channel_links(mesh, off)
        r0 = pts[src]
        r1 = r0 + h * np.asarray(off)
        if field.magnitude == 0:
            ph = np.ones(len(src), dtype=complex)
        else:
            ph = link_phase(r0, r1, field, gauge_origin, gauge)
        out[off] = (src, dst, ph)
    return out


def channel_center(mesh: Mesh) -> np.ndarray:
    return np.array([0.5 * (c[lo] + c[hi]) for c, lo, hi in zip(mesh.coords, mesh.chan_lo, mesh.chan_hi)])


# --------------------------------------------------------------------------
# assembly


@dataclass(frozen=True, eq=False)
class KpOperator:
    """Sparse Hermitian operator on the channel nodes; index = 6 * node + band."""

    matrix: sp.csr_matrix
    mesh: Mesh
    field: MagneticField
    flags: CouplingFlags
    bias: dict = field(default_factory=dict)
    strain: np.ndarray | None = None
    gauge_origin: np.ndarray | None = None
    potential_max: float = 0.0  # max of -eV_t over channel nodes (meV)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def num_nodes(self) -> int:
        return self.dimension // NBANDS

    def matvec(self, v):
        return self.matrix @ v

    def norm_estimate(self) -> float:
        return float(abs(self.matrix).sum(axis=1).max())

    def hermiticity_error(self) -> float:
        d = self.matrix - self.matrix.getH()
        n = abs(self.matrix).max()
        return float(abs(d).max() / n) if n else 0.0

    def dump_coo(self, path) -> None:
        """Write ``row col re im`` lines (0-based) for external cross-checks."""
        m = self.matrix.tocoo()
        with open(path, "w") as fh:
            fh.write(f"# {m.shape[0]} {m.shape[1]} {m.nnz}\n")
            for r, c, v in zip(m.row, m.col, m.data):
                fh.write(f"{r} {c} {v.real:.17g} {v.imag:.17g}\n")


def _check_mesh(device: DeviceModel, mesh: Mesh):
    box = device.channel_box
    for ax, c in enumerate(mesh.coords):
        if abs(c[mesh.chan_lo[ax]] - box.lo[ax]) > 1e-6 or abs(c[mesh.chan_hi[ax]] - box.hi[ax]) > 1e-6:
            raise MeshMismatch("mesh channel planes do not match the device channel box")


def channel_potential(mesh: Mesh, potential) -> np.ndarray:
    """Potential (V) at the k.p nodes; ``potential`` is a PotentialField, array or None."""
    n = int(np.prod(mesh.channel_shape()))
    if potential is None:
        return np.zeros(n)
    values = getattr(potential, "values", potential)
    values = np.asarray(values, dtype=float)
    if values.size == n and values.shape != mesh.shape:
        return values.ravel()
    if values.shape != mesh.shape:
        raise MeshMismatch(f"potential shape {values.shape} does not match mesh {mesh.shape}")
    return values.ravel()[mesh.channel_flat_index()]


def assemble(
    device: DeviceModel,
    mesh: Mesh,
    potential=None,
    field: MagneticField | None = None,
    flags: CouplingFlags = CouplingFlags(),
    gauge_origin=None,
    gauge: str | None = None,
    material: MaterialParams | None = None,
) -> KpOperator:
    """Discretize the six-band Hamiltonian on the channel nodes.

    k -> -i grad with second-order central differences; mixed derivatives use
    the symmetric four-point cross stencil. Nodes on the channel surface are
    excluded (hard wall); x wraps around when the mesh is periodic along x.
    """
    _check_mesh(device, mesh)
    field = field or MagneticField(0.0)
    mat = material or device.channel_material
    g3 = flags.gamma3_override
    coef = kinetic_coefficients(mat, g3)
    h = np.asarray(mesh.spacing)
    shape = mesh.channel_shape()
    n = int(np.prod(shape))
    v_t = channel_potential(mesh, potential)
    if gauge_origin is None:
        gauge_origin = channel_center(mesh)
    gauge_origin = np.asarray(gauge_origin, dtype=float)

    use_peierls = flags.peierls_on and field.magnitude != 0
    phases = peierls_phases(mesh, field, gauge_origin, gauge) if use_peierls else None

    onsite = np.zeros((6, 6), dtype=complex)
    for a in range(3):
        onsite += coef[(a, a)] * (2.0 / h[a] ** 2)
    onsite += spin_orbit_block(mat)
    eps = device.strain_tensor
    if flags.strain_on and np.any(eps):
        onsite += strain_hamiltonian(eps, mat)
    if flags.bloch_zeeman_on and field.magnitude != 0:
        onsite += bloch_zeeman(field, mat)

    rows, cols, vals = [], [], []

    def add_blocks(src, dst, block, phase=None):
        nz = np.argwhere(np.abs(block) > 0)
        if not len(nz) or not len(src):
            return
        bi, bj = nz[:, 0], nz[:, 1]
        rows.append((NBANDS * src[:, None] + bi[None, :]).ravel())
        cols.append((NBANDS * dst[:, None] + bj[None, :]).ravel())
        v = np.broadcast_to(block[bi, bj][None, :], (len(src), len(bi)))
        if phase is not None:
            v = v * phase[:, None]
        vals.append(np.asarray(v, dtype=complex).ravel())

    idx = np.arange(n)
    add_blocks(idx, idx, onsite)
    # potential: -e V_t on every band
    pot = -ELEMENTARY_CHARGE_MEV * v_t
    for band in range(NBANDS):
        rows.append(NBANDS * idx + band)
        cols.append(NBANDS * idx + band)
        vals.append(pot.astype(complex))

    for off in stencil_offsets():
        nzax = [a for a in range(3) if off[a]]
        if len(nzax) == 1:
            a = nzax[0]
            block = -coef[(a, a)] / h[a] ** 2
        else:
            a, b = nzax
            block = -off[a] * off[b] / (4.0 * h[a] * h[b]) * coef[(a, b)]
        if phases is not None:
            src, dst, ph = phases[off]
        else:
            src, dst = _channel_links(mesh, off)
            ph = None
        add_blocks(src, dst, block, ph)

    r = np.concatenate(rows)
    c = np.concatenate(cols)
    v = np.concatenate(vals)
    H = sp.csr_matrix((v, (r, c)), shape=(NBANDS * n, NBANDS * n))
    H.sum_duplicates()
    H.eliminate_zeros()
    return KpOperator(
        matrix=H,
        mesh=mesh,
        field=field,
        flags=flags,
        strain=eps if flags.strain_on else None,
        gauge_origin=gauge_origin,
        potential_max=float(pot.max()) if n else 0.0,
    )


OperatorFactory = Callable[[np.ndarray], KpOperator]


def operator_factory(device, mesh, potential=None, flags=CouplingFlags(), gauge_origin=None, gauge=None):
    """Callable B-vector (T) -> KpOperator at fixed bias, used for M1 and finite-B runs."""

    def make(bvec) -> KpOperator:
        return assemble(device, mesh, potential, MagneticField.from_vector(bvec), flags, gauge_origin, gauge)

    return make


def band_weights(states: np.ndarray) -> np.ndarray:
    """(n_states, 6) weight of each band; ``states`` has shape (dim, n_states)."""
    s = np.asarray(states).reshape(-1, NBANDS, states.shape[-1])
    return np.einsum("nbk,nbk->kb", s.conj(), s).real


def hh_weight(states: np.ndarray) -> np.ndarray:
    w = band_weights(states)
    return w[:, list(HH_BANDS)].sum(axis=1) / w.sum(axis=1)


def time_reverse(states: np.ndarray) -> np.ndarray:
    """Apply T = U_T K0 node by node; ``states`` has shape (dim,) or (dim, k)."""
    s = np.asarray(states)
    flat = s.reshape(-1, NBANDS, *s.shape[1:])
    out = np.einsum("ab,nb...->na...", TIME_REVERSAL_U, flat.conj())
    return out.reshape(s.shape)


def mirror_matrix(axis: int) -> np.ndarray:
    """Band-space part of the mirror perpendicular to ``axis``: exp(-i pi F_axis)."""
    from scipy.linalg import expm

    return expm(-1j * np.pi * total_angular_momentum()[axis])
