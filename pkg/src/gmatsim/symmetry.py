"""Mirror-plane constraints on g and g', and their numerical verification.

Tables are stored as literal masks (True = allowed entry) and can be
re-derived from the doublet representation of each mirror: a symmetry R
imposes g = s O^T g Gamma_B(R), with O the rotation induced on the Pauli
vector by Gamma_S(R) and s = +1 for g and for g' with an even field, s = -1
for g' with an odd field.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .device import Mesh
from .electrostatics import _mirror_index, field_parity
from .gmatrix import compute_g, su2_to_so3
from .kp import NBANDS, mirror_matrix

AXIS_NAMES = "xyz"
PLANE_NAMES = {0: "yz", 1: "xz", 2: "xy"}
PLANE_AXES = {v: k for k, v in PLANE_NAMES.items()}


@dataclass(frozen=True)
class MirrorPlane:
    """Mirror perpendicular to device axis ``axis`` through ``position`` (nm)."""

    axis: int
    position: float = 0.0

    def __post_init__(self):
        if self.axis not in (0, 1, 2):
            raise ValueError("mirror normal must be a device axis (0, 1 or 2)")

    @classmethod
    def named(cls, name: str, position: float = 0.0) -> "MirrorPlane":
        name = name.lower().removeprefix("sigma_").removeprefix("sigma")
        if name not in PLANE_AXES:
            raise ValueError(f"unknown mirror {name!r}; expected yz, xz or xy")
        return cls(PLANE_AXES[name], position)

    @property
    def name(self) -> str:
        return PLANE_NAMES[self.axis]


SIGMA_YZ = MirrorPlane(0)
SIGMA_XZ = MirrorPlane(1)
SIGMA_XY = MirrorPlane(2)

_ALL = np.ones((3, 3), dtype=bool)

# allowed (nonzero) entries of g for each mirror
G_TABLE = {
    "yz": np.array([[1, 0, 0], [0, 1, 1], [0, 1, 1]], dtype=bool),
    "xz": np.array([[1, 0, 1], [0, 1, 0], [1, 0, 1]], dtype=bool),
    "xy": np.array([[1, 1, 0], [1, 1, 0], [0, 0, 1]], dtype=bool),
}

# allowed entries of g' per mirror and field parity
G_PRIME_TABLE = {
    "yz": {
        "even": G_TABLE["yz"],
        "odd": np.array([[0, 1, 1], [1, 0, 0], [1, 0, 0]], dtype=bool),
        "none": _ALL,
    },
    "xz": {
        "even": G_TABLE["xz"],
        "odd": np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=bool),
        "none": _ALL,
    },
    "xy": {
        "even": G_TABLE["xy"],
        "odd": np.array([[0, 0, 1], [0, 0, 1], [1, 1, 0]], dtype=bool),
        "none": _ALL,
    },
}

# magnetic-field (pseudo-vector) representation of each mirror
GAMMA_B = {
    "yz": np.diag([1.0, -1.0, -1.0]),
    "xz": np.diag([-1.0, 1.0, -1.0]),
    "xy": np.diag([-1.0, -1.0, 1.0]),
}

# doublet representation in the symmetry-adapted basis
GAMMA_S = {
    "yz": np.array([[0, -1j], [-1j, 0]]),
    "xz": np.array([[0, -1], [1, 0]], dtype=complex),
    "xy": np.array([[-1j, 0], [0, 1j]]),
}


@dataclass(frozen=True, eq=False)
class ZeroPattern:
    """``zeros[i, j]`` is True where the entry is constrained to vanish."""

    zeros: np.ndarray
    provenance: tuple = ()

    @property
    def allowed(self) -> np.ndarray:
        return ~self.zeros

    def __and__(self, other: "ZeroPattern") -> "ZeroPattern":
        return ZeroPattern(self.zeros | other.zeros, self.provenance + other.provenance)

    def __eq__(self, other) -> bool:
        return isinstance(other, ZeroPattern) and bool(np.array_equal(self.zeros, other.zeros))

    def __hash__(self):
        return hash(self.zeros.tobytes())

    def to_dict(self) -> dict:
        return {"zeros": self.zeros.astype(int).tolist(), "provenance": list(self.provenance)}

    def __str__(self) -> str:
        return "\n".join(" ".join("0" if z else "*" for z in row) for row in self.zeros)


NO_CONSTRAINT = ZeroPattern(np.zeros((3, 3), dtype=bool))


def _plane(m) -> str:
    if isinstance(m, MirrorPlane):
        return m.name
    return MirrorPlane.named(str(m)).name


def g_pattern(mirrors: Iterable) -> ZeroPattern:
    out = NO_CONSTRAINT
    for m in mirrors:
        p = _plane(m)
        out = out & ZeroPattern(~G_TABLE[p], (f"g:{p}",))
    return out


def g_prime_pattern(mirrors: Iterable, parities: Mapping) -> ZeroPattern:
    """Intersect the g' masks of each mirror, selected by the parity of E1 under it."""
    out = NO_CONSTRAINT
    par = {_plane(k): v for k, v in parities.items()}
    for m in mirrors:
        p = _plane(m)
        if p not in par:
            raise ValueError(f"no field parity given for mirror {p}")
        if par[p] not in ("even", "odd", "none"):
            raise ValueError(f"parity must be even, odd or none, got {par[p]!r}")
        out = out & ZeroPattern(~G_PRIME_TABLE[p][par[p]], (f"g':{p}:{par[p]}",))
    return out


# --------------------------------------------------------------------------
# re-derivation from the representations


def pauli_rotation(gamma_s: np.ndarray) -> np.ndarray:
    """O with Gamma^dagger sigma_i Gamma = sum_j O_ij sigma_j."""
    return su2_to_so3(np.asarray(gamma_s))


def constraint_map(plane: str, sign: float = 1.0) -> np.ndarray:
    """9x9 matrix of g -> s O^T g Gamma_B acting on row-major vec(g)."""
    O = pauli_rotation(GAMMA_S[plane])
    GB = GAMMA_B[plane]
    L = np.zeros((9, 9))
    for k in range(9):
        e = np.zeros(9)
        e[k] = 1.0
        L[:, k] = (sign * O.T @ e.reshape(3, 3) @ GB).ravel()
    return L


def derived_pattern(plane: str, parity: str = "even") -> ZeroPattern:
    """Zero pattern from the fixed-point space of the representation constraint."""
    plane = _plane(plane)
    if parity == "none":
        return ZeroPattern(np.zeros((3, 3), dtype=bool), (f"derived:{plane}:none",))
    sign = 1.0 if parity == "even" else -1.0
    L = constraint_map(plane, sign)
    w, v = np.linalg.eig(L)
    fixed = v[:, np.abs(w - 1) < 1e-9]
    zeros = np.all(np.abs(fixed) < 1e-12, axis=1).reshape(3, 3) if fixed.size else np.ones((3, 3), dtype=bool)
    return ZeroPattern(zeros, (f"derived:{plane}:{parity}",))


def constraint_residual(g: np.ndarray, plane: str, b: np.ndarray, sign: float = 1.0) -> float:
    """|sigma.(g B) - [Gamma^dagger sigma Gamma].(s g Gamma_B B)| for one field B (2x2 norm)."""
    from .gmatrix import _pauli

    s = _pauli()
    G = GAMMA_S[plane]
    lhs = np.einsum("i,iab->ab", g @ b, s)
    rot = np.array([G.conj().T @ s[i] @ G for i in range(3)])
    rhs = np.einsum("i,iab->ab", sign * g @ GAMMA_B[plane] @ b, rot)
    return float(np.linalg.norm(lhs - rhs))


# --------------------------------------------------------------------------
# verification and extinctions


@dataclass(frozen=True)
class PatternReport:
    passed: bool
    worst_entry: tuple | None
    worst_ratio: float
    violations: list = field(default_factory=list)
    pattern: ZeroPattern | None = None

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "worst_entry": None if self.worst_entry is None else list(self.worst_entry),
            "worst_ratio": self.worst_ratio,
            "violations": [list(v) for v in self.violations],
            "pattern": None if self.pattern is None else self.pattern.to_dict(),
        }


def verify_pattern(matrix, pattern: ZeroPattern, tol_rel: float = 1e-6) -> PatternReport:
    """Check that the constrained entries of ``matrix`` are below tol_rel * max|entry|."""
    if not 0 < tol_rel < 1:
        raise ValueError("tol_rel must lie in (0, 1)")
    m = np.abs(np.asarray(matrix, dtype=float))
    scale = m.max()
    if scale == 0 or not pattern.zeros.any():
        return PatternReport(True, None, 0.0, [], pattern)
    ratios = np.where(pattern.zeros, m / scale, 0.0)
    k = np.unravel_index(int(np.argmax(ratios)), ratios.shape)
    worst = float(ratios[k])
    viol = [(int(i), int(j), float(ratios[i, j])) for i, j in zip(*np.nonzero(ratios > tol_rel))]
    return PatternReport(worst <= tol_rel, (int(k[0]), int(k[1])), worst, viol, pattern)


def predict_extinctions(gpat: ZeroPattern, gppat: ZeroPattern) -> list[str]:
    """Device axes b for which (g b) x (g' b) vanishes for every matrix obeying the masks.

    Returns ["all"] when the g' mask has no allowed entry.
    """
    if not gppat.allowed.any():
        return ["all"]
    out = []
    for a in range(3):
        rows_g = set(np.flatnonzero(gpat.allowed[:, a]))
        rows_p = set(np.flatnonzero(gppat.allowed[:, a]))
        if not rows_g or not rows_p or (len(rows_g) == 1 and rows_g == rows_p):
            out.append(AXIS_NAMES[a])
    return out


# --------------------------------------------------------------------------
# mirrors acting on k.p states


def channel_mirror_permutation(mesh: Mesh, mirror: MirrorPlane) -> np.ndarray:
    """perm[i] = k.p node index of the mirror image of node i."""
    ranges = mesh.channel_node_ranges()
    ax = mirror.axis
    coords = mesh.coords[ax]
    img = _mirror_index(coords, mirror.position, ranges[ax])
    pos = {int(g): k for k, g in enumerate(ranges[ax])}
    try:
        local = np.array([pos[int(g)] for g in img])
    except KeyError:
        from .errors import MisalignedMirror

        raise MisalignedMirror("mirror does not map the channel nodes onto themselves") from None
    shape = mesh.channel_shape()
    idx = [np.arange(n) for n in shape]
    idx[ax] = local
    I, J, K = np.meshgrid(*idx, indexing="ij")
    return np.ravel_multi_index((I.ravel(), J.ravel(), K.ravel()), shape)


def apply_mirror(states: np.ndarray, mesh: Mesh, mirror: MirrorPlane) -> np.ndarray:
    """(M psi)(r) = exp(-i pi F_n) psi(sigma r) for states of shape (dim,) or (dim, k)."""
    s = np.asarray(states)
    flat = s.reshape(-1, NBANDS, *s.shape[1:])
    perm = channel_mirror_permutation(mesh, mirror)
    out = np.einsum("ab,nb...->na...", mirror_matrix(mirror.axis), flat[perm])
    return out.reshape(s.shape)


def mirror_representation(doublet, mesh: Mesh, mirror: MirrorPlane) -> np.ndarray:
    """2x2 matrix <phi_i| M |phi_j> of a mirror on the doublet (unitary if symmetric)."""
    S = doublet.states
    return S.conj().T @ apply_mirror(S, mesh, mirror)


def operator_mirror_error(op, mirror: MirrorPlane) -> float:
    """Relative ||M H M^-1 - H|| on random probes; 0 for an exact symmetry."""
    rng = np.random.default_rng(1)
    v = rng.standard_normal((op.dimension, 3)) + 1j * rng.standard_normal((op.dimension, 3))
    mv = apply_mirror(v, op.mesh, mirror)
    lhs = op.matrix @ mv
    rhs = apply_mirror(op.matrix @ v, op.mesh, mirror)
    return float(np.linalg.norm(lhs - rhs) / np.linalg.norm(op.matrix @ v))


def _eig_unitary(G: np.ndarray):
    w, v = np.linalg.eig(G)
    order = np.argsort(np.angle(w))
    w, v = w[order], v[:, order]
    q, _ = np.linalg.qr(v)
    return w, q


def symmetry_adapted_rotation(doublet, mesh: Mesh, mirrors: Sequence[MirrorPlane], n_phase: int = 721) -> np.ndarray:
    """Unitary u such that the doublet states @ u carry the tabulated representations.

    The first mirror fixes u up to a relative phase between its eigenvectors
    (and the overall sign of the representation); the phase is then scanned to
    match the second mirror, up to sign, and refined in closed form.
    """
    mirrors = list(mirrors)
    if not mirrors:
        return np.eye(2, dtype=complex)
    m0 = mirrors[0]
    G0 = mirror_representation(doublet, mesh, m0)
    best = None
    for sgn0 in (1, -1):
        T0 = sgn0 * GAMMA_S[m0.name]
        w_g, v_g = _eig_unitary(G0)
        w_t, v_t = _eig_unitary(T0)
        if not np.allclose(w_g, w_t, atol=1e-6):
            continue
        for phase in np.linspace(0, 2 * np.pi, n_phase) if len(mirrors) > 1 else [0.0]:
            u = v_g @ np.diag([1.0, np.exp(1j * phase)]) @ v_t.conj().T
            err = 0.0
            for m in mirrors[1:]:
                Gm = mirror_representation(doublet, mesh, m)
                cur = u.conj().T @ Gm @ u
                err += min(np.linalg.norm(cur - s * GAMMA_S[m.name]) for s in (1, -1))
            if best is None or err < best[0]:
                best = (err, u)
    if best is None:
        from .errors import GmatsimError

        raise GmatsimError(f"doublet is not symmetric under {m0.name}")
    return best[1]


def adapt_matrices(u: np.ndarray, *mats: np.ndarray) -> list[np.ndarray]:
    """Transform g-like matrices to the doublet basis states @ u."""
    R = su2_to_so3(u)
    return [R.T @ np.asarray(m) for m in mats]


def adapted_g(doublet, moment, mesh: Mesh, mirrors: Sequence[MirrorPlane]) -> np.ndarray:
    u = symmetry_adapted_rotation(doublet, mesh, mirrors)
    return compute_g(doublet.rotated(u), moment)


def channel_mirrors(device) -> list[MirrorPlane]:
    """The three candidate mirrors through the channel center."""
    c = device.channel_box.center
    return [MirrorPlane(a, float(c[a])) for a in range(3)]


def field_parities(response, mirrors: Sequence[MirrorPlane], region=None, tol: float = 1e-6) -> dict:
    """Parity of E1 under each mirror, compared over ``region`` (a Box or None)."""
    return {m.name: field_parity(response, m, region, tol) for m in mirrors}


def report_json(pattern_g: PatternReport, pattern_gp: PatternReport, extinctions: list) -> str:
    return json.dumps(
        {"g": pattern_g.to_dict(), "g_prime": pattern_gp.to_dict(), "extinctions": extinctions},
        indent=2, sort_keys=True,
    )
