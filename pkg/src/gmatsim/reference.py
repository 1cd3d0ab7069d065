"""Closed-form g-factors and dense-diagonalization oracles."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .constants import ELEMENTARY_CHARGE_MEV, H_PLANCK
from .device import SILICON, MaterialParams
from .errors import DegenerateDenominator, DimensionTooLarge
from .gmatrix import channel_field, dipole_element
from .spectrum import EigenSet

DENSE_CAP = 12000


@dataclass(frozen=True)
class OracleResult:
    quantity: str
    value: object
    method: str  # "closed-form" or "dense-diagonalization"
    inputs_hash: str


def _hash(*items) -> str:
    h = hashlib.sha256()
    for it in items:
        h.update(np.ascontiguousarray(np.asarray(it, dtype=float)).tobytes() if not isinstance(it, str) else it.encode())
    return h.hexdigest()[:16]


def _kappa(material) -> float:
    return float(material.kappa if isinstance(material, MaterialParams) else material)


def pure_hh_g(material=SILICON) -> np.ndarray:
    """Principal g-factors of a pure heavy-hole doublet with Zeeman coupling only."""
    k = _kappa(material)
    return np.array([0.0, 0.0, -6.0 * k]) + 0.0


def pure_lh_g(material=SILICON) -> np.ndarray:
    """Principal g-factors of a pure light-hole doublet with Zeeman coupling only."""
    k = _kappa(material)
    return np.array([-4.0 * k, -4.0 * k, -2.0 * k]) + 0.0


def delta_gz(gamma1: float, gamma2: float, gamma3: float) -> float:
    """Orbital correction to the out-of-plane heavy-hole g-factor of a thin film."""
    den = 3.0 * gamma1 + 10.0 * gamma2
    if den <= 0:
        raise DegenerateDenominator("3 gamma1 + 10 gamma2 must be positive")
    return float(2.0**17 * gamma3**2 / (81.0 * np.pi**4 * den))


def delta_gz_oracle(material: MaterialParams = SILICON) -> OracleResult:
    v = delta_gz(material.gamma1, material.gamma2, material.gamma3)
    return OracleResult("delta_gz", v, "closed-form", _hash(material.gamma1, material.gamma2, material.gamma3))


def dense_solve(op) -> EigenSet:
    """Full Hermitian eigendecomposition, energies descending."""
    H = op.matrix if hasattr(op, "matrix") else op
    n = H.shape[0]
    if n > DENSE_CAP:
        raise DimensionTooLarge(f"dimension {n} exceeds the dense cap {DENSE_CAP}")
    A = H.toarray() if hasattr(H, "toarray") else np.asarray(H)
    w, v = sla.eigh(A)
    order = np.argsort(-w)
    w, v = w[order], v[:, order]
    res = np.linalg.norm(A @ v - v * w, axis=0)
    return EigenSet(w, v, res, {"method": "dense", "dimension": n})


def dense_top(op, count: int) -> EigenSet:
    H = op.matrix
    n = H.shape[0]
    if n > DENSE_CAP:
        raise DimensionTooLarge(f"dimension {n} exceeds the dense cap {DENSE_CAP}")
    A = H.toarray()
    w, v = sla.eigh(A, subset_by_index=[n - count, n - 1])
    order = np.argsort(-w)
    w, v = w[order], v[:, order]
    return EigenSet(w, v, np.linalg.norm(A @ v - v * w, axis=0), {"method": "dense", "dimension": n})


def brute_force_rabi(op_factory, bias, b, B: float, v_ac: float, d1, mesh=None) -> OracleResult:
    """Rabi frequency from finite-field qubit eigenstates, all orders in B.

    ``op_factory(bias, field_vector)`` returns a KpOperator; ``d1`` is a
    UnitResponse or D1 values on the k.p nodes. The value is a dict with the
    Rabi frequency (Hz) and the qubit splitting (meV).
    """
    b = np.asarray(b, dtype=float)
    op = op_factory(bias, B * b)
    es = dense_top(op, 2)
    nodes = channel_field(d1, mesh or op.mesh)
    f = ELEMENTARY_CHARGE_MEV * v_ac / H_PLANCK * abs(dipole_element(es.states[:, 1], es.states[:, 0], nodes))
    value = {"f_rabi": float(f), "splitting": float(es.energies[0] - es.energies[1])}
    return OracleResult("rabi_frequency", value, "dense-diagonalization", _hash(b, [B, v_ac], str(sorted(dict(bias).items()))))
