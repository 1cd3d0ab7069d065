"""Finite-volume Poisson solver on the device mesh.

Unknowns sit on mesh nodes; permittivity is constant in each mesh cell.
The flux through the dual face of an edge sums the contributions of the (up
to four) cells sharing that edge, so dielectric interfaces lying on mesh
planes are treated exactly. Nodes inside or on a gate are Dirichlet nodes;
the remaining simulation-box faces carry zero normal flux.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import pyamg
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from .device import DeviceModel, Mesh
from .errors import MisalignedMirror, SolverDiverged, UnknownGate, ValidationError

RESIDUAL_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class PotentialField:
    values: np.ndarray  # (nx, ny, nz), volts
    gate_voltages: dict
    mesh: Mesh = field(repr=False)

    def to_csv(self, path) -> None:
        X, Y, Z = np.meshgrid(*self.mesh.coords, indexing="ij")
        data = np.column_stack([X.ravel(), Y.ravel(), Z.ravel(), self.values.ravel()])
        np.savetxt(path, data, delimiter=",", header="x,y,z,value", comments="", fmt="%.10g")


@dataclass(frozen=True, eq=False)
class UnitResponse:
    gate: str
    d1: np.ndarray  # (nx, ny, nz), V/V
    e1: np.ndarray  # (nx, ny, nz, 3), V/nm
    mesh: Mesh = field(repr=False)


def gate_node_masks(device: DeviceModel, mesh: Mesh, tol: float = 1e-9) -> dict:
    X, Y, Z = np.meshgrid(*mesh.coords, indexing="ij")
    out = {}
    for g in device.gates:
        lo, hi = g.box.lo, g.box.hi
        out[g.name] = (
            (X >= lo[0] - tol) & (X <= hi[0] + tol) & (Y >= lo[1] - tol) & (Y <= hi[1] + tol)
            & (Z >= lo[2] - tol) & (Z <= hi[2] + tol)
        )
    return out


def stiffness_matrix(mesh: Mesh) -> sp.csr_matrix:
    """Symmetric positive semidefinite FV matrix of -div(eps grad) (units eps0 * nm)."""
    nx, ny, nz = mesh.shape
    d = [np.diff(c) for c in mesh.coords]
    eps = mesh.permittivity
    idx = np.arange(nx * ny * nz).reshape(nx, ny, nz)
    rows, cols, vals = [], [], []
    for ax in range(3):
        o1, o2 = [a for a in range(3) if a != ax]
        # per-cell contribution: eps * (quarter of the transverse cell face) / edge length
        w = eps.copy()
        for o in (o1, o2):
            s = [1, 1, 1]
            s[o] = -1
            w = w * (0.5 * d[o]).reshape(s)
        s = [1, 1, 1]
        s[ax] = -1
        w = w / d[ax].reshape(s)
        pad = [(0, 0)] * 3
        pad[o1] = (1, 1)
        pad[o2] = (1, 1)
        wp = np.pad(w, pad)
        # sum the four cells around each edge
        edge = np.zeros([mesh.shape[a] - 1 if a == ax else mesh.shape[a] for a in range(3)])
        for a1 in (0, 1):
            for a2 in (0, 1):
                s = [slice(None)] * 3
                s[o1] = slice(a1, a1 + mesh.shape[o1])
                s[o2] = slice(a2, a2 + mesh.shape[o2])
                edge += wp[tuple(s)]
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[ax] = slice(0, mesh.shape[ax] - 1)
        hi[ax] = slice(1, mesh.shape[ax])
        p = idx[tuple(lo)].ravel()
        q = idx[tuple(hi)].ravel()
        e = edge.ravel()
        rows += [p, q, p, q]
        cols += [p, q, q, p]
        vals += [e, e, -e, -e]
    n = nx * ny * nz
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    A.sum_duplicates()
    return A


class PoissonSolver:
    """Assembles once per (device, mesh); solves for any gate voltages."""

    def __init__(self, device: DeviceModel, mesh: Mesh, tol: float = 1e-13):
        self.device = device
        self.mesh = mesh
        self.tol = tol
        self.masks = gate_node_masks(device, mesh)
        dirichlet = np.zeros(mesh.shape, dtype=bool)
        for name, m in self.masks.items():
            if np.any(dirichlet & m):
                raise ValidationError(f"gate {name} touches another gate")
            dirichlet |= m
        self.dirichlet = dirichlet.ravel()
        self.free = np.flatnonzero(~self.dirichlet)
        self.fixed = np.flatnonzero(self.dirichlet)
        A = stiffness_matrix(mesh)
        self.A = A
        self.A_ff = A[self.free][:, self.free].tocsr()
        self.A_fd = A[self.free][:, self.fixed].tocsr()
        self._amg = None

    def _preconditioner(self):
        if self._amg is None:
            self._amg = pyamg.smoothed_aggregation_solver(self.A_ff, symmetry="symmetric")
        return self._amg.aspreconditioner(cycle="V")

    def boundary_values(self, gate_voltages: Mapping[str, float]) -> np.ndarray:
        vd = np.zeros(self.mesh.num_nodes)
        for name, v in gate_voltages.items():
            if name not in self.masks:
                raise UnknownGate(f"unknown gate {name!r}")
            vd[self.masks[name].ravel()] = float(v)
        return vd[self.fixed]

    def solve(self, gate_voltages: Mapping[str, float]) -> PotentialField:
        for name in gate_voltages:
            if name not in self.masks:
                raise UnknownGate(f"unknown gate {name!r}")
        vd = self.boundary_values(gate_voltages)
        values = np.zeros(self.mesh.num_nodes)
        values[self.fixed] = vd
        if len(self.free):
            b = -(self.A_fd @ vd)
            bnorm = np.linalg.norm(b)
            if len(self.fixed) == 0 or bnorm == 0:
                x = np.zeros(len(self.free))
            else:
                x, info = sla.cg(self.A_ff, b, rtol=self.tol, atol=0.0, maxiter=2000, M=self._preconditioner())
                res = np.linalg.norm(self.A_ff @ x - b) / bnorm
                if info != 0 or not np.isfinite(res) or res > RESIDUAL_TOL:
                    raise SolverDiverged(f"Poisson CG failed (info={info}, residual={res:.2e})")
            values[self.free] = x
        return PotentialField(values.reshape(self.mesh.shape), dict(gate_voltages), self.mesh)

    def unit_response(self, gate: str) -> UnitResponse:
        if gate not in self.masks:
            raise UnknownGate(f"unknown gate {gate!r}")
        volts = {g: 0.0 for g in self.masks}
        volts[gate] = 1.0
        d1 = self.solve(volts).values
        return UnitResponse(gate, d1, electric_field(d1, self.mesh), self.mesh)


def electric_field(potential: np.ndarray, mesh: Mesh) -> np.ndarray:
    """-grad V at the nodes (second-order, non-uniform aware)."""
    grads = np.gradient(potential, *mesh.coords, edge_order=2)
    return -np.stack(grads, axis=-1)


def solve_poisson(device: DeviceModel, mesh: Mesh, gate_voltages: Mapping[str, float]) -> PotentialField:
    return PoissonSolver(device, mesh).solve(gate_voltages)


def unit_response(device: DeviceModel, mesh: Mesh, gate: str) -> UnitResponse:
    return PoissonSolver(device, mesh).unit_response(gate)


def superpose(responses: Mapping[str, UnitResponse], gate_voltages: Mapping[str, float]) -> np.ndarray:
    """Total potential as sum_g V_g d1_g (valid for linear electrostatics)."""
    out = None
    for name, v in gate_voltages.items():
        if name not in responses:
            raise UnknownGate(f"unknown gate {name!r}")
        term = float(v) * responses[name].d1
        out = term if out is None else out + term
    return out


# --------------------------------------------------------------------------
# field parity


def _mirror_index(coords: np.ndarray, position: float, sel: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    refl = 2 * position - coords[sel]
    j = np.searchsorted(coords, refl)
    j = np.clip(j, 0, len(coords) - 1)
    jm = np.clip(j - 1, 0, len(coords) - 1)
    best = np.where(np.abs(coords[jm] - refl) < np.abs(coords[j] - refl), jm, j)
    if np.any(np.abs(coords[best] - refl) > tol):
        raise MisalignedMirror("mirror image of a mesh plane is not a mesh plane")
    return best


def _parity_residuals(field_arr, mesh: Mesh, mirror, region) -> tuple[float, float]:
    ax = mirror.axis
    sel = []
    for a, c in enumerate(mesh.coords):
        if region is None:
            sel.append(np.arange(len(c)))
        else:
            sel.append(np.flatnonzero((c >= region.lo[a] - 1e-9) & (c <= region.hi[a] + 1e-9)))
    img = _mirror_index(mesh.coords[ax], mirror.position, sel[ax])
    sub = field_arr[np.ix_(*sel)]
    idx = list(sel)
    idx[ax] = img
    mirrored = field_arr[np.ix_(*idx)]  # E1(sigma r)
    flip = np.ones(3)
    flip[ax] = -1.0
    sigma_e = sub * flip  # sigma(E1(r)) for a polar vector
    norm = np.linalg.norm(sub)
    if norm == 0:
        return 0.0, 0.0
    return float(np.linalg.norm(mirrored - sigma_e) / norm), float(np.linalg.norm(mirrored + sigma_e) / norm)


def parity_ratios(e1, mirror, region=None, mesh: Mesh | None = None) -> tuple[float, float]:
    """(even residual, odd residual) norm ratios of E1 under ``mirror``."""
    if isinstance(e1, UnitResponse):
        return _parity_residuals(e1.e1, e1.mesh, mirror, region)
    if mesh is None:
        raise ValueError("mesh required for a raw field array")
    return _parity_residuals(np.asarray(e1), mesh, mirror, region)


def field_parity(e1, mirror, region=None, tol: float = 1e-6, mesh: Mesh | None = None) -> str:
    """Classify E1 as ``even``, ``odd`` or ``none`` under a mirror plane.

    ``e1`` is a UnitResponse (or an (nx, ny, nz, 3) array together with
    ``mesh``); ``mirror`` has ``axis`` and ``position``; ``region`` is an
    optional Box restricting the comparison. The mirror must map the selected
    mesh planes onto mesh planes.
    """
    even, odd = parity_ratios(e1, mirror, region, mesh)
    if even < tol:
        return "even"
    if odd < tol:
        return "odd"
    return "none"
