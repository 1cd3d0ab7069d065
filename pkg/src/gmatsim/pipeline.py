"""Bias-point pipeline: unit responses, spectra, doublets and g-matrices for one device."""
from __future__ import annotations

import threading
from typing import Mapping

import numpy as np

from .cache import cache_key
from .device import DeviceModel, Mesh
from .electrostatics import PoissonSolver, UnitResponse, superpose
from .errors import UnknownGate
from .gmatrix import (
    DEFAULT_DELTA_B,
    DEFAULT_DELTA_V,
    GMatrixSet,
    MagneticMoment,
    align_doublet,
    channel_field,
    compute_g,
    make_gmatrix_set,
    state_hash,
)
from .kp import CouplingFlags, KpOperator, MagneticField, assemble, operator_factory
from .spectrum import DEFAULT_PAIR_TOL, EigenSet, KramersDoublet, dense_states, lowest_hole_states, pair_kramers

DENSE_LIMIT = 3000


def bias_key(bias: Mapping[str, float]) -> tuple:
    return tuple(sorted((k, round(float(v), 12)) for k, v in bias.items()))


class DevicePipeline:
    """Caches everything that depends only on the device, mesh and flags.

    ``solver`` is "sparse", "dense" or "auto" (dense below DENSE_LIMIT unknowns).
    """

    def __init__(
        self,
        device: DeviceModel,
        mesh: Mesh,
        flags: CouplingFlags = CouplingFlags(),
        solver: str = "auto",
        delta_b: float = DEFAULT_DELTA_B,
        pair_tol: float = DEFAULT_PAIR_TOL,
        gauge_origin=None,
        seed: int = 0,
        cache=None,
    ):
        self.device = device
        self.mesh = mesh
        self.flags = flags
        self.solver = solver
        self.delta_b = delta_b
        self.pair_tol = pair_tol
        self.gauge_origin = gauge_origin
        self.seed = seed
        self.cache = cache
        self.solves = 0
        self._poisson = None
        self._responses: dict[str, UnitResponse] = {}
        self._eigs: dict = {}
        self._moment = None
        self._lock = threading.RLock()

    # electrostatics ---------------------------------------------------------

    @property
    def poisson(self) -> PoissonSolver:
        with self._lock:
            if self._poisson is None:
                self._poisson = PoissonSolver(self.device, self.mesh)
            return self._poisson

    def response(self, gate: str) -> UnitResponse:
        if gate not in self.device.gate_names:
            raise UnknownGate(f"unknown gate {gate!r}")
        with self._lock:
            if gate not in self._responses:
                self._responses[gate] = self.poisson.unit_response(gate)
            return self._responses[gate]

    def potential(self, bias: Mapping[str, float]) -> np.ndarray | None:
        if not bias:
            return None
        return superpose({g: self.response(g) for g in bias}, bias)

    def d1_nodes(self, gate: str) -> np.ndarray:
        return channel_field(self.response(gate), self.mesh)

    # k.p --------------------------------------------------------------------

    def operator(self, bias: Mapping[str, float], field=None) -> KpOperator:
        if field is not None and not isinstance(field, MagneticField):
            field = MagneticField.from_vector(field)
        return assemble(
            self.device, self.mesh, self.potential(bias), field, self.flags.for_hamiltonian(),
            gauge_origin=self.gauge_origin,
        )

    def factory(self, bias: Mapping[str, float], magnetic: bool = False):
        flags = self.flags.for_magnetic() if magnetic else self.flags.for_hamiltonian()
        return operator_factory(self.device, self.mesh, self.potential(bias), flags, self.gauge_origin)

    @property
    def moment(self) -> MagneticMoment:
        """M1 operators; the bias cancels in the central difference."""
        with self._lock:
            if self._moment is None:
                self._moment = MagneticMoment(self.factory({}, magnetic=True), self.delta_b)
            return self._moment

    def _use_dense(self, dim: int) -> bool:
        return self.solver == "dense" or (self.solver == "auto" and dim <= DENSE_LIMIT)

    def eigenstates(self, bias: Mapping[str, float], count: int = 2) -> EigenSet:
        key = (bias_key(bias), count)
        with self._lock:
            if key in self._eigs:
                return self._eigs[key]
        ckey = None
        if self.cache is not None:
            ckey = cache_key(self.device.hash(), self.mesh.hash(), bias, self.flags.key(), count, repr(self.gauge_origin))
            es = self.cache.get(ckey)
            if es is not None:
                with self._lock:
                    self._eigs[key] = es
                return es
        op = self.operator(bias)
        es = dense_states(op, count) if self._use_dense(op.dimension) else lowest_hole_states(op, count, seed=self.seed)
        with self._lock:
            self.solves += 1
        if ckey is not None:
            self.cache.put(ckey, es)
        with self._lock:
            self._eigs[key] = es
        return es

    def doublets(self, bias: Mapping[str, float], n_pairs: int = 1) -> list[KramersDoublet]:
        es = self.eigenstates(bias, 2 * n_pairs)
        prov = {"bias": dict(bias), "flags": list(self.flags.key())}
        return pair_kramers(es, self.pair_tol, prov)

    def ground_doublet(self, bias: Mapping[str, float]) -> KramersDoublet:
        return self.doublets(bias, 1)[0]

    # g-matrices -------------------------------------------------------------

    def g(self, bias: Mapping[str, float], doublet: KramersDoublet | None = None) -> np.ndarray:
        return compute_g(doublet or self.ground_doublet(bias), self.moment)

    def g_prime(self, gate: str, bias: Mapping[str, float], delta_v: float = DEFAULT_DELTA_V, align: bool = True):
        """(g', g(V0+dV), g(V0-dV), alphas) with doublets aligned to the one at V0."""
        if gate not in self.device.gate_names:
            raise UnknownGate(f"unknown gate {gate!r}")
        ref = self.ground_doublet(bias)
        out = []
        alphas = []
        for sgn in (1, -1):
            b = dict(bias)
            b[gate] = b.get(gate, 0.0) + sgn * delta_v
            d = self.ground_doublet(b)
            if align:
                d = align_doublet(ref, d)
                alphas.append(d.provenance["alpha"])
            out.append(compute_g(d, self.moment))
        gp = (out[0] - out[1]) / (2 * delta_v)
        return gp, out[0], out[1], alphas

    def gmatrix_set(self, gate: str, bias: Mapping[str, float], delta_v: float = DEFAULT_DELTA_V) -> GMatrixSet:
        ref = self.ground_doublet(bias)
        g0 = compute_g(ref, self.moment)
        _, gpl, gmi, alphas = self.g_prime(gate, bias, delta_v)
        basis = {
            "doublet_hash": state_hash(ref.up, ref.down),
            "energy_meV": ref.energy,
            "alphas": alphas,
            "flags": list(self.flags.key()),
            "device_hash": self.device.hash(),
            "mesh_hash": self.mesh.hash(),
        }
        return make_gmatrix_set(g0, gpl, gmi, delta_v, self.delta_b, gate, dict(bias), basis)
