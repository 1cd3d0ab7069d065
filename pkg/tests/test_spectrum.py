import numpy as np
import pytest

from gmatsim.device import build_mesh
from gmatsim.electrostatics import PoissonSolver
from gmatsim.errors import UnpairedState
from gmatsim.kp import MagneticField, assemble, time_reverse
from gmatsim.presets import film_box
from gmatsim.reference import dense_solve
from gmatsim.spectrum import EigenSet, KramersDoublet, dense_states, lowest_hole_states, pair_kramers


@pytest.fixture(scope="module")
def box_op():
    dev = film_box(8.0, 8.0, 2.0)
    mesh = build_mesh(dev, (1.0, 1.0, 0.5))
    rng = np.random.default_rng(5)
    pot = 0.005 * rng.normal(size=mesh.shape)  # breaks all spatial symmetry, keeps T
    return assemble(dev, mesh, pot)


@pytest.fixture(scope="module")
def sparse10(box_op):
    return lowest_hole_states(box_op, 10)


def test_sparse_matches_dense(box_op, sparse10):
    dense = dense_solve(box_op)
    assert np.abs(sparse10.energies - dense.energies[:10]).max() < 1e-8


def test_orthonormal_and_residuals(box_op, sparse10):
    S = sparse10.states
    assert np.abs(S.conj().T @ S - np.eye(10)).max() < 1e-10
    assert sparse10.residuals.max() < 1e-8 * box_op.norm_estimate()


def test_zero_field_pairs(sparse10):
    e = sparse10.energies
    assert np.abs(e[0::2] - e[1::2]).max() < 1e-10


def test_pairing(sparse10):
    ds = pair_kramers(sparse10)
    assert len(ds) == 5
    for d in ds:
        assert abs(np.vdot(d.up, d.down)) < 1e-10
        assert d.partner_overlap() > 0.999
        assert np.allclose(d.up, time_reverse(d.down), atol=1e-8)


def test_pairing_is_basis_independent(sparse10, rng):
    q, _ = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
    mixed = sparse10.states[:, :2] @ q
    es = EigenSet(sparse10.energies[:2], mixed, sparse10.residuals[:2])
    a = pair_kramers(EigenSet(sparse10.energies[:2], sparse10.states[:, :2], sparse10.residuals[:2]))[0]
    b = pair_kramers(es)[0]
    assert np.abs(a.up - b.up).max() < 1e-8 and np.abs(a.down - b.down).max() < 1e-8


def test_tolerance_semantics(sparse10):
    e = sparse10.energies.copy()
    e[1] += 1e-6
    assert len(pair_kramers(EigenSet(e, sparse10.states, sparse10.residuals), tol_energy=1e-4)) == 5
    with pytest.raises(UnpairedState):
        pair_kramers(EigenSet(e, sparse10.states, sparse10.residuals), tol_energy=1e-7)


def test_finite_field_is_unpaired(box_op):
    op = assemble(film_box(8.0, 8.0, 2.0), box_op.mesh, field=MagneticField(1.0, (0.2, 0.3, 0.9)))
    es = dense_states(op, 4)
    assert es.energies[0] - es.energies[1] > 0.01
    with pytest.raises(UnpairedState):
        pair_kramers(es)


def test_rotated_doublet_spans_same_space(sparse10, rng):
    d = pair_kramers(sparse10)[0]
    u = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))[0]
    r = d.rotated(u)
    P = d.states @ d.states.conj().T
    assert np.abs(P @ r.states - r.states).max() < 1e-12


def test_gated_desk_solver_agrees_with_dense(desk):
    op = desk.operator({"fg": -0.1, "bg": 0.0})
    sp_ = lowest_hole_states(op, 6)
    de = dense_states(op, 6)
    assert np.abs(sp_.energies - de.energies).max() < 1e-8
