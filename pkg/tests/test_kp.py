import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gmatsim.constants import FLUX_QUANTUM, HBAR2_2M0, MU_B
from gmatsim.device import SILICON, Box, Region, biaxial_strain, build_device, build_mesh
from gmatsim.errors import MeshMismatch
from gmatsim.kp import (
    ALL_OFF,
    CouplingFlags,
    MagneticField,
    angles_of,
    assemble,
    bloch_zeeman,
    bulk_hamiltonian,
    direction,
    hh_weight,
    j32_matrices,
    link_phase,
    peierls_phases,
    strain_hamiltonian,
    time_reverse,
)
from gmatsim.presets import film_box
from gmatsim.reference import dense_solve


@pytest.fixture(scope="module")
def small_box():
    dev = film_box(8.0, 8.0, 2.0)
    return dev, build_mesh(dev, (1.0, 1.0, 0.5))


def test_bulk_k0_spectrum():
    w = dense_solve(bulk_hamiltonian(np.zeros(3), SILICON)).energies
    assert np.abs(w - [0, 0, 0, 0, -44, -44]).max() <= 1e-12


@pytest.mark.parametrize("sign,band", [(-1, 0), (1, 2)])
def test_bulk_masses_along_z(sign, band):
    k = 1e-3
    w = np.sort(np.linalg.eigvalsh(bulk_hamiltonian([0, 0, k], SILICON)))[::-1]
    mass = HBAR2_2M0 * k * k / -w[band]
    assert mass == pytest.approx(1 / (SILICON.gamma1 + sign * 2 * SILICON.gamma2), rel=1e-3)


def test_bulk_is_time_reversal_symmetric():
    k = np.array([0.2, -0.1, 0.3])
    H = bulk_hamiltonian(k, SILICON)
    Hm = bulk_hamiltonian(-k, SILICON)
    from gmatsim.kp import TIME_REVERSAL_U as U
    assert np.abs(U @ H.conj() @ U.conj().T - Hm).max() < 1e-12


def test_bloch_zeeman_along_z():
    Z = bloch_zeeman(MagneticField(1.0), SILICON)
    k = SILICON.kappa
    assert np.linalg.eigvalsh(Z[:4, :4]) == pytest.approx(np.sort([-3 * k, -k, k, 3 * k]) * MU_B, abs=1e-15)
    assert np.all(bloch_zeeman(MagneticField(0.0), SILICON) == 0)


@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(0.1, 1))
def test_bloch_zeeman_restricts_to_kappa_j(bx, by, bz):
    b = np.array([bx, by, bz])
    Z = bloch_zeeman(MagneticField.from_vector(b), SILICON)
    ref = -2 * SILICON.kappa * MU_B * np.einsum("a,aij->ij", b, j32_matrices())
    assert np.abs(Z[:4, :4] - ref).max() < 1e-13
    assert np.abs(Z - Z.conj().T).max() == 0


@given(st.floats(0, 180), st.floats(0, 359.9))
def test_direction_round_trip(theta, phi):
    b = direction(theta, phi)
    assert abs(np.linalg.norm(b) - 1) < 1e-14
    t, p = angles_of(b)
    assert np.linalg.norm(direction(t, p) - b) < 1e-12


def test_strain_hamiltonian_examples():
    assert np.all(strain_hamiltonian(np.zeros((3, 3)), SILICON) == 0)
    hyd = strain_hamiltonian(0.001 * np.eye(3), SILICON)
    w = np.linalg.eigvalsh(hyd[:4, :4])
    assert np.ptp(w) < 1e-12  # no HH/LH splitting from hydrostatic strain
    # tensile biaxial strain puts light holes on top
    H = bulk_hamiltonian(np.zeros(3), SILICON, strain=biaxial_strain(0.002))
    w, v = np.linalg.eigh(H)
    top = v[:, -1]
    assert abs(top[1]) ** 2 + abs(top[2]) ** 2 > 0.9


def test_plaquette_flux(rng):
    for _ in range(5):
        B = rng.normal(size=3)
        field = MagneticField.from_vector(B)
        r0 = rng.normal(size=3) * 5
        a, c = np.eye(3)[rng.choice(3, 2, replace=False)] * rng.uniform(0.3, 1.5, 2)[:, None]
        corners = [r0, r0 + a, r0 + a + c, r0 + c]
        prod = np.prod([link_phase(corners[i], corners[(i + 1) % 4], field, np.zeros(3)) for i in range(4)])
        flux = np.dot(B, np.cross(a, c))
        assert abs(prod - np.exp(2j * np.pi * flux / FLUX_QUANTUM)) < 1e-13


def test_peierls_phases_zero_field_and_links(small_box):
    _, mesh = small_box
    for src, dst, ph in peierls_phases(mesh, MagneticField(0.0)).values():
        assert np.all(ph == 1)
    f = MagneticField.from_vector([0.3, -0.2, 1.0])
    pts = mesh.channel_points()
    src, dst, ph = peierls_phases(mesh, f, np.zeros(3))[(1, 0, 0)]
    assert np.abs(ph - link_phase(pts[src], pts[dst], f, np.zeros(3))).max() < 1e-14


def test_operator_hermitian_with_field_and_potential(small_box, rng):
    dev, mesh = small_box
    pot = rng.normal(size=mesh.shape) * 0.01
    op = assemble(dev, mesh, pot, MagneticField.from_vector([0.4, -0.7, 1.1]))
    assert op.hermiticity_error() < 1e-13


def test_zero_field_kramers_and_hh_ground(small_box):
    dev, mesh = small_box
    es = dense_solve(assemble(dev, mesh))
    e = es.energies[:10]
    assert np.abs(e[0::2] - e[1::2]).max() < 1e-10
    assert hh_weight(es.states[:, :2]).min() > 0.9


def test_gauge_origin_shift_preserves_spectrum(small_box):
    dev, mesh = small_box
    f = MagneticField.from_vector([0.5, 1.0, 2.0])
    e0 = dense_solve(assemble(dev, mesh, field=f)).energies[:12]
    e1 = dense_solve(assemble(dev, mesh, field=f, gauge_origin=[10.0, 0.0, 0.0])).energies[:12]
    assert np.abs(e1 - e0).max() / np.abs(e0).max() < 1e-9


def test_time_reverse_is_antiunitary_involution(rng):
    v = rng.normal(size=(60, 2)) + 1j * rng.normal(size=(60, 2))
    assert np.allclose(time_reverse(time_reverse(v)), -v)


def test_flags():
    f = CouplingFlags(gamma3_override=0.0, gamma3_scope="magnetic")
    assert f.for_hamiltonian().gamma3_override is None
    assert f.for_magnetic().gamma3_override == 0.0
    assert not ALL_OFF.peierls_on and not ALL_OFF.bloch_zeeman_on


def test_mismatched_mesh(small_box):
    dev, _ = small_box
    other = build_mesh(film_box(10.0, 8.0, 2.0), (1.0, 1.0, 0.5))
    with pytest.raises(MeshMismatch):
        assemble(dev, other)


def test_single_band_particle_in_box():
    """gamma2 = gamma3 = Delta = 0 reduces every band to a free particle of mass m0/gamma1."""
    mat = SILICON.__class__("sb", gamma1=1.0, semiconductor=True, permittivity=11.7)
    dev = build_device([mat], [Region("c", "sb", Box((0, 0, 0), (0.4, 0.4, 10.0)))])
    mesh = build_mesh(dev, (0.2, 0.2, 0.2))
    es = dense_solve(assemble(dev, mesh))
    L, Lxy = 10.0, 0.4
    exact = lambda n: -HBAR2_2M0 * np.pi**2 * (2 / Lxy**2 + n**2 / L**2)
    # lowest states of each band are degenerate sextets; compare z-excitations
    levels = np.unique(np.round(es.energies, 6))[::-1][:3]
    ref = np.array([exact(n) for n in (1, 2, 3)])
    h = 0.2
    disc = lambda L_, n: -HBAR2_2M0 * (2 - 2 * np.cos(n * np.pi * h / L_)) / h**2
    ref_disc = np.array([2 * disc(Lxy, 1) + disc(L, n) for n in (1, 2, 3)])
    assert levels == pytest.approx(ref_disc, rel=1e-8)
    # the z-spacing converges to the continuum result
    assert (levels[1] - levels[0]) == pytest.approx(ref[1] - ref[0], rel=0.005)
