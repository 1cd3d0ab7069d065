import json

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from gmatsim.constants import G0_FREE, MU_B
from gmatsim.device import SILICON, MaterialParams, build_mesh
from gmatsim.errors import SingularPrincipalFactor, ZeroLarmor
from gmatsim.gmatrix import (
    GMatrixSet,
    MagneticMomentElements,
    align_doublet,
    compute_g,
    effective_g,
    diagonal_approx_neglected_ratio,
    m1_elements,
    perturbation_series,
    rabi_direct,
    rabi_diagonal_approx,
    rabi_from_g,
    rabi_map_arrays,
    split_tmr_izr,
    su2_from_angles,
    su2_to_so3,
    svd_decompose,
    zeeman_tensor,
)
from gmatsim.kp import ALL_OFF, NBANDS, CouplingFlags, MagneticField, assemble, direction, operator_factory
from gmatsim.pipeline import DevicePipeline
from gmatsim.presets import DESK_SPACING, d2h_toy, film_box, longitudinal_device
from gmatsim.reference import dense_top
from gmatsim.spectrum import KramersDoublet, canonical_doublet

from conftest import DESK_BIAS

BLOCH_ONLY = CouplingFlags(peierls_on=False)
finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)
mat3 = arrays(float, (3, 3), elements=finite)
unit = st.tuples(st.floats(0, 180), st.floats(0, 360)).map(lambda a: direction(*a))


@pytest.fixture(scope="module")
def tiny():
    dev = film_box(6.0, 6.0, 2.0)
    return dev, build_mesh(dev, (1.0, 1.0, 0.5))


def pure_doublet(mesh, bands):
    n = int(np.prod(mesh.channel_shape()))
    env = np.random.default_rng(0).random(n)
    env /= np.linalg.norm(env)
    a = np.zeros(n * NBANDS, complex)
    b = np.zeros(n * NBANDS, complex)
    a[bands[0]::NBANDS] = env
    b[bands[1]::NBANDS] = env
    up, down = canonical_doublet(a, b)
    return KramersDoublet(0.0, up, down)


def test_pure_hh_and_lh_bloch_g(tiny):
    dev, mesh = tiny
    fac = operator_factory(dev, mesh, flags=BLOCH_ONLY)
    hh = pure_doublet(mesh, (0, 3))
    el = m1_elements(fac, hh.states)
    assert el.elements[2, 0, 0].real == pytest.approx(3 * SILICON.kappa * MU_B, rel=1e-7)
    assert np.abs(compute_g(hh, el) - np.diag([0, 0, 2.52])).max() < 1e-7
    lh = pure_doublet(mesh, (1, 2))
    g = compute_g(lh, m1_elements(fac, lh.states))
    assert np.abs(np.abs(g) - np.diag([1.68, 1.68, 0.84])).max() < 1e-7


def test_no_magnetic_coupling_gives_zero_elements(tiny):
    dev, mesh = tiny
    hh = pure_doublet(mesh, (0, 3))
    assert np.all(m1_elements(operator_factory(dev, mesh, flags=ALL_OFF), hh.states).elements == 0)


def test_m1_richardson(tiny):
    dev, mesh = tiny
    fac = operator_factory(dev, mesh)
    d = pure_doublet(mesh, (0, 3))
    a = m1_elements(fac, d.states, 1e-4).elements
    b = m1_elements(fac, d.states, 5e-5).elements
    assert np.abs(a - b).max() / np.abs(a).max() < 1e-6
    diag = np.einsum("aii->ai", a)
    assert np.abs(diag.imag).max() < 1e-12 * np.abs(a).max()


def test_free_spin_model():
    sig = np.array([[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]])
    el = MagneticMomentElements(-(G0_FREE / 2) * MU_B * sig, 1e-4)
    d = KramersDoublet(0.0, np.array([1, 0j]), np.array([0, 1 + 0j]))
    g = compute_g(d, el)
    assert np.abs(g - G0_FREE * np.eye(3)).max() < 1e-14
    assert effective_g(g, direction(33.0, 71.0)) == pytest.approx(2.0023)


def test_effective_g_examples():
    g = np.diag([0, 0, 2.52])
    assert effective_g(g, [0, 0, 1]) == pytest.approx(2.52)
    assert effective_g(g, [1, 0, 0]) == 0


def test_alignment_round_trip(rng, desk):
    ref = desk.ground_doublet(DESK_BIAS)
    same = align_doublet(ref, ref)
    assert same.provenance["alpha"] == pytest.approx(1.0, abs=1e-12)
    u = su2_from_angles(*rng.uniform(0, 2 * np.pi, 3))
    back = align_doublet(ref, ref.rotated(u))
    O = back.states.conj().T @ ref.states
    assert np.abs(O - np.eye(2)).max() < 1e-12


def test_desk_alignment_overlaps(desk_gset):
    assert all(0.99 < a <= 1 + 1e-12 for a in desk_gset.basis["alphas"])


def test_g_prime_richardson_and_alignment(desk, desk_gset):
    gp_half = desk.g_prime("fg", DESK_BIAS, 5e-4)[0]
    scale = np.abs(desk_gset.g_prime).max()
    assert np.abs(gp_half - desk_gset.g_prime).max() / scale < 1e-3
    # without alignment the doublets at V0 +- dV sit in arbitrary bases
    raw = desk.g_prime("fg", DESK_BIAS, align=False)[0]
    gp = DevicePipeline(desk.device, desk.mesh)  # fresh pipeline, same states
    gp._responses = desk._responses
    rotated = []
    for s in (1, -1):
        bias = dict(DESK_BIAS)
        bias["fg"] += s * 1e-3
        d = gp.ground_doublet(bias).rotated(su2_from_angles(0.3 * s, 1.1, -0.4))
        rotated.append(compute_g(d, gp.moment))
    unaligned = (rotated[0] - rotated[1]) / 2e-3
    assert np.abs(unaligned - desk_gset.g_prime).max() > 10 * scale
    assert raw.shape == (3, 3)


def test_symmetric_toy_has_no_g_prime():
    dev = d2h_toy()
    pl = DevicePipeline(dev, build_mesh(dev, DESK_SPACING))
    gs = pl.gmatrix_set("left", {"left": 0.0, "right": 0.0})
    assert np.abs(gs.g_prime).max() < 1e-3 * np.abs(gs.g).max()


def test_rabi_examples():
    g = np.diag([1.0, 1.5, 4.0])
    assert rabi_from_g(g, np.zeros((3, 3)), [0, 0, 1], 1.0, 1e-3).f_rabi == 0
    assert rabi_from_g(g, np.diag([0.2, -0.3, 1.0]), [0, 0, 1], 1.0, 1e-3).f_rabi == 0
    with pytest.raises(ZeroLarmor):
        rabi_from_g(np.diag([0, 0, 2.52]), np.eye(3), [1, 0, 0], 1.0, 1e-3)


def test_diagonal_approx_exact_without_cross_term():
    g, gp = np.array([1.2, 0.9, 4.1]), np.array([0.3, -0.8, 2.0])
    b = np.array([0, 1, 1]) / np.sqrt(2)
    full = rabi_from_g(np.diag(g), np.diag(gp), b, 0.7, 1e-3).f_rabi
    assert rabi_diagonal_approx(g, gp, b, 0.7, 1e-3) == pytest.approx(full, rel=1e-12)
    assert diagonal_approx_neglected_ratio([1, 2, 3], [2, 4, 1]) == 0


@settings(max_examples=60)
@given(mat3, mat3, unit, st.floats(0.01, 3), st.floats(1e-5, 1e-2))
def test_rabi_properties(g, gp, b, B, v):
    assume(np.linalg.norm(g @ b) > 1e-3)
    r = rabi_from_g(g, gp, b, B, v)
    assert r.f_rabi >= 0 and r.g_star >= 0
    assert rabi_from_g(g, gp, -b, B, v).f_rabi == pytest.approx(r.f_rabi, rel=1e-12, abs=1e-300)
    assert rabi_from_g(g, gp, b, 2 * B, 3 * v).f_rabi == pytest.approx(6 * r.f_rabi, rel=1e-12, abs=1e-300)
    gs, f = rabi_map_arrays(g, gp, b[None, :], B, v)
    assert f[0] == pytest.approx(r.f_rabi, rel=1e-12, abs=1e-300)


@settings(max_examples=60)
@given(mat3, mat3, unit, st.tuples(finite, finite, finite))
def test_rabi_invariant_under_pseudospin_rotation(g, gp, b, angles):
    assume(np.linalg.norm(g @ b) > 1e-3)
    R = su2_to_so3(su2_from_angles(*angles))
    f0 = rabi_from_g(g, gp, b, 1.0, 1e-3).f_rabi
    f1 = rabi_from_g(R.T @ g, R.T @ gp, b, 1.0, 1e-3).f_rabi
    assert abs(f1 - f0) <= 1e-10 * max(f0, 1e-300) + 1e-300 or abs(f1 - f0) < 1e-12 * np.abs(g).max() * np.abs(gp).max()


def test_su2_to_so3_is_rotation(rng):
    for _ in range(10):
        R = su2_to_so3(su2_from_angles(*rng.uniform(0, 2 * np.pi, 3)))
        assert np.abs(R @ R.T - np.eye(3)).max() < 1e-13 and np.linalg.det(R) == pytest.approx(1)


def test_basis_rotation_maps_g(desk, rng):
    d = desk.ground_doublet(DESK_BIAS)
    u = su2_from_angles(*rng.uniform(0, 2 * np.pi, 3))
    g0 = compute_g(d, desk.moment)
    g1 = compute_g(d.rotated(u), desk.moment)
    assert np.abs(g1 - su2_to_so3(u).T @ g0).max() < 1e-10


def test_svd_examples():
    U, gd, V = svd_decompose(np.diag([2.5, 1.7, 0.8]))
    assert np.allclose(U, np.eye(3)) and np.allclose(V, np.eye(3)) and np.allclose(gd, [2.5, 1.7, 0.8])
    U, gd, V = svd_decompose(np.diag([2.5, -1.7, 0.8]))
    assert np.sum(gd < 0) == 1


@given(mat3)
def test_svd_properties(g):
    assume(np.abs(g).max() > 1e-6)
    U, gd, V = svd_decompose(g)
    assert np.abs(U @ np.diag(gd) @ V.T - g).max() < 1e-12 * max(1, np.abs(g).max())
    assert np.all(np.diff(np.abs(gd)) <= 1e-15)
    assert np.linalg.det(U) > 0 and np.linalg.det(V) > 0
    G = zeeman_tensor(g)
    assert np.abs(G - G.T).max() < 1e-12 * max(1, np.abs(G).max())
    assert np.sort(gd**2) == pytest.approx(np.linalg.eigvalsh(G), abs=1e-10 * max(1, np.abs(G).max()))


def test_tmr_izr_examples():
    gd = np.array([2.0, 1.0, 0.5])
    tmr, izr = split_tmr_izr(np.diag(gd), np.diag([0.1, 0.2, -0.3]))
    assert np.all(izr == 0)
    A = np.array([[0, 0.3, -0.2], [-0.3, 0, 0.5], [0.2, -0.5, 0]])
    tmr, izr = split_tmr_izr(np.diag(gd), np.diag(1 / gd) @ A)
    assert np.abs(tmr).max() < 1e-15
    with pytest.raises(SingularPrincipalFactor):
        split_tmr_izr(np.diag([1.0, 1.0, 0.0]), np.eye(3))


@given(mat3, mat3)
def test_tmr_izr_identities(g, gp):
    U, gd, V = svd_decompose(g)
    assume(np.abs(gd).min() > 1e-2)
    tmr, izr = split_tmr_izr(g, gp)
    gp_pf = U.T @ gp @ V
    assert np.abs(tmr + izr - gp_pf).max() <= 1e-12 * max(1, np.abs(gp_pf).max())
    A = np.diag(gd) @ izr
    assert np.abs(A + A.T).max() < 1e-10 * max(1, np.abs(gp).max() * np.abs(g).max())


def test_longitudinal_drive_is_iso_zeeman():
    """Light-hole dot centered between two plungers: driving one plunger
    mostly rotates the principal axes instead of modulating the g-factors."""
    dev = longitudinal_device(0.01)
    pl = DevicePipeline(dev, build_mesh(dev, DESK_SPACING))
    gs = pl.gmatrix_set("left", {"left": -0.1, "right": -0.1, "bg": 0.0})
    assert np.linalg.norm(gs.izr) > np.linalg.norm(gs.tmr)


def test_gmatrix_set_json_round_trip(desk_gset):
    d = json.loads(desk_gset.to_json())
    back = GMatrixSet.from_dict(d)
    for name in ("g", "g_prime", "U", "g_d", "V", "tmr", "izr", "zeeman", "zeeman_prime"):
        assert np.array_equal(getattr(back, name), getattr(desk_gset, name)), name
    assert np.abs(desk_gset.zeeman_prime - desk_gset.zeeman_prime_fd).max() < 1e-4 * np.abs(desk_gset.zeeman_prime).max()


def test_kramers_pair_has_no_dipole(desk):
    d = desk.ground_doublet(DESK_BIAS)
    d1 = desk.d1_nodes("fg")
    assert rabi_direct(d.up, d.down, d1, 1e-3) < 1e-12 * rabi_direct(d.up, d.up, d1, 1e-3)


def test_spin_independent_toy_has_no_rabi():
    mat = MaterialParams("toy", gamma1=4.0, semiconductor=True, permittivity=11.7)
    base = film_box(6.0, 6.0, 2.0)
    from gmatsim.device import Region, build_device
    dev = build_device([mat], [Region("channel", "toy", base.channel_box)])
    mesh = build_mesh(dev, (1.0, 1.0, 0.5))
    x = mesh.channel_points()[:, 0]
    d1 = 0.01 * x + 0.002 * x**2
    for B in (0.1, 1.0):
        op = assemble(dev, mesh, field=MagneticField(B, (0.3, 0.4, 0.8)), flags=CouplingFlags(peierls_on=False))
        es = dense_top(op, 2)
        scale = rabi_direct(es.states[:, 0], es.states[:, 0], d1, 1e-3)
        assert rabi_direct(es.states[:, 0], es.states[:, 1], d1, 1e-3) < 1e-12 * scale


def test_perturbation_series_bookkeeping(desk):
    ds = desk.doublets(DESK_BIAS, 6)
    br = perturbation_series(ds[0], ds[1:], desk.moment, desk.d1_nodes("fg"), direction(60, 30), 0.1, 1e-3)
    assert br.total == pytest.approx(abs(br.contributions.sum()))
    assert br.partial_sums[-1] == pytest.approx(br.total)
    assert len(br.contributions) == 5 and np.all(br.energies < 0)  # E_n - E_0, electron energies
    assert br.qubit_splitting > 0
    # one excited pair carries the largest share of the series
    assert br.dominant_share() > 0.3
