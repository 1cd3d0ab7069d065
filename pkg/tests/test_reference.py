import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import DESK_BIAS
from gmatsim.device import SILICON
from gmatsim.errors import DegenerateDenominator, DimensionTooLarge
from gmatsim.gmatrix import rabi_from_g
from gmatsim.kp import direction
from gmatsim.reference import (
    DENSE_CAP,
    brute_force_rabi,
    delta_gz,
    delta_gz_oracle,
    dense_solve,
    pure_hh_g,
    pure_lh_g,
)


def test_pure_doublet_factors():
    k = SILICON.kappa
    assert np.allclose(pure_hh_g(), [0, 0, -6 * k])
    assert np.allclose(pure_lh_g(), [-4 * k, -4 * k, -2 * k])
    assert np.array_equal(pure_hh_g(0.0), np.zeros(3))
    assert np.array_equal(pure_lh_g(0.0), np.zeros(3))


def test_delta_gz_values():
    r = delta_gz_oracle()
    assert r.method == "closed-form" and r.quantity == "delta_gz"
    assert r.value == pytest.approx(2.14, abs=0.01)
    assert delta_gz(4.285, 0.339, 0.0) == 0.0
    assert delta_gz(1.0, 0.0, 1.0) == pytest.approx(2**17 / (243 * math.pi**4), rel=1e-14)
    with pytest.raises(DegenerateDenominator):
        delta_gz(-4.0, 1.0, 1.0)


@settings(max_examples=60, deadline=None)
@given(
    st.floats(0.5, 10), st.floats(0.05, 2), st.floats(0.05, 3), st.floats(0.01, 1),
)
def test_delta_gz_monotonic(g1, g2, g3, step):
    base = delta_gz(g1, g2, g3)
    assert delta_gz(g1, g2, g3 + step) > base
    assert delta_gz(g1, g2, -g3 - step) > base
    assert delta_gz(g1 + step, g2, g3) < base
    assert delta_gz(g1, g2 + step, g3) < base


def test_dense_solve_random_hermitian(rng):
    a = rng.normal(size=(60, 60)) + 1j * rng.normal(size=(60, 60))
    H = a + a.conj().T
    es = dense_solve(H)
    assert np.all(np.diff(es.energies) <= 0)
    assert es.residuals.max() < 1e-12 * np.abs(es.energies).max()
    assert np.allclose(es.states.conj().T @ es.states, np.eye(60), atol=1e-12)


def test_dense_solve_ring_band():
    n, t = 40, 1.3
    H = sp.diags([-t * np.ones(n - 1), -t * np.ones(n - 1)], [1, -1], format="lil")
    H[0, n - 1] = H[n - 1, 0] = -t
    es = dense_solve(H.tocsr())
    band = np.sort(-2 * t * np.cos(2 * np.pi * np.arange(n) / n))[::-1]
    assert np.abs(es.energies - band).max() < 1e-12


def test_dense_cap():
    with pytest.raises(DimensionTooLarge):
        dense_solve(sp.identity(DENSE_CAP + 6, format="csr"))


def test_brute_force_rabi_matches_g_formula(desk, desk_gset):
    factory = lambda bb, fv: desk.operator(bb, fv)
    d1 = desk.response("fg")
    b = direction(45.0, 20.0)
    ratios = []
    for B in (0.05, 0.1):
        r = brute_force_rabi(factory, DESK_BIAS, b, B, 1e-3, d1)
        assert r.method == "dense-diagonalization"
        ratios.append(r.value["f_rabi"] / rabi_from_g(desk_gset.g, desk_gset.g_prime, b, B, 1e-3).f_rabi)
    # deviations are even in B, so extrapolate in B**2 to the linear-response limit
    limit = ratios[0] + (ratios[0] - ratios[1]) / 3.0
    assert abs(limit - 1) < 1e-3
    assert abs(ratios[0] - 1) <= abs(ratios[1] - 1)


def test_brute_force_rabi_extinction_along_x(desk, desk_gset):
    factory = lambda bb, fv: desk.operator(bb, fv)
    b = np.array([1.0, 0.0, 0.0])
    r = brute_force_rabi(factory, DESK_BIAS, b, 0.1, 1e-3, desk.response("fg"))
    ref = rabi_from_g(desk_gset.g, desk_gset.g_prime, direction(45.0, 20.0), 0.1, 1e-3).f_rabi
    assert r.value["f_rabi"] < 1e-6 * ref
    assert r.value["splitting"] > 0
