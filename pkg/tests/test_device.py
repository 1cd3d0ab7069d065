import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gmatsim.device import (
    SILICON,
    SIO2,
    Box,
    Gate,
    MaterialParams,
    Region,
    biaxial_strain,
    build_device,
    build_mesh,
    parse_device_spec,
)
from gmatsim.errors import (
    DanglingGate,
    NegativeDimension,
    OverlappingRegions,
    SpacingTooCoarse,
    UnknownMaterial,
    ValidationError,
)
from gmatsim.presets import DESK_SPACING, desk_device, nanowire_device

DEVICE_FILE = """
[device]
format_version = 1
channel = channel
background = SiO2
padding = 2

[material.Si]
preset = silicon

[material.SiO2]
preset = sio2

[region.channel]
material = Si
x = -4 4
y = -3 3
z = 0 4

[gate.top]
x = -2 2
y = -3 3
z = 5 6

[strain]
eps_parallel = 0.001
"""


def test_silicon_preset_values():
    s = SILICON
    assert (s.gamma1, s.gamma2, s.gamma3, s.kappa) == (4.285, 0.339, 1.446, -0.42)
    assert (s.delta_so, s.permittivity, s.c11, s.c12) == (44.0, 11.7, 166.0, 64.0)


@pytest.mark.parametrize("kwargs", [dict(gamma1=-1.0, semiconductor=True), dict(delta_so=-1.0), dict(permittivity=0.5)])
def test_material_invariants(kwargs):
    with pytest.raises(ValidationError):
        MaterialParams("bad", **kwargs)


def test_biaxial_strain_examples():
    assert biaxial_strain(0.002)[2, 2] == pytest.approx(-0.00154, abs=5e-6)
    assert biaxial_strain(0.001)[2, 2] == pytest.approx(-0.000771, abs=5e-7)
    assert np.all(biaxial_strain(0.0) == 0)


@given(st.floats(-0.04, 0.04))
def test_biaxial_strain_is_symmetric_with_poisson_ratio(eps):
    e = biaxial_strain(eps)
    assert np.array_equal(e, e.T)
    assert e[0, 0] == e[1, 1] == eps
    assert e[2, 2] == pytest.approx(-2 * 64 / 166 * eps, rel=1e-14, abs=1e-300)


def test_trivial_single_box():
    dev = build_device([SILICON], [Region("c", "Si", Box((0, 0, 0), (5, 5, 5)))])
    assert dev.channel == "c" and dev.gate_names == []
    mesh = build_mesh(dev, 1.0)
    assert mesh.shape == (6, 6, 6)
    assert mesh.channel_shape() == (4, 4, 4)


def test_overlapping_regions_rejected():
    regions = [Region("a", "Si", Box((0, 0, 0), (5, 5, 5))), Region("b", "Si", Box((4, 0, 0), (9, 5, 5)))]
    with pytest.raises(OverlappingRegions):
        build_device([SILICON], regions, channel="a", background="Si")


def test_validation_errors():
    r = Region("c", "Si", Box((0, 0, 0), (5, 5, 5)))
    with pytest.raises(UnknownMaterial):
        build_device([SIO2], [r])
    with pytest.raises(NegativeDimension):
        build_device([SILICON], [Region("c", "Si", Box((0, 0, 0), (5, -1, 5)))])
    with pytest.raises(DanglingGate):
        build_device([SILICON, SIO2], [r], [Gate("g", Box((1, 1, 2.5), (2, 2, 2.5)))], background="SiO2", padding=0.0,
                     sim_box=Box((0, 0, 0), (5, 5, 5)))


def test_mesh_planes_follow_geometry():
    dev = desk_device()
    mesh = build_mesh(dev, DESK_SPACING)
    for g in dev.gates:
        for ax, c in enumerate(mesh.coords):
            assert np.min(np.abs(c - g.box.lo[ax])) < 1e-9
            assert np.min(np.abs(c - g.box.hi[ax])) < 1e-9
    assert mesh.spacing == pytest.approx(DESK_SPACING)
    assert mesh.bc == ("hard-wall",) * 3
    # the channel walls are mesh planes and carry no k.p unknowns
    rx, ry, rz = mesh.channel_node_ranges()
    assert mesh.x[rx].min() > dev.channel_box.lo[0] and mesh.x[rx].max() < dev.channel_box.hi[0]


def test_spacing_too_coarse():
    dev = build_device([SILICON], [Region("c", "Si", Box((0, 0, 0), (10, 10, 10)))])
    with pytest.raises(SpacingTooCoarse):
        build_mesh(dev, 50.0)


def test_nanowire_at_half_nm_is_consistent():
    dev = nanowire_device()
    assert {m.name for m in dev.materials} == {"Si", "SiO2", "HfO2"}
    assert dev.channel_box.size.tolist() == [60.0, 30.0, 10.0]


def test_device_file_round_trip():
    dev = parse_device_spec(DEVICE_FILE)
    assert dev.channel == "channel" and dev.gate_names == ["top"]
    assert dev.strain_tensor[2, 2] == pytest.approx(-2 * 64 / 166 * 0.001)
    assert dev.sim_box.lo == pytest.approx((-6, -5, -2))
    assert parse_device_spec(DEVICE_FILE).hash() == dev.hash()
    assert dev.with_strain(np.zeros((3, 3))).hash() != dev.hash()


@pytest.mark.parametrize(
    "edit",
    [
        lambda t: t.replace("format_version = 1", "format_version = 9"),
        lambda t: t.replace("preset = silicon", "preset = unobtainium"),
        lambda t: t + "\n[bogus]\nx = 1\n",
        lambda t: t.replace("z = 5 6", "z = 5"),
    ],
)
def test_device_file_errors(edit):
    with pytest.raises(ValidationError):
        parse_device_spec(edit(DEVICE_FILE))
