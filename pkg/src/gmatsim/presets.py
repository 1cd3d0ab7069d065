"""Ready-made devices used by the examples, the CLI defaults and the tests.

Axes: x along the wire, y across it in-plane, z out of the substrate.
"""
from __future__ import annotations

from .device import HFO2, SILICON, SIO2, Box, DeviceModel, Gate, Region, biaxial_strain, build_device

DESK_SPACING = (1.0, 1.0, 0.8)
FILM_SPACING = (1.0, 1.0, 0.5)


def film_box(lx: float = 20.0, ly: float = 20.0, lz: float = 4.0, strain=None) -> DeviceModel:
    """Ungated silicon box with hard walls, centered in x and y."""
    region = Region("channel", "Si", Box((-lx / 2, -ly / 2, 0.0), (lx / 2, ly / 2, lz)))
    return build_device([SILICON], [region], strain=strain, name=f"film-{lx:g}x{ly:g}x{lz:g}")


def strained_film(eps_parallel: float, lx: float = 30.0, ly: float = 30.0, lz: float = 10.0) -> DeviceModel:
    """Silicon film under biaxial in-plane strain (positive = tensile)."""
    return film_box(lx, ly, lz, strain=biaxial_strain(eps_parallel, SILICON))


def desk_device(front_y: tuple[float, float] = (-8.0, 2.0)) -> DeviceModel:
    """Small gated silicon box with an exact mirror plane x = 0.

    A 16 x 12 x 4 nm channel sits on a buried oxide above a back gate; a front
    gate covering part of the channel width (y range ``front_y``) breaks the
    y -> -y mirror so that the gate field couples spin and orbit.
    """
    channel = Region("channel", "Si", Box((-8.0, -6.0, 0.0), (8.0, 6.0, 4.0)))
    gates = [
        Gate("fg", Box((-5.0, front_y[0], 7.0), (5.0, front_y[1], 8.0))),
        Gate("bg", Box((-12.0, -10.0, -9.0), (12.0, 10.0, -8.0))),
    ]
    return build_device(
        [SILICON, SIO2], [channel], gates, background="SiO2", padding=0.0,
        sim_box=Box((-12.0, -10.0, -9.0), (12.0, 10.0, 8.0)), name="desk",
    )


def longitudinal_device(eps_parallel: float = 0.0) -> DeviceModel:
    """Desk-size box between two plunger gates at x < 0 and x > 0 above the channel.

    Driving one plunger moves the dot along the wire, the longitudinal drive
    configuration. Equal plunger voltages put the dot midway between the gates.
    The 4 nm film needs about 1% tensile strain for a light-hole ground doublet.
    """
    channel = Region("channel", "Si", Box((-8.0, -6.0, 0.0), (8.0, 6.0, 4.0)))
    gates = [
        Gate("left", Box((-10.0, -8.0, 7.0), (-2.0, 2.0, 8.0))),
        Gate("right", Box((2.0, -8.0, 7.0), (10.0, 2.0, 8.0))),
        Gate("bg", Box((-12.0, -10.0, -9.0), (12.0, 10.0, -8.0))),
    ]
    return build_device(
        [SILICON, SIO2], [channel], gates, background="SiO2", padding=0.0,
        sim_box=Box((-12.0, -10.0, -9.0), (12.0, 10.0, 8.0)), name="longitudinal",
        strain=biaxial_strain(eps_parallel, SILICON) if eps_parallel else None,
    )


def d2h_toy() -> DeviceModel:
    """Box between two plate electrodes facing each other across y.

    With both plates at the same voltage the structure has all three mirror
    planes through the box center. The unit response of one plate is odd under
    y -> -y up to a constant, so its field is even under the x and z mirrors and
    odd under the y mirror.
    """
    channel = Region("channel", "Si", Box((-8.0, -6.0, 0.0), (8.0, 6.0, 4.0)))
    gates = [
        Gate("left", Box((-8.0, -10.0, 0.0), (8.0, -9.0, 4.0))),
        Gate("right", Box((-8.0, 9.0, 0.0), (8.0, 10.0, 4.0))),
    ]
    return build_device(
        [SILICON, SIO2], [channel], gates, background="SiO2", padding=0.0,
        sim_box=Box((-8.0, -10.0, 0.0), (8.0, 10.0, 4.0)), name="d2h-toy",
    )


def nanowire_device(length: float = 60.0, width: float = 30.0, height: float = 10.0) -> DeviceModel:
    """Production-scale silicon-on-insulator nanowire with a front gate covering
    half of the wire and a back gate below the buried oxide. Not desk-sized.
    """
    w2 = width / 2
    channel = Region("channel", "Si", Box((-length / 2, -w2, 0.0), (length / 2, w2, height)))
    oxide = Region("gate-oxide", "HfO2", Box((-15.0, -w2 - 2.5, height), (15.0, 2.5, height + 2.5)))
    gates = [
        Gate("fg", Box((-15.0, -w2 - 2.5, height + 2.5), (15.0, 2.5, height + 5.0))),
        Gate("bg", Box((-length / 2 - 20, -w2 - 20, -26.0), (length / 2 + 20, w2 + 20, -25.0))),
    ]
    return build_device(
        [SILICON, SIO2, HFO2], [channel, oxide], gates, background="SiO2", padding=0.0,
        sim_box=Box((-length / 2 - 20, -w2 - 20, -26.0), (length / 2 + 20, w2 + 20, height + 25.0)),
        name="nanowire",
    )


def gated_strained_film(eps_parallel: float = 0.0, lx: float = 30.0, ly: float = 30.0, lz: float = 10.0) -> DeviceModel:
    """Strained silicon film on a buried oxide with a top gate and a back gate.

    A negative top-gate bias pulls the hole against the top interface, which
    widens the heavy/light splitting as in a biased qubit.
    """
    channel = Region("channel", "Si", Box((-lx / 2, -ly / 2, 0.0), (lx / 2, ly / 2, lz)))
    gates = [
        Gate("fg", Box((-lx / 2, -ly / 2, lz + 3.0), (lx / 2, ly / 2, lz + 4.0))),
        Gate("bg", Box((-lx / 2, -ly / 2, -11.0), (lx / 2, ly / 2, -10.0))),
    ]
    return build_device(
        [SILICON, SIO2], [channel], gates, background="SiO2", padding=0.0,
        sim_box=Box((-lx / 2, -ly / 2, -11.0), (lx / 2, ly / 2, lz + 4.0)),
        strain=biaxial_strain(eps_parallel, SILICON) if eps_parallel else None, name="gated-strained-film",
    )
