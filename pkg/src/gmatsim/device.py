"""Device geometry, materials, strain and the rectilinear mesh.

Axes: x along the wire, y across it in the substrate plane, z out of the
substrate. Lengths are in nm.

The device description file is INI-style (see ``README.md`` for the grammar)::

    [device]
    format_version = 1
    channel = channel
    background = Si3N4

    [material.Si]
    preset = silicon

    [region.channel]
    material = Si
    x = -8 8
    y = -6 6
    z = 0 4

    [gate.front]
    x = -4 4
    y = -6 6
    z = 6 6
"""
from __future__ import annotations

import configparser
import hashlib
import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    DanglingGate,
    NegativeDimension,
    OverlappingRegions,
    SpacingTooCoarse,
    UnknownMaterial,
    ValidationError,
)

FORMAT_VERSION = 1
AXES = ("x", "y", "z")
_GEOM_TOL = 1e-9


@dataclass(frozen=True)
class MaterialParams:
    name: str
    gamma1: float = 0.0
    gamma2: float = 0.0
    gamma3: float = 0.0
    kappa: float = 0.0
    delta_so: float = 0.0  # meV
    permittivity: float = 1.0
    c11: float = 0.0  # GPa
    c12: float = 0.0  # GPa
    b_v: float = 0.0  # eV
    d_v: float = 0.0  # eV
    a_v: float = 0.0  # eV, rigid shift; zero by default
    semiconductor: bool = False

    def __post_init__(self):
        if self.semiconductor and not self.gamma1 > 0:
            raise ValidationError(f"material {self.name}: gamma1 must be > 0")
        if self.delta_so < 0:
            raise ValidationError(f"material {self.name}: delta_so must be >= 0")
        if self.permittivity < 1:
            raise ValidationError(f"material {self.name}: permittivity must be >= 1")


SILICON = MaterialParams(
    "Si", gamma1=4.285, gamma2=0.339, gamma3=1.446, kappa=-0.42, delta_so=44.0,
    permittivity=11.7, c11=166.0, c12=64.0, b_v=-2.1, d_v=-4.8, semiconductor=True,
)
SIO2 = MaterialParams("SiO2", permittivity=3.9)
HFO2 = MaterialParams("HfO2", permittivity=20.0)
SI3N4 = MaterialParams("Si3N4", permittivity=7.5)

PRESETS = {"silicon": SILICON, "sio2": SIO2, "hfo2": HFO2, "si3n4": SI3N4}


@dataclass(frozen=True)
class Box:
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    @classmethod
    def from_bounds(cls, x, y, z) -> "Box":
        return cls((float(x[0]), float(y[0]), float(z[0])), (float(x[1]), float(y[1]), float(z[1])))

    @property
    def size(self) -> np.ndarray:
        return np.asarray(self.hi) - np.asarray(self.lo)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.hi) + np.asarray(self.lo))

    @property
    def volume(self) -> float:
        return float(np.prod(self.size))

    def overlap_volume(self, other: "Box") -> float:
        lo = np.maximum(self.lo, other.lo)
        hi = np.minimum(self.hi, other.hi)
        return float(np.prod(np.clip(hi - lo, 0.0, None)))

    def contains_box(self, other: "Box") -> bool:
        return bool(np.all(np.asarray(other.lo) >= np.asarray(self.lo) - _GEOM_TOL)
                    and np.all(np.asarray(other.hi) <= np.asarray(self.hi) + _GEOM_TOL))


@dataclass(frozen=True)
class Region:
    name: str
    material: str
    box: Box


@dataclass(frozen=True)
class Gate:
    """Electrode held at a fixed voltage; a box, possibly flat along one axis."""

    name: str
    box: Box


@dataclass(frozen=True)
class DeviceModel:
    name: str
    materials: tuple[MaterialParams, ...]
    regions: tuple[Region, ...]
    gates: tuple[Gate, ...]
    channel: str | None
    sim_box: Box
    background: str | None = None
    strain: tuple[tuple[float, ...], ...] = ((0.0,) * 3,) * 3
    periodic_x: bool = False

    def material(self, name: str) -> MaterialParams:
        for m in self.materials:
            if m.name == name:
                return m
        raise UnknownMaterial(name)

    def region(self, name: str) -> Region:
        for r in self.regions:
            if r.name == name:
                return r
        raise KeyError(name)

    @property
    def channel_region(self) -> Region:
        if self.channel is None:
            raise ValidationError("device has no semiconductor channel")
        return self.region(self.channel)

    @property
    def channel_box(self) -> Box:
        return self.channel_region.box

    @property
    def channel_material(self) -> MaterialParams:
        return self.material(self.channel_region.material)

    @property
    def gate_names(self) -> list[str]:
        return [g.name for g in self.gates]

    @property
    def strain_tensor(self) -> np.ndarray:
        return np.array(self.strain, dtype=float)

    def with_strain(self, strain) -> "DeviceModel":
        eps = np.asarray(strain, dtype=float)
        return replace(self, strain=tuple(tuple(float(v) for v in row) for row in eps))

    def with_material(self, material: MaterialParams) -> "DeviceModel":
        mats = tuple(material if m.name == material.name else m for m in self.materials)
        return replace(self, materials=mats)

    def to_dict(self) -> dict:
        def box(b):
            return {"lo": list(b.lo), "hi": list(b.hi)}

        return {
            "format_version": FORMAT_VERSION,
            "name": self.name,
            "materials": [{f.name: getattr(m, f.name) for f in fields(m)} for m in self.materials],
            "regions": [{"name": r.name, "material": r.material, "box": box(r.box)} for r in self.regions],
            "gates": [{"name": g.name, "box": box(g.box)} for g in self.gates],
            "channel": self.channel,
            "sim_box": box(self.sim_box),
            "background": self.background,
            "strain": [list(r) for r in self.strain],
            "periodic_x": self.periodic_x,
        }

    def hash(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def biaxial_strain(eps_parallel: float, material: MaterialParams = SILICON) -> np.ndarray:
    """In-plane biaxial strain of a (001) film: diag(e, e, -2 c12 e / c11)."""
    if abs(eps_parallel) >= 0.05:
        raise ValidationError("biaxial strain must satisfy |eps_parallel| < 0.05")
    ezz = -2.0 * material.c12 * eps_parallel / material.c11
    return np.diag([eps_parallel, eps_parallel, ezz]).astype(float)


def build_device(
    materials: Sequence[MaterialParams],
    regions: Sequence[Region],
    gates: Sequence[Gate] = (),
    channel: str | None = None,
    background: str | None = None,
    strain=None,
    padding: float = 20.0,
    sim_box: Box | None = None,
    periodic_x: bool = False,
    name: str = "device",
) -> DeviceModel:
    """Validate a geometry description and return an immutable ``DeviceModel``.

    Without ``background`` the regions must tile their bounding box exactly.
    With a background material the simulation box is the bounding box of
    regions and gates padded by ``padding`` on every side, and the background
    fills whatever the explicit regions leave uncovered.
    """
    mats = tuple(materials)
    names = {m.name for m in mats}
    regions = tuple(regions)
    gates = tuple(gates)
    if not regions:
        raise ValidationError("device needs at least one region")
    for r in regions:
        if r.material not in names:
            raise UnknownMaterial(f"region {r.name}: unknown material {r.material!r}")
        if np.any(r.box.size <= 0):
            raise NegativeDimension(f"region {r.name} has non-positive extent {r.box.size}")
    for g in gates:
        if np.any(g.box.size < 0):
            raise NegativeDimension(f"gate {g.name} has negative extent {g.box.size}")
        if int(np.sum(g.box.size == 0)) > 1:
            raise NegativeDimension(f"gate {g.name} is degenerate (line or point)")
    if background is not None and background not in names:
        raise UnknownMaterial(f"unknown background material {background!r}")
    if len({r.name for r in regions}) != len(regions) or len({g.name for g in gates}) != len(gates):
        raise ValidationError("duplicate region or gate names")

    for i, a in enumerate(regions):
        for b in regions[i + 1:]:
            if a.box.overlap_volume(b.box) > _GEOM_TOL:
                raise OverlappingRegions(f"regions {a.name} and {b.name} overlap")
        for g in gates:
            if a.box.overlap_volume(g.box) > _GEOM_TOL:
                raise OverlappingRegions(f"gate {g.name} overlaps region {a.name}")

    boxes = [r.box for r in regions] + [g.box for g in gates]
    lo = np.min([b.lo for b in boxes], axis=0)
    hi = np.max([b.hi for b in boxes], axis=0)
    if sim_box is None:
        if background is not None:
            sim_box = Box(tuple(lo - padding), tuple(hi + padding))
        else:
            sim_box = Box(tuple(lo), tuple(hi))
    for b, label in [(r.box, f"region {r.name}") for r in regions]:
        if not sim_box.contains_box(b):
            raise ValidationError(f"{label} extends outside the simulation box")
    if background is None:
        covered = sum(r.box.volume for r in regions)
        covered += sum(g.box.volume for g in gates)
        if abs(covered - sim_box.volume) > 1e-6 * sim_box.volume:
            raise ValidationError("regions do not tile the simulation box; set a background material")

    faces = {ax: {sim_box.lo[ax], sim_box.hi[ax]} for ax in range(3)}
    for r in regions:
        for ax in range(3):
            faces[ax].update((r.box.lo[ax], r.box.hi[ax]))
    for g in gates:
        if not sim_box.contains_box(g.box):
            raise DanglingGate(f"gate {g.name} extends outside the simulation box")
        flat = np.flatnonzero(g.box.size == 0)
        if flat.size:
            ax = int(flat[0])
            if not any(abs(g.box.lo[ax] - f) < _GEOM_TOL for f in faces[ax]):
                raise DanglingGate(f"flat gate {g.name} does not lie on a region boundary")

    semis = [r.name for r in regions if next(m for m in mats if m.name == r.material).semiconductor]
    if channel is None and semis:
        if len(semis) != 1:
            raise ValidationError("channel region must be named when not unique")
        channel = semis[0]
    if channel is not None:
        if channel not in {r.name for r in regions}:
            raise ValidationError(f"unknown channel region {channel!r}")
        if channel not in semis:
            raise ValidationError("channel material must carry k.p parameters")

    eps = np.zeros((3, 3)) if strain is None else np.asarray(strain, dtype=float)
    if eps.shape != (3, 3) or not np.allclose(eps, eps.T, atol=1e-15):
        raise ValidationError("strain tensor must be a symmetric 3x3 matrix")
    return DeviceModel(
        name=name,
        materials=mats,
        regions=regions,
        gates=gates,
        channel=channel,
        sim_box=sim_box,
        background=background,
        strain=tuple(tuple(float(v) for v in row) for row in eps),
        periodic_x=periodic_x,
    )


def _pair(text: str) -> tuple[float, float]:
    parts = text.replace(",", " ").split()
    if len(parts) != 2:
        raise ValidationError(f"expected two numbers, got {text!r}")
    return float(parts[0]), float(parts[1])


def _box_from_section(sec: Mapping[str, str], label: str) -> Box:
    try:
        return Box.from_bounds(_pair(sec["x"]), _pair(sec["y"]), _pair(sec["z"]))
    except KeyError as exc:
        raise ValidationError(f"{label}: missing bound {exc}") from None


def parse_device_spec(text: str) -> DeviceModel:
    """Parse the INI device description into a validated model."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    cp.read_string(text)
    if "device" not in cp:
        raise ValidationError("missing [device] section")
    dev = cp["device"]
    version = int(dev.get("format_version", "0"))
    if version != FORMAT_VERSION:
        raise ValidationError(f"unsupported format_version {version}")

    float_fields = {f.name for f in fields(MaterialParams) if f.type in ("float", float)}
    materials = []
    regions = []
    gates = []
    for sect in cp.sections():
        kind, _, label = sect.partition(".")
        sec = cp[sect]
        if kind == "material":
            base = PRESETS.get(sec.get("preset", "").lower()) if "preset" in sec else MaterialParams(label)
            if base is None:
                raise UnknownMaterial(f"unknown preset {sec['preset']!r}")
            over = {k: float(v) for k, v in sec.items() if k in float_fields}
            if "semiconductor" in sec:
                over["semiconductor"] = sec.getboolean("semiconductor")
            unknown = set(sec) - float_fields - {"preset", "semiconductor"}
            if unknown:
                raise ValidationError(f"material {label}: unknown keys {sorted(unknown)}")
            materials.append(replace(base, name=label, **over))
        elif kind == "region":
            if "material" not in sec:
                raise ValidationError(f"region {label}: missing material")
            regions.append(Region(label, sec["material"], _box_from_section(sec, f"region {label}")))
        elif kind == "gate":
            gates.append(Gate(label, _box_from_section(sec, f"gate {label}")))
        elif sect not in ("device", "strain"):
            raise ValidationError(f"unknown section [{sect}]")

    strain = None
    if "strain" in cp:
        s = cp["strain"]
        if "eps_parallel" in s:
            chan = next((r for r in regions if r.name == dev.get("channel")), None)
            mat = next((m for m in materials if chan and m.name == chan.material), SILICON)
            strain = biaxial_strain(float(s["eps_parallel"]), mat)
        else:
            strain = np.zeros((3, 3))
            idx = {"xx": (0, 0), "yy": (1, 1), "zz": (2, 2), "yz": (1, 2), "xz": (0, 2), "xy": (0, 1)}
            for k, v in s.items():
                i, j = idx[k]
                strain[i, j] = strain[j, i] = float(v)

    sim_box = None
    if all(f"box_{a}" in dev for a in AXES):
        sim_box = Box.from_bounds(*(_pair(dev[f"box_{a}"]) for a in AXES))
    return build_device(
        materials,
        regions,
        gates,
        channel=dev.get("channel"),
        background=dev.get("background"),
        strain=strain,
        padding=float(dev.get("padding", "20")),
        sim_box=sim_box,
        periodic_x=dev.getboolean("periodic_x", False),
        name=dev.get("name", "device"),
    )


def load_device(path) -> DeviceModel:
    return parse_device_spec(Path(path).read_text())


# --------------------------------------------------------------------------
# mesh


@dataclass(frozen=True, eq=False)
class Mesh:
    """Rectilinear mesh; nodes at the tensor product of the coordinate arrays.

    ``cell_region`` holds the region index of every cell (-1 for background,
    -2 for gate metal); ``chan_lo``/``chan_hi`` are the node indices of the
    channel bounding planes.
    """

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    cell_region: np.ndarray
    chan_lo: tuple[int, int, int]
    chan_hi: tuple[int, int, int]
    bc: tuple[str, str, str]
    region_names: tuple[str, ...]
    permittivity: np.ndarray = field(repr=False)  # per cell

    @property
    def coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.x, self.y, self.z

    @property
    def shape(self) -> tuple[int, int, int]:
        return len(self.x), len(self.y), len(self.z)

    @property
    def num_nodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def spacing(self) -> tuple[float, float, float]:
        """Uniform channel spacings (hx, hy, hz)."""
        return tuple(
            float(c[hi] - c[lo]) / (hi - lo) for c, lo, hi in zip(self.coords, self.chan_lo, self.chan_hi)
        )

    def channel_node_ranges(self) -> list[np.ndarray]:
        """Grid indices of the k.p nodes along each axis (hard wall or periodic)."""
        out = []
        for ax in range(3):
            lo, hi = self.chan_lo[ax], self.chan_hi[ax]
            if self.bc[ax] == "periodic":
                out.append(np.arange(lo, hi))
            else:
                out.append(np.arange(lo + 1, hi))
        return out

    def channel_shape(self) -> tuple[int, int, int]:
        return tuple(len(r) for r in self.channel_node_ranges())

    def channel_points(self) -> np.ndarray:
        """(N, 3) coordinates of k.p nodes, x slowest."""
        rx, ry, rz = self.channel_node_ranges()
        X, Y, Z = np.meshgrid(self.x[rx], self.y[ry], self.z[rz], indexing="ij")
        return np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)

    def channel_flat_index(self) -> np.ndarray:
        """Flat mesh-node indices of the k.p nodes, in k.p ordering."""
        rx, ry, rz = self.channel_node_ranges()
        I, J, K = np.meshgrid(rx, ry, rz, indexing="ij")
        return np.ravel_multi_index((I.ravel(), J.ravel(), K.ravel()), self.shape)

    def node_region(self) -> np.ndarray:
        """Region index for every node: the region of an adjacent cell.

        Nodes inside the channel get the channel index; other nodes take the
        lowest-index cell among their neighbours so the map is total.
        """
        nx, ny, nz = self.shape
        pad = np.full((nx + 1, ny + 1, nz + 1), np.iinfo(np.int64).max, dtype=np.int64)
        pad[1:nx, 1:ny, 1:nz] = np.where(self.cell_region < 0, 10**6 - self.cell_region, self.cell_region)
        out = pad[:-1, :-1, :-1]
        for di in (0, 1):
            for dj in (0, 1):
                for dk in (0, 1):
                    out = np.minimum(out, pad[di:di + nx, dj:dj + ny, dk:dk + nz])
        out = np.where(out >= 10**6, 10**6 - out, out)
        return out

    def hash(self) -> str:
        h = hashlib.sha256()
        for arr in (self.x, self.y, self.z, self.cell_region, self.permittivity):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update(repr((self.chan_lo, self.chan_hi, self.bc)).encode())
        return h.hexdigest()[:16]


def _axis_coords(breaks: np.ndarray, chan: tuple[float, float] | None, target: float) -> np.ndarray:
    """Piecewise-uniform coordinates; the channel interval is uniform."""
    if chan is None:
        chan = (breaks[0], breaks[1])
    c0, c1 = chan
    n_chan = max(2, int(round((c1 - c0) / target)))
    h_chan = (c1 - c0) / n_chan
    if abs(h_chan / target - 1) > 0.25:
        raise SpacingTooCoarse(f"channel extent {c1 - c0} nm cannot be meshed near {target} nm")
    for b in breaks:
        if c0 < b < c1:
            k = (b - c0) / h_chan
            if abs(k - round(k)) > 1e-6:
                raise SpacingTooCoarse(f"plane at {b} nm is not commensurate with channel spacing {h_chan}")
    pts = [c0 + h_chan * np.arange(n_chan + 1)]
    outside = [b for b in breaks if b <= c0 + _GEOM_TOL or b >= c1 - _GEOM_TOL]
    outside = np.unique(np.concatenate([outside, [c0, c1]]))
    for a, b in zip(outside[:-1], outside[1:]):
        if a >= c0 - _GEOM_TOL and b <= c1 + _GEOM_TOL:
            continue
        n = max(1, int(round((b - a) / target)))
        h = (b - a) / n
        if abs(h / target - 1) > 0.25:
            raise SpacingTooCoarse(f"interval [{a}, {b}] nm cannot be meshed near {target} nm")
        pts.append(a + h * np.arange(n + 1))
    coords = np.unique(np.round(np.concatenate(pts), 10))
    return coords


def build_mesh(device: DeviceModel, target_spacing) -> Mesh:
    """Mesh the simulation box with every region and gate face on a mesh plane.

    ``target_spacing`` is a length or a per-axis triple. The channel interval is
    uniform along each axis; planes inside it must be commensurate.
    """
    targets = np.broadcast_to(np.asarray(target_spacing, dtype=float), (3,))
    if np.any(targets <= 0):
        raise SpacingTooCoarse("target spacing must be positive")
    chan = device.channel_box if device.channel is not None else None
    coords = []
    for ax in range(3):
        breaks = {device.sim_box.lo[ax], device.sim_box.hi[ax]}
        for r in device.regions:
            breaks.update((r.box.lo[ax], r.box.hi[ax]))
        for g in device.gates:
            breaks.update((g.box.lo[ax], g.box.hi[ax]))
        breaks = np.array(sorted(breaks))
        span = None if chan is None else (chan.lo[ax], chan.hi[ax])
        coords.append(_axis_coords(breaks, span, float(targets[ax])))
    x, y, z = coords
    if min(len(x), len(y), len(z)) < 3:
        raise SpacingTooCoarse("mesh needs at least 3 nodes per axis")

    centers = [0.5 * (c[1:] + c[:-1]) for c in coords]
    CX, CY, CZ = np.meshgrid(*centers, indexing="ij")
    cell_region = np.full(CX.shape, -1, dtype=np.int64)
    if device.background is None:
        cell_region[:] = -3
    for idx, r in enumerate(device.regions):
        m = ((CX > r.box.lo[0]) & (CX < r.box.hi[0]) & (CY > r.box.lo[1]) & (CY < r.box.hi[1])
             & (CZ > r.box.lo[2]) & (CZ < r.box.hi[2]))
        cell_region[m] = idx
    for g in device.gates:
        m = ((CX > g.box.lo[0]) & (CX < g.box.hi[0]) & (CY > g.box.lo[1]) & (CY < g.box.hi[1])
             & (CZ > g.box.lo[2]) & (CZ < g.box.hi[2]))
        cell_region[m] = -2
    if np.any(cell_region == -3):
        raise ValidationError("mesh cells not covered by any region")

    eps = np.ones(cell_region.shape)
    for idx, r in enumerate(device.regions):
        eps[cell_region == idx] = device.material(r.material).permittivity
    if device.background is not None:
        eps[cell_region == -1] = device.material(device.background).permittivity

    def index_of(c, v):
        i = int(np.argmin(np.abs(c - v)))
        assert abs(c[i] - v) < 1e-6
        return i

    if chan is None:
        chan_lo, chan_hi = (0, 0, 0), tuple(len(c) - 1 for c in coords)
    else:
        chan_lo = tuple(index_of(c, chan.lo[ax]) for ax, c in enumerate(coords))
        chan_hi = tuple(index_of(c, chan.hi[ax]) for ax, c in enumerate(coords))
    bc = ("periodic" if device.periodic_x else "hard-wall", "hard-wall", "hard-wall")
    for ax in range(3):
        n_inner = chan_hi[ax] - chan_lo[ax] - (0 if bc[ax] == "periodic" else 1)
        if n_inner < 1:
            raise SpacingTooCoarse(f"channel has no interior nodes along {AXES[ax]}")
    return Mesh(
        x=x, y=y, z=z, cell_region=cell_region, chan_lo=chan_lo, chan_hi=chan_hi, bc=bc,
        region_names=tuple(r.name for r in device.regions), permittivity=eps,
    )
