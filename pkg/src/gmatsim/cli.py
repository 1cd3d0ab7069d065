"""Command-line front end: solve, rabimap, sweep, check and symmetry.

Runs are described by an INI file::

    [run]
    device = preset:desk          ; or a path to a device file
    spacing = 1.0 1.0 0.8
    bias = fg=-0.1, bg=0.0
    drive_gate = fg
    B = 1.0                       ; tesla (or fixed_zeeman_ghz = 9)
    v_ac = 0.001
    theta = 0 180 37              ; start stop count, degrees
    phi = 0 180 37

    [flags]
    peierls = yes
    bloch_zeeman = yes
    strain = yes
    gamma3_override =
    gamma3_scope = all

    [sweep]
    kind = voltage                ; or strain
    gate = bg
    values = -0.2 0.0 5           ; start stop count
    pairs = 4
    orientation = 45 90           ; theta phi of b for the f_R column
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__, presets
from .cache import EigenCache
from .constants import H_PLANCK, MU_B
from .device import DeviceModel, biaxial_strain, build_mesh, load_device
from .errors import GmatsimError, SolverError, UnknownGate, ValidationError
from .gmatrix import (
    GMatrixSet,
    dipole_element,
    perturbation_series,
    principal_g_by_axis,
    rabi_direct,
    rabi_from_g,
    rabi_map_arrays,
    split_tmr_izr,
    su2_from_angles,
    su2_to_so3,
    svd_decompose,
)
from .kp import CouplingFlags, direction, hh_weight
from .pipeline import DevicePipeline
from .reference import brute_force_rabi
from .spectrum import dense_states
from .symmetry import (
    channel_mirrors,
    field_parities,
    g_pattern,
    g_prime_pattern,
    operator_mirror_error,
    predict_extinctions,
    symmetry_adapted_rotation,
    adapt_matrices,
    verify_pattern,
)

log = logging.getLogger("gmatsim")

PRESETS = {
    "desk": (presets.desk_device, presets.DESK_SPACING),
    "longitudinal": (presets.longitudinal_device, presets.DESK_SPACING),
    "d2h-toy": (presets.d2h_toy, presets.DESK_SPACING),
    "film": (presets.film_box, presets.FILM_SPACING),
    "gated-strained-film": (presets.gated_strained_film, (1.5, 1.5, 1.0)),
    "nanowire": (presets.nanowire_device, (1.0, 1.0, 0.5)),
}
GAMMA3_COLLAPSE = 0.25


def _grid(text: str, name: str) -> np.ndarray:
    """"start stop n" is a linspace; a comma-separated list is taken literally."""
    parts = text.replace(",", " ").split()
    if len(parts) == 3 and "," not in text:
        start, stop, n = float(parts[0]), float(parts[1]), int(float(parts[2]))
        if n < 1:
            raise ValidationError(f"{name} grid is empty")
        return np.round(np.linspace(start, stop, n), 12) + 0.0
    vals = np.array([float(p) for p in parts])
    if vals.size == 0:
        raise ValidationError(f"{name} grid is empty")
    return vals


def _bias(text: str) -> dict:
    out = {}
    for item in text.replace(";", ",").split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise ValidationError(f"bias entry {item!r} must read gate=volts")
        k, v = item.split("=", 1)
        out[k.strip()] = float(v)
    return out


@dataclass
class RunConfig:
    device: str = "preset:desk"
    spacing: tuple | None = None
    bias: dict = field(default_factory=dict)
    drive_gate: str | None = None
    delta_v: float = 1e-3
    delta_b: float = 1e-4
    B: float | None = 1.0
    fixed_zeeman_ghz: float | None = None
    v_ac: float = 1e-3
    theta: np.ndarray = field(default_factory=lambda: np.linspace(0, 180, 37))
    phi: np.ndarray = field(default_factory=lambda: np.linspace(0, 180, 37))
    flags: CouplingFlags = field(default_factory=CouplingFlags)
    solver: str = "auto"
    output: str | None = None
    cache: str | None = None
    threads: int = 1
    fmt: str = "csv"
    sweep_kind: str = "voltage"
    sweep_gate: str | None = None
    sweep_values: np.ndarray = field(default_factory=lambda: np.array([]))
    sweep_pairs: int = 4
    orientation: tuple = (45.0, 90.0)
    check_pairs: int = 25

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if len(self.theta) == 0 or len(self.phi) == 0:
            raise ValidationError("orientation grids must be nonempty")
        has_b = self.B is not None and self.B > 0
        has_e = self.fixed_zeeman_ghz is not None and self.fixed_zeeman_ghz > 0
        if has_b == has_e:
            raise ValidationError("give exactly one of B > 0 or fixed_zeeman_ghz > 0")
        if self.v_ac <= 0 or self.delta_v <= 0 or self.delta_b <= 0:
            raise ValidationError("v_ac, delta_v and delta_b must be positive")
        if self.threads < 1:
            raise ValidationError("threads must be >= 1")
        if self.sweep_kind not in ("voltage", "strain"):
            raise ValidationError("sweep kind must be voltage or strain")

    @classmethod
    def from_text(cls, text: str, base: Path | None = None) -> "RunConfig":
        cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        cp.read_string(text)
        run = cp["run"] if cp.has_section("run") else {}
        kw: dict = {}
        if "device" in run:
            dev = run["device"].strip()
            if not dev.startswith("preset:") and base is not None and not Path(dev).is_absolute():
                dev = str(base / dev)
            kw["device"] = dev
        if run.get("spacing"):
            sp = [float(v) for v in run["spacing"].replace(",", " ").split()]
            kw["spacing"] = tuple(sp) if len(sp) == 3 else (sp[0],) * 3
        if "bias" in run:
            kw["bias"] = _bias(run["bias"])
        for key, conv in (("drive_gate", str), ("solver", str), ("output", str), ("cache", str), ("format", str)):
            if run.get(key):
                kw["fmt" if key == "format" else key] = conv(run[key]).strip()
        for key in ("output", "cache"):
            if key in kw and base is not None and not Path(kw[key]).is_absolute():
                kw[key] = str(base / kw[key])
        for key in ("delta_v", "delta_b", "v_ac"):
            if run.get(key):
                kw[key] = float(run[key])
        if run.get("fixed_zeeman_ghz"):
            kw["fixed_zeeman_ghz"] = float(run["fixed_zeeman_ghz"])
            kw["B"] = None
        elif run.get("B"):
            kw["B"] = float(run["B"])
        if run.get("threads"):
            kw["threads"] = int(run["threads"])
        if run.get("theta"):
            kw["theta"] = _grid(run["theta"], "theta")
        if run.get("phi"):
            kw["phi"] = _grid(run["phi"], "phi")
        if cp.has_section("flags"):
            f = cp["flags"]
            g3 = f.get("gamma3_override", "").strip()
            kw["flags"] = CouplingFlags(
                peierls_on=f.getboolean("peierls", True),
                bloch_zeeman_on=f.getboolean("bloch_zeeman", True),
                strain_on=f.getboolean("strain", True),
                gamma3_override=float(g3) if g3 else None,
                gamma3_scope=f.get("gamma3_scope", "all").strip() or "all",
            )
        if cp.has_section("sweep"):
            s = cp["sweep"]
            kw["sweep_kind"] = s.get("kind", "voltage").strip()
            if s.get("gate"):
                kw["sweep_gate"] = s["gate"].strip()
            if "values" in s:
                kw["sweep_values"] = _grid(s["values"], "sweep")
            if s.get("pairs"):
                kw["sweep_pairs"] = int(s["pairs"])
            if s.get("orientation"):
                t, p = (float(v) for v in s["orientation"].replace(",", " ").split())
                kw["orientation"] = (t, p)
        if cp.has_section("check") and cp["check"].get("pairs"):
            kw["check_pairs"] = int(cp["check"]["pairs"])
        return cls(**kw)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        p = Path(path)
        return cls.from_text(p.read_text(), p.parent)

    def hash(self) -> str:
        payload = json.dumps(
            {
                "device": self.device, "spacing": self.spacing, "bias": sorted(self.bias.items()),
                "drive": self.drive_gate, "dv": self.delta_v, "db": self.delta_b, "B": self.B,
                "dE": self.fixed_zeeman_ghz, "vac": self.v_ac, "theta": list(map(float, self.theta)),
                "phi": list(map(float, self.phi)), "flags": [repr(f) for f in self.flags.key()],
                "version": __version__,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


# --------------------------------------------------------------------------
# shared setup


def resolve_device(config: RunConfig) -> tuple[DeviceModel, tuple]:
    if config.device.startswith("preset:"):
        name = config.device.split(":", 1)[1]
        if name not in PRESETS:
            raise ValidationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        make, spacing = PRESETS[name]
        dev = make()
    else:
        dev = load_device(config.device)
        spacing = (1.0, 1.0, 1.0)
    return dev, tuple(config.spacing or spacing)


def make_pipeline(config: RunConfig, device: DeviceModel | None = None, flags: CouplingFlags | None = None,
                  gauge_origin=None) -> DevicePipeline:
    dev, spacing = resolve_device(config)
    dev = device or dev
    for g in config.bias:
        if g not in dev.gate_names:
            raise UnknownGate(f"bias names unknown gate {g!r}; device gates are {dev.gate_names}")
    if config.drive_gate is not None and config.drive_gate not in dev.gate_names:
        raise UnknownGate(f"unknown drive gate {config.drive_gate!r}")
    mesh = build_mesh(dev, spacing)
    cache = EigenCache(config.cache) if config.cache else None
    return DevicePipeline(
        dev, mesh, flags or config.flags, solver=config.solver, delta_b=config.delta_b, cache=cache,
        gauge_origin=gauge_origin,
    )


def _drive_gate(config: RunConfig, device: DeviceModel) -> str:
    if config.drive_gate:
        return config.drive_gate
    if not device.gate_names:
        raise ValidationError("device has no gates to drive")
    return device.gate_names[0]


def _write(config: RunConfig, name: str, text: str) -> Path | None:
    if not config.output:
        return None
    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    p = out / name
    p.write_text(text)
    return p


# --------------------------------------------------------------------------
# solve


@dataclass
class SolveResult:
    gset: GMatrixSet
    energies: np.ndarray
    pipeline: DevicePipeline = field(repr=False)
    path: Path | None = None


def cmd_solve(config: RunConfig, pipeline: DevicePipeline | None = None) -> SolveResult:
    """Poisson, k.p and eigensolves at V0 - dV, V0, V0 + dV; emits the GMatrixSet."""
    pl = pipeline or make_pipeline(config)
    gate = _drive_gate(config, pl.device)
    gset = pl.gmatrix_set(gate, config.bias, config.delta_v)
    es = pl.eigenstates(config.bias, 2)
    d = gset.to_dict()
    d["config_hash"] = config.hash()
    path = _write(config, "gmatrix.json", json.dumps(d, indent=2, sort_keys=True))
    return SolveResult(gset, es.energies, pl, path)


# --------------------------------------------------------------------------
# rabimap


@dataclass
class RabiMap:
    theta: np.ndarray
    phi: np.ndarray
    g_star: np.ndarray
    f_rabi: np.ndarray
    B: np.ndarray
    metadata: dict = field(default_factory=dict)

    COLUMNS = ("theta_deg", "phi_deg", "g_star", "f_rabi_hz", "B_tesla")

    @property
    def maximum(self) -> float:
        return float(np.nanmax(self.f_rabi))

    def rows(self):
        return zip(self.theta, self.phi, self.g_star, self.f_rabi, self.B)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# {json.dumps(self.metadata, sort_keys=True)}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for row in self.rows():
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {"metadata": self.metadata, "columns": list(self.COLUMNS),
             "rows": [[float(v) for v in r] for r in self.rows()]},
            sort_keys=True,
        )


def orientation_grid(theta: np.ndarray, phi: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    T, P = np.meshgrid(theta, phi, indexing="ij")
    t, p = T.ravel(), P.ravel()
    tr, pr = np.radians(t), np.radians(p)
    bs = np.stack([np.sin(tr) * np.sin(pr), np.sin(tr) * np.cos(pr), np.cos(tr)], axis=1)
    return t, p, bs


def rabi_map(gset: GMatrixSet, theta, phi, v_ac: float, B: float | None = None, fixed_zeeman_ghz: float | None = None,
             threads: int = 1, metadata: dict | None = None) -> RabiMap:
    """f_R on an orientation grid from one GMatrixSet; no eigensolves."""
    t, p, bs = orientation_grid(np.asarray(theta, float), np.asarray(phi, float))
    gs_all = np.linalg.norm(bs @ gset.g.T, axis=1)
    if fixed_zeeman_ghz is not None:
        with np.errstate(divide="ignore"):
            Bs = np.where(gs_all > 0, H_PLANCK * fixed_zeeman_ghz * 1e9 / (gs_all * MU_B), np.nan)
    else:
        Bs = np.full(len(bs), float(B))
    chunks = np.array_split(np.arange(len(bs)), max(1, threads))

    def work(idx):
        return rabi_map_arrays(gset.g, gset.g_prime, bs[idx], Bs[idx], v_ac)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    g_star = np.concatenate([a for a, _ in parts])
    f = np.concatenate([b for _, b in parts])
    meta = dict(metadata or {})
    meta.update({"v_ac": v_ac, "B": B, "fixed_zeeman_ghz": fixed_zeeman_ghz, "zero_larmor_rows": int(np.sum(g_star == 0))})
    return RabiMap(t, p, g_star, f, Bs, meta)


def cmd_rabimap(config: RunConfig, gset: GMatrixSet | None = None) -> RabiMap:
    if gset is None:
        gset = cmd_solve(config).gset
    meta = {"bias": gset.bias, "gate": gset.gate, "device_hash": gset.basis.get("device_hash"),
            "config_hash": config.hash()}
    rm = rabi_map(gset, config.theta, config.phi, config.v_ac, config.B, config.fixed_zeeman_ghz, config.threads, meta)
    _write(config, "rabimap.json" if config.fmt == "json" else "rabimap.csv",
           rm.to_json() if config.fmt == "json" else rm.to_csv())
    return rm


# --------------------------------------------------------------------------
# sweep


def _sweep_point(pl: DevicePipeline, bias: dict, gate: str | None, config: RunConfig, b: np.ndarray) -> dict:
    row: dict = {}
    pairs = max(1, config.sweep_pairs)
    doublets = pl.doublets(bias, pairs)
    e0 = doublets[0].energy
    for n, d in enumerate(doublets[1:], start=1):
        row[f"dE{n}_meV"] = e0 - d.energy
    row["hh_weight"] = float(hh_weight(doublets[0].states).mean())
    g = pl.g(bias, doublets[0])
    gx, gy, gz = principal_g_by_axis(g)
    row.update(g_x=gx, g_y=gy, g_z=gz)
    if gate is not None:
        gset = pl.gmatrix_set(gate, bias, config.delta_v)
        gp = np.diag(gset.g_prime)
        row.update(gp_xx=gp[0], gp_yy=gp[1], gp_zz=gp[2])
        B = config.B or 1.0
        try:
            row["f_rabi_hz"] = rabi_from_g(gset.g, gset.g_prime, b, B, config.v_ac).f_rabi
        except GmatsimError:
            row["f_rabi_hz"] = float("nan")
        if len(doublets) > 1:
            br = perturbation_series(doublets[0], doublets[1:], pl.moment, pl.d1_nodes(gate), b, B, config.v_ac)
            row["dominant_share"] = br.dominant_share()
    return row


def cmd_sweep(config: RunConfig) -> list[dict]:
    """Per-point spectra, g-factors and f_R; failures are recorded and the sweep continues."""
    if len(config.sweep_values) == 0:
        raise ValidationError("sweep grid is empty")
    base = make_pipeline(config)
    gate = config.drive_gate or (base.device.gate_names[0] if base.device.gate_names else None)
    b = direction(*config.orientation)
    param = "strain" if config.sweep_kind == "strain" else "voltage"
    if config.sweep_kind == "voltage":
        sg = config.sweep_gate or gate
        if sg not in base.device.gate_names:
            raise UnknownGate(f"unknown sweep gate {sg!r}")

    def run(value):
        row = {param: float(value)}
        try:
            if config.sweep_kind == "voltage":
                bias = dict(config.bias)
                bias[sg] = float(value)
                pl = base
            else:
                bias = dict(config.bias)
                dev = base.device.with_strain(biaxial_strain(float(value), base.device.channel_material))
                pl = DevicePipeline(dev, base.mesh, config.flags, config.solver, config.delta_b, cache=base.cache)
                pl._poisson = base.poisson if bias else None
                pl._responses = base._responses
            row.update(_sweep_point(pl, bias, gate if bias or config.sweep_kind == "voltage" else None, config, b))
            row["error"] = ""
        except GmatsimError as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
        return row

    if config.threads > 1:
        with ThreadPoolExecutor(config.threads) as ex:
            rows = list(ex.map(run, config.sweep_values))
    else:
        rows = [run(v) for v in config.sweep_values]
    cols = [param]
    for r in rows:
        for k in r:
            if k not in cols and k != "error":
                cols.append(k)
    cols.append("error")
    buf = io.StringIO()
    buf.write(f"# config_hash={config.hash()}\n")
    w = csv.DictWriter(buf, fieldnames=cols, restval="", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    _write(config, "sweep.csv", buf.getvalue())
    return rows


# --------------------------------------------------------------------------
# check


def _check(name, value, tol, passed=None, **extra) -> dict:
    ok = bool(value <= tol) if passed is None else bool(passed)
    return {"name": name, "value": float(value), "tolerance": float(tol), "passed": ok, **extra}


CHECK_GROUPS = ("spectra", "formalism", "series", "gauge", "gamma3")


def _formalism_checks(checks, gset, factory, bias, d1, v_ac, orientations, rng):
    """Agreement of the g-matrix Rabi formula with finite-field dense runs."""
    angles = [(90.0, 0.0), (45.0, 0.0)] + [tuple(v) for v in rng.uniform([10, 0], [170, 180], (orientations - 2, 2))]
    worst = {0.1: 0.0, 1.0: 0.0}
    lin = 0.0
    for th, ph in angles:
        b = direction(th, ph)
        for B in worst:
            r = rabi_from_g(gset.g, gset.g_prime, b, B, v_ac)
            bf = brute_force_rabi(factory, bias, b, B, v_ac, d1).value
            worst[B] = max(worst[B], abs(bf["f_rabi"] / r.f_rabi - 1))
            if B <= 0.5:
                lin = max(lin, abs(bf["splitting"] / (r.g_star * MU_B * B) - 1))
    checks.append(_check("rabi_g_vs_direct_B0.1", worst[0.1], 0.01))
    checks.append(_check("rabi_g_vs_direct_B1", worst[1.0], 0.05))
    checks.append(_check("zeeman_linearity", lin, 1e-3))


def cmd_check(config: RunConfig, orientations: int = 5, skip=()) -> dict:
    """Cross-formula and invariance checks on a dense-solvable instance.

    ``skip`` names check groups from CHECK_GROUPS to leave out (the cheap
    Richardson, selection-rule and tensor-identity checks always run).
    """
    unknown = set(skip) - set(CHECK_GROUPS)
    if unknown:
        raise ValidationError(f"unknown check groups {sorted(unknown)}")
    t0 = time.time()
    pl = make_pipeline(config)
    gate = _drive_gate(config, pl.device)
    bias = config.bias
    checks = []
    op = pl.operator(bias)
    checks.append(_check("hermiticity", op.hermiticity_error(), 1e-12))

    gset = pl.gmatrix_set(gate, bias, config.delta_v)
    # Richardson: halve the steps
    gp_half = pl.g_prime(gate, bias, config.delta_v / 2)[0]
    scale = max(np.abs(gset.g_prime).max(), 1e-30)
    checks.append(_check("richardson_delta_v", np.abs(gp_half - gset.g_prime).max() / scale, 1e-3,
                         delta_v=config.delta_v))
    pl_half = DevicePipeline(pl.device, pl.mesh, pl.flags, pl.solver, config.delta_b / 2)
    pl_half._responses = pl._responses
    d0 = pl.ground_doublet(bias)
    g_half = pl_half.g(bias, d0)
    checks.append(_check("richardson_delta_b", np.abs(g_half - gset.g).max() / np.abs(gset.g).max(), 1e-6))

    # time-reversal selection rule at B = 0
    d1 = pl.d1_nodes(gate)
    checks.append(_check("kramers_dipole_zero", abs(dipole_element(d0.up, d0.down, d1)) / np.abs(d1).max(), 1e-12))

    n_pairs = config.check_pairs
    rng = np.random.default_rng(7)
    factory = lambda bb, fv: pl.operator(bb, fv)
    if "spectra" not in skip:
        sparse = DevicePipeline(pl.device, pl.mesh, pl.flags, "sparse").eigenstates(bias, 2 * n_pairs)
        dense = dense_states(op, 2 * n_pairs)
        checks.append(_check("sparse_vs_dense_meV", np.abs(sparse.energies - dense.energies).max(), 1e-8))

    if "formalism" not in skip:
        _formalism_checks(checks, gset, factory, bias, d1, config.v_ac, orientations, rng)

    if "series" not in skip:
        doublets = pl.doublets(bias, n_pairs)
        b = direction(*config.orientation)
        br = perturbation_series(doublets[0], doublets[1:], pl.moment, d1, b, 0.1, config.v_ac)
        direct = brute_force_rabi(factory, bias, b, 0.1, config.v_ac, d1).value["f_rabi"]
        checks.append(_check("perturbation_vs_direct", abs(br.total / direct - 1), 0.10, pairs=len(doublets) - 1))

    # invariances, relative to the map maximum (f_R vanishes at extinction points)
    bs = orientation_grid(np.linspace(5, 175, 7), np.linspace(0, 180, 7))[2]
    _, f0 = rabi_map_arrays(gset.g, gset.g_prime, bs, 1.0, config.v_ac)
    su2 = 0.0
    for _ in range(20):
        R = su2_to_so3(su2_from_angles(*rng.uniform(0, 2 * np.pi, 3)))
        _, f1 = rabi_map_arrays(R.T @ gset.g, R.T @ gset.g_prime, bs, 1.0, config.v_ac)
        su2 = max(su2, np.max(np.abs(f1 - f0)) / np.max(f0))
    checks.append(_check("su2_invariance", su2, 1e-10))
    if "gauge" not in skip:
        shifted = DevicePipeline(pl.device, pl.mesh, pl.flags, pl.solver, config.delta_b,
                                 gauge_origin=pl.device.channel_box.center + np.array([1.7, -2.3, 0.9]))
        shifted._responses = pl._responses
        gs2 = shifted.gmatrix_set(gate, bias, config.delta_v)
        _, f2 = rabi_map_arrays(gs2.g, gs2.g_prime, bs, 1.0, config.v_ac)
        checks.append(_check("gauge_invariance", np.max(np.abs(f2 - f0)) / np.max(f0), 1e-8))

    G = gset.zeeman
    checks.append(_check("zeeman_symmetric", np.abs(G - G.T).max(), 1e-12))
    checks.append(_check("zeeman_psd", max(0.0, -np.linalg.eigvalsh(G).min()), 1e-12))
    U, gd, V = svd_decompose(gset.g)
    checks.append(_check("svd_reconstruction", np.abs(U @ np.diag(gd) @ V.T - gset.g).max(), 1e-12))
    tmr, izr = split_tmr_izr(gset)
    gp_pf = U.T @ gset.g_prime @ V
    checks.append(_check("tmr_izr_complete", np.abs(tmr + izr - gp_pf).max(), 1e-12 * max(1, np.abs(gp_pf).max())))
    A = np.diag(gd) @ izr
    checks.append(_check("izr_antisymmetric", np.abs(A + A.T).max(), 1e-10))

    if "gamma3" not in skip:
        flags0 = replace(pl.flags, gamma3_override=0.0)
        pl0 = DevicePipeline(pl.device, pl.mesh, flags0, pl.solver, config.delta_b)
        pl0._responses = pl._responses
        g0 = pl0.gmatrix_set(gate, bias, config.delta_v)
        _, fz = rabi_map_arrays(g0.g, g0.g_prime, bs, 1.0, config.v_ac)
        ratio = np.nanmax(fz) / np.nanmax(f0)
        checks.append(_check("gamma3_collapse", ratio, GAMMA3_COLLAPSE, scope=flags0.gamma3_scope))

    report = {
        "passed": all(c["passed"] for c in checks),
        "checks": checks,
        "elapsed_s": time.time() - t0,
        "config_hash": config.hash(),
    }
    _write(config, "check.json", json.dumps(report, indent=2, sort_keys=True))
    return report


# --------------------------------------------------------------------------
# symmetry


def cmd_symmetry(config: RunConfig, tol: float = 1e-6) -> dict:
    """Detect exact mirrors, classify the drive field and verify predicted patterns."""
    pl = make_pipeline(config)
    gate = _drive_gate(config, pl.device)
    op = pl.operator(config.bias)
    mirrors = []
    for m in channel_mirrors(pl.device):
        try:
            err = operator_mirror_error(op, m)
        except GmatsimError:
            continue
        if err < 1e-10:
            mirrors.append(m)
    parities = field_parities(pl.response(gate), mirrors, pl.device.channel_box) if mirrors else {}
    gset = pl.gmatrix_set(gate, config.bias, config.delta_v)
    d0 = pl.ground_doublet(config.bias)
    u = symmetry_adapted_rotation(d0, pl.mesh, mirrors)
    g_a, gp_a = adapt_matrices(u, gset.g, gset.g_prime)
    gpat = g_pattern(mirrors)
    gppat = g_prime_pattern(mirrors, parities)
    rep_g = verify_pattern(g_a, gpat, tol)
    rep_gp = verify_pattern(gp_a, gppat, tol) if np.abs(gp_a).max() > 0 else None
    ext = predict_extinctions(gpat, gppat) if mirrors else []
    report = {
        "mirrors": [{"plane": m.name, "position": m.position} for m in mirrors],
        "parities": parities,
        "g_adapted": g_a.tolist(),
        "g_prime_adapted": gp_a.tolist(),
        "g": rep_g.to_dict(),
        "g_prime": None if rep_gp is None else rep_gp.to_dict(),
        "extinctions": ext,
        "config_hash": config.hash(),
    }
    _write(config, "symmetry.json", json.dumps(report, indent=2, sort_keys=True))
    return report


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gmatsim", description="g-matrix and Rabi-frequency simulator for hole spin qubits")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("solve", "rabimap", "sweep", "check", "symmetry"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="run configuration (INI)")
        p.add_argument("--cache", help="eigenpair cache directory")
        p.add_argument("--threads", type=int, help="worker threads")
        p.add_argument("--format", choices=("csv", "json"), help="grid output format")
        p.add_argument("--fixed-zeeman", type=float, metavar="GHZ", help="map at constant Zeeman splitting")
        p.add_argument("--output", help="output directory")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "check":
            p.add_argument("--skip", action="append", default=[], choices=CHECK_GROUPS,
                           help="leave out a check group (repeatable)")
    return ap


def _apply_overrides(config: RunConfig, args) -> RunConfig:
    if args.cache:
        config.cache = args.cache
    if args.threads:
        config.threads = args.threads
    if args.format:
        config.fmt = args.format
    if args.output:
        config.output = args.output
    if args.fixed_zeeman:
        config.fixed_zeeman_ghz = args.fixed_zeeman
        config.B = None
    config.validate()
    return config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        config = _apply_overrides(RunConfig.from_file(args.config), args)
        if args.command == "solve":
            res = cmd_solve(config)
            print(res.gset.to_json())
        elif args.command == "rabimap":
            rm = cmd_rabimap(config)
            print(f"max f_R = {rm.maximum:.6g} Hz over {len(rm.f_rabi)} orientations")
        elif args.command == "sweep":
            rows = cmd_sweep(config)
            print(f"{len(rows)} points, {sum(1 for r in rows if r['error'])} failed")
        elif args.command == "check":
            rep = cmd_check(config, skip=args.skip)
            for c in rep["checks"]:
                print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}: {c['value']:.3e} (tol {c['tolerance']:.1e})")
            return 0 if rep["passed"] else 1
        elif args.command == "symmetry":
            print(json.dumps(cmd_symmetry(config), indent=2, sort_keys=True))
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
