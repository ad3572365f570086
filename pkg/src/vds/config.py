"""Run configuration: TOML text <-> validated :class:`RunConfig`.

The file is flat and sectioned (one table per concern, no deeper nesting)::

    [grid]      dim, L, n            (2D: Lx, Ly, nx, ny)
    [kernel]    form = "prony" | "power" | "zero"; modes = [[c, a], ...]; g0, p
    [witness]   form = "canonical" | "constant" | "hyperbolic"; a
    [delay]     form = "constant" | "sin"; tau, amp, omega
    [damping]   a0, a1
    [solver]    dt_safety, t_end, output_every, engine, snapshots,
                transport_check, n_rho, snapshot_format
    [energy]    N, eps, t0, C7
    [initial]   u0, u1 = "sine" | "gaussian" | "zero" with <f>_modes,
                <f>_amp, <f>_center, <f>_width; f0 = "u1" | "zero"

Parsing reports every violation at once, each prefixed with its key path.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import kernel as kn
from .delay import ConstantDelay, DelayProfile, SinusoidalDelay, sinusoidal_problems
from .feasibility import DampingPair
from .field import Grid


class ConfigError(ValueError):
    def __init__(self, violations: list[str]):
        super().__init__("invalid configuration:\n  " + "\n  ".join(violations))
        self.violations = list(violations)


@dataclass(frozen=True)
class FieldSpec:
    kind: str = "zero"
    modes: tuple[int, ...] = (1,)
    amp: float = 1.0
    center: tuple[float, ...] = ()
    width: float = 0.1

    def build(self, grid: Grid) -> np.ndarray:
        if self.kind == "zero":
            return grid.zeros()
        if self.kind == "sine":
            return grid.sine_mode(self.modes, self.amp)
        center = self.center or tuple(0.5 * e for e in grid.extents)
        return grid.gaussian(center, self.width, self.amp)


@dataclass(frozen=True)
class SolverControls:
    dt_safety: float = 0.5
    t_end: float = 40.0
    output_every: int = 50
    engine: str = "recursive"
    snapshots: tuple[float, ...] = ()
    transport_check: bool = False
    n_rho: int = 64
    snapshot_format: str = "csv"


@dataclass(frozen=True)
class EnergyControls:
    N: float = 10.0
    eps: float = 0.01
    t0: float | None = None
    C7: float = 1.0


@dataclass(frozen=True)
class RunConfig:
    grid: Grid = field(default_factory=lambda: Grid.line(1.0, 256))
    kernel: kn.RelaxationKernel = field(default_factory=lambda: kn.PronySum(((0.5, 1.0),)))
    witness: kn.DecayWitness = field(default_factory=lambda: kn.Constant(1.0))
    delay: DelayProfile = field(default_factory=lambda: ConstantDelay(1.0))
    damping: DampingPair = field(default_factory=lambda: DampingPair(1.0, 0.5))
    solver: SolverControls = field(default_factory=SolverControls)
    energy: EnergyControls = field(default_factory=EnergyControls)
    u0: FieldSpec = field(default_factory=lambda: FieldSpec("sine"))
    u1: FieldSpec = field(default_factory=FieldSpec)
    f0: str = "u1"

    @property
    def fit_t0(self) -> float:
        return self.energy.t0 if self.energy.t0 is not None else 2.0 * self.delay.tau_max

    def with_updates(self, **kw) -> "RunConfig":
        return replace(self, **kw)


SECTIONS: dict[str, set[str]] = {
    "grid": {"dim", "L", "n", "Lx", "Ly", "nx", "ny"},
    "kernel": {"form", "modes", "g0", "p"},
    "witness": {"form", "a"},
    "delay": {"form", "tau", "amp", "omega"},
    "damping": {"a0", "a1"},
    "solver": {"dt_safety", "t_end", "output_every", "engine", "snapshots", "transport_check", "n_rho", "snapshot_format"},
    "energy": {"N", "eps", "t0", "C7"},
    "initial": {
        f"{f}{suffix}" for f in ("u0", "u1") for suffix in ("", "_modes", "_amp", "_center", "_width")
    } | {"f0"},
}


class _Reader:
    """Typed access to one section, recording violations instead of raising."""

    def __init__(self, name: str, table: Any, errors: list[str]):
        self.name = name
        self.errors = errors
        if not isinstance(table, dict):
            errors.append(f"{name}: expected a table, got {type(table).__name__}")
            table = {}
        self.table = table
        for key in table:
            if key not in SECTIONS[name]:
                errors.append(f"{name}.{key}: unknown key")

    def err(self, key: str, msg: str) -> None:
        self.errors.append(f"{self.name}.{key}: {msg}" if key else f"{self.name}: {msg}")

    def has(self, key: str) -> bool:
        return key in self.table

    def number(self, key: str, default=None, *, positive=False, nonneg=False, integer=False):
        if key not in self.table:
            if default is None:
                self.err(key, "required")
            return default
        val = self.table[key]
        ok_type = isinstance(val, int) if integer else isinstance(val, (int, float))
        if isinstance(val, bool) or not ok_type:
            self.err(key, f"expected {'an integer' if integer else 'a number'}, got {val!r}")
            return default
        if not math.isfinite(val):
            self.err(key, f"must be finite, got {val!r}")
            return default
        if positive and not val > 0:
            self.err(key, f"must be > 0, got {val!r}")
            return default
        if nonneg and val < 0:
            self.err(key, f"must be >= 0, got {val!r}")
            return default
        return val if integer else float(val)

    def choice(self, key: str, options: tuple[str, ...], default: str | None):
        if key not in self.table:
            if default is None:
                self.err(key, "required")
            return default
        val = self.table[key]
        if val not in options:
            self.err(key, f"expected one of {', '.join(options)}, got {val!r}")
            return default
        return val

    def boolean(self, key: str, default: bool) -> bool:
        val = self.table.get(key, default)
        if not isinstance(val, bool):
            self.err(key, f"expected true/false, got {val!r}")
            return default
        return val

    def numbers(self, key: str, default: tuple, *, integer=False) -> tuple:
        if key not in self.table:
            return default
        val = self.table[key]
        kind = int if integer else (int, float)
        if not isinstance(val, list) or any(isinstance(x, bool) or not isinstance(x, kind) for x in val):
            self.err(key, f"expected a list of {'integers' if integer else 'numbers'}, got {val!r}")
            return default
        return tuple(int(x) if integer else float(x) for x in val)


def _parse_grid(r: _Reader):
    dim = r.number("dim", 1, integer=True)
    if dim == 1:
        for k in ("Lx", "Ly", "nx", "ny"):
            if r.has(k):
                r.err(k, "only valid for dim = 2")
        length = r.number("L", 1.0, positive=True)
        n = r.number("n", 256, integer=True, positive=True)
        if length is None or n is None:
            return None
        return Grid.line(length, n)
    if dim == 2:
        for k in ("L", "n"):
            if r.has(k):
                r.err(k, "use Lx/Ly and nx/ny for dim = 2")
        lx = r.number("Lx", 1.0, positive=True)
        ly = r.number("Ly", 1.0, positive=True)
        nx = r.number("nx", 64, integer=True, positive=True)
        ny = r.number("ny", 64, integer=True, positive=True)
        if None in (lx, ly, nx, ny):
            return None
        if not math.isclose(lx / (nx + 1), ly / (ny + 1), rel_tol=1e-12):
            r.err("", f"2D cells must be square: Lx/(nx+1) = {lx / (nx + 1):g} != Ly/(ny+1) = {ly / (ny + 1):g}")
            return None
        return Grid.rectangle(lx, ly, nx, ny)
    r.err("dim", f"must be 1 or 2, got {dim!r}")
    return None


def _parse_kernel(r: _Reader):
    form = r.choice("form", ("prony", "power", "zero"), "prony")
    try:
        if form == "prony":
            modes = r.table.get("modes", [[0.5, 1.0]])
            if not (
                isinstance(modes, list)
                and modes
                and all(isinstance(m, list) and len(m) == 2 and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in m) for m in modes)
            ):
                r.err("modes", f"expected a non-empty list of [c, a] pairs, got {modes!r}")
                return None
            return kn.PronySum(tuple((float(c), float(a)) for c, a in modes))
        if form == "power":
            g0 = r.number("g0", 0.5, positive=True)
            p = r.number("p", 2.0)
            if g0 is None or p is None:
                return None
            return kn.PowerLaw(g0, p)
        if form == "zero":
            return kn.Zero()
    except kn.KernelError as exc:
        r.err("", str(exc))
    return None


def _parse_witness(r: _Reader, kernel):
    form = r.choice("form", ("canonical", "constant", "hyperbolic"), "canonical")
    if kernel is None:
        return None
    canon = kn.canonical_witness(kernel)
    if form == "canonical":
        if r.has("a"):
            r.err("a", "not allowed with form = canonical")
        return canon
    a = r.number("a", canon.a, positive=True)
    if a is None:
        return None
    return kn.Constant(a) if form == "constant" else kn.Hyperbolic(a)


def _parse_delay(r: _Reader):
    form = r.choice("form", ("constant", "sin"), "constant")
    tau = r.number("tau", 1.0, positive=True)
    if form == "constant":
        for k in ("amp", "omega"):
            if r.has(k):
                r.err(k, "only valid for form = sin")
        return ConstantDelay(tau) if tau is not None else None
    amp = r.number("amp", 0.0, nonneg=True)
    omega = r.number("omega", 0.0, nonneg=True)
    if None in (tau, amp, omega):
        return None
    problems = sinusoidal_problems(tau, amp, omega)
    if problems:
        for p in problems:
            r.err("", p)
        return None
    return SinusoidalDelay(tau, amp, omega)


def _parse_field(r: _Reader, name: str, default_kind: str, dim: int) -> FieldSpec | None:
    kind = r.choice(name, ("sine", "gaussian", "zero"), default_kind)
    modes = r.numbers(f"{name}_modes", (1,) * dim, integer=True)
    amp = r.number(f"{name}_amp", 1.0)
    center = r.numbers(f"{name}_center", ())
    width = r.number(f"{name}_width", 0.1, positive=True)
    if kind == "sine" and len(modes) != dim:
        r.err(f"{name}_modes", f"need {dim} mode number(s), got {list(modes)}")
        return None
    if any(m < 1 for m in modes):
        r.err(f"{name}_modes", "mode numbers must be >= 1")
        return None
    if center and len(center) != dim:
        r.err(f"{name}_center", f"need {dim} coordinate(s), got {list(center)}")
        return None
    if kind is None or amp is None or width is None:
        return None
    return FieldSpec(kind, modes, amp, center, width)


def parse_config(source: str | dict) -> RunConfig:
    """Parse TOML text (or an already-loaded mapping) into a RunConfig.

    Raises ConfigError carrying the full list of violations.
    """
    errors: list[str] = []
    if isinstance(source, str):
        try:
            data = tomllib.loads(source)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError([f"syntax: {exc}"]) from None
    else:
        data = source
    for key in data:
        if key not in SECTIONS:
            errors.append(f"{key}: unknown section")
    sec = {name: _Reader(name, data.get(name, {}), errors) for name in SECTIONS}

    grid = _parse_grid(sec["grid"])
    kernel = _parse_kernel(sec["kernel"])
    witness = _parse_witness(sec["witness"], kernel)
    delay = _parse_delay(sec["delay"])

    d = sec["damping"]
    a0 = d.number("a0", 1.0, positive=True)
    a1 = d.number("a1", 0.5)
    damping = DampingPair(a0, a1) if None not in (a0, a1) else None

    s = sec["solver"]
    engine = s.choice("engine", ("recursive", "direct"), "recursive")
    if engine == "recursive" and isinstance(kernel, kn.PowerLaw):
        s.err("engine", "recursive engine requires Prony kernel")
    snapshots = s.numbers("snapshots", ())
    if any(x < 0 for x in snapshots):
        s.err("snapshots", "snapshot times must be >= 0")
    solver = SolverControls(
        dt_safety=s.number("dt_safety", 0.5, positive=True),
        t_end=s.number("t_end", 40.0, positive=True),
        output_every=s.number("output_every", 50, integer=True, positive=True),
        engine=engine,
        snapshots=snapshots,
        transport_check=s.boolean("transport_check", False),
        n_rho=s.number("n_rho", 64, integer=True, positive=True),
        snapshot_format=s.choice("snapshot_format", ("csv", "binary"), "csv"),
    )
    if solver.dt_safety is not None and solver.dt_safety > 1.0:
        s.err("dt_safety", f"{solver.dt_safety:g} > 1 exceeds the leapfrog stability limit")

    e = sec["energy"]
    t0 = e.number("t0", None, nonneg=True) if e.has("t0") else None
    energy = EnergyControls(
        N=e.number("N", 10.0, positive=True),
        eps=e.number("eps", 0.01, positive=True),
        t0=t0,
        C7=e.number("C7", 1.0, nonneg=True),
    )

    ini = sec["initial"]
    dim = grid.dim if grid is not None else 1
    u0 = _parse_field(ini, "u0", "sine", dim)
    u1 = _parse_field(ini, "u1", "zero", dim)
    f0 = ini.choice("f0", ("u1", "zero"), "u1")

    if errors:
        raise ConfigError(errors)
    return RunConfig(grid, kernel, witness, delay, damping, solver, energy, u0, u1, f0)


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _field_dict(name: str, spec: FieldSpec) -> dict:
    out = {name: spec.kind, f"{name}_modes": list(spec.modes), f"{name}_amp": spec.amp, f"{name}_width": spec.width}
    if spec.center:
        out[f"{name}_center"] = list(spec.center)
    return out


def config_to_dict(cfg: RunConfig) -> dict:
    g = cfg.grid
    grid = {"dim": 1, "L": g.extents[0], "n": g.counts[0]} if g.dim == 1 else {
        "dim": 2, "Lx": g.extents[0], "Ly": g.extents[1], "nx": g.counts[0], "ny": g.counts[1]
    }
    k = cfg.kernel
    if isinstance(k, kn.PronySum):
        kernel = {"form": "prony", "modes": [list(m) for m in k.modes]}
    elif isinstance(k, kn.PowerLaw):
        kernel = {"form": "power", "g0": k.amplitude, "p": k.exponent}
    else:
        kernel = {"form": "zero"}
    w = cfg.witness
    witness = {"form": "constant" if isinstance(w, kn.Constant) else "hyperbolic", "a": w.a}
    p = cfg.delay
    delay = {"form": "constant", "tau": p.tau} if isinstance(p, ConstantDelay) else {
        "form": "sin", "tau": p.center, "amp": p.amp, "omega": p.omega
    }
    s = cfg.solver
    solver = {
        "dt_safety": s.dt_safety,
        "t_end": s.t_end,
        "output_every": s.output_every,
        "engine": s.engine,
        "snapshots": list(s.snapshots),
        "transport_check": s.transport_check,
        "n_rho": s.n_rho,
        "snapshot_format": s.snapshot_format,
    }
    e = cfg.energy
    energy = {"N": e.N, "eps": e.eps, "C7": e.C7}
    if e.t0 is not None:
        energy["t0"] = e.t0
    initial = {**_field_dict("u0", cfg.u0), **_field_dict("u1", cfg.u1), "f0": cfg.f0}
    return {
        "grid": grid,
        "kernel": kernel,
        "witness": witness,
        "delay": delay,
        "damping": {"a0": cfg.damping.a0, "a1": cfg.damping.a1},
        "solver": solver,
        "energy": energy,
        "initial": initial,
    }


def serialize_config(cfg: RunConfig) -> str:
    return tomli_w.dumps(config_to_dict(cfg))


def set_path(data: dict, path: str, value) -> dict:
    """Copy of ``data`` with ``section.key`` set to ``value``."""
    section, _, key = path.partition(".")
    if not key or section not in SECTIONS or key not in SECTIONS[section]:
        raise ConfigError([f"{path}: unknown parameter path (expected section.key)"])
    out = {name: dict(table) if isinstance(table, dict) else table for name, table in data.items()}
    out.setdefault(section, {})[key] = value
    return out
