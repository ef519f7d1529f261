"""Run configuration files.

A run is described by a YAML document with five sections::

    grid:      {N: 32, L: 6.283185307179586}
    potential: {name: double_well}           # or {coefficients: [a0, a1, a2, a3, a4]}
    initial:   {kind: random, mean: 0.0, amplitude: 0.1, seed: 1, smoothing: 1.5}
    solver:    {scheme: etdrk2, dt: 1.0e-4, T: 1.0, n_cutoff: .inf,
                dealias: two_thirds, record_every: 100, seed: 0}
    output:    {dir: out, snapshot_every: 0, csv_path: diagnostics.csv, hs: null}

``L`` may also be written as a multiple of pi (``2pi``, ``2*pi``).  Unknown
keys are rejected with a spelling suggestion, and every problem in a file is
reported at once.
"""
from __future__ import annotations

import difflib
import math
import os
import re
from dataclasses import asdict, dataclass, field

import yaml

from .flow import SCHEMES, SolverConfig
from .initial import from_spec
from .potentials import by_name, polynomial_potential
from .spectral import make_grid, parse_dealias

OUTPUT_DIR_ENV = "CHFLOW_OUTPUT_DIR"

SCHEMA = {
    "grid": {"N": True, "L": True},
    "potential": {"name": False, "coefficients": False},
    "initial": {
        "kind": False, "mean": False, "amplitude": False, "seed": False,
        "modes": False, "smoothing": False, "width": False,
    },
    "solver": {
        "scheme": False, "dt": True, "T": True, "n_cutoff": False,
        "dealias": False, "record_every": False, "seed": False,
    },
    "output": {"dir": False, "snapshot_every": False, "csv_path": False, "hs": False},
}
REQUIRED_SECTIONS = ("grid", "potential", "solver")


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


@dataclass(frozen=True)
class GridSection:
    N: int
    L: float


@dataclass(frozen=True)
class PotentialSection:
    name: str | None = None
    coefficients: tuple | None = None


@dataclass(frozen=True)
class InitialSection:
    kind: str = "random"
    mean: float = 0.0
    amplitude: float = 0.05
    seed: int = 0
    modes: tuple = ()
    smoothing: float | None = None
    width: float = 2.0


@dataclass(frozen=True)
class OutputSection:
    dir: str = ""
    snapshot_every: int = 0
    csv_path: str = "diagnostics.csv"
    hs: float | None = None


@dataclass(frozen=True)
class RunConfig:
    grid: GridSection
    potential: PotentialSection
    initial: InitialSection
    solver: SolverConfig
    output: OutputSection = field(default_factory=OutputSection)

    def make_grid(self):
        return make_grid(self.grid.N, self.grid.L)

    def make_potential(self):
        if self.potential.coefficients is not None:
            return polynomial_potential(self.potential.coefficients)
        return by_name(self.potential.name)

    def initial_field(self, grid=None):
        i = self.initial
        return from_spec(grid or self.make_grid(), i.kind, i.mean, i.amplitude, i.seed,
                         i.modes, i.smoothing, i.width)

    def output_dir(self):
        return self.output.dir or os.environ.get(OUTPUT_DIR_ENV) or "chflow_out"

    def csv_file(self):
        path = self.output.csv_path
        return path if os.path.isabs(path) else os.path.join(self.output_dir(), path)

    def to_dict(self):
        s = self.solver
        d = {
            "grid": asdict(self.grid),
            "potential": {k: v for k, v in asdict(self.potential).items() if v is not None},
            "initial": asdict(self.initial),
            "solver": {
                "scheme": s.scheme, "dt": s.dt, "T": s.T, "n_cutoff": s.n_cutoff,
                "dealias": str(s.dealias), "record_every": s.record_every, "seed": s.seed,
            },
            "output": asdict(self.output),
        }
        if "coefficients" in d["potential"]:
            d["potential"]["coefficients"] = list(d["potential"]["coefficients"])
        d["initial"]["modes"] = [list(m) for m in self.initial.modes]
        return d


def serialize_config(cfg):
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


_PI = re.compile(r"^\s*([0-9.eE+-]*)\s*\*?\s*pi\s*$")


def _length(v):
    if isinstance(v, str):
        m = _PI.match(v)
        if m:
            factor = float(m.group(1)) if m.group(1) else 1.0
            return factor * math.pi
    return _number(v)


def _number(v):
    if isinstance(v, bool):
        raise TypeError("expected a number, got a boolean")
    if isinstance(v, str) and v.strip().lower() in ("inf", "+inf", ".inf"):
        return math.inf
    return float(v)


def _integer(v):
    if isinstance(v, bool) or isinstance(v, float) and not v.is_integer():
        raise TypeError(f"expected an integer, got {v!r}")
    return int(v)


def apply_overrides(data, overrides):
    """Set ``section.key`` entries from ``overrides``; later entries win."""
    data = {k: dict(v) if isinstance(v, dict) else v for k, v in (data or {}).items()}
    for dotted, value in overrides.items():
        section, _, key = dotted.partition(".")
        if not key:
            raise ConfigError([f"override {dotted!r} must look like section.key"])
        sec = data.setdefault(section, {})
        if not isinstance(sec, dict):
            raise ConfigError([f"section {section!r} is not a mapping"])
        if key == "coefficients" or key == "name":
            sec.pop("coefficients" if key == "name" else "name", None)
        sec[key] = value
    return data


def parse_config(text, overrides=None):
    """Parse and validate YAML text into a :class:`RunConfig`."""
    try:
        data = yaml.safe_load(text) if isinstance(text, str) else text
    except yaml.YAMLError as exc:
        raise ConfigError([f"not valid YAML: {exc}"]) from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(["top level must be a mapping of sections"])
    if overrides:
        data = apply_overrides(data, overrides)
    return from_dict(data)


def _unknown(kind, name, known):
    hint = difflib.get_close_matches(name, known, n=1)
    msg = f"unknown {kind} {name!r}"
    return msg + (f" (did you mean {hint[0]!r}?)" if hint else "")


def from_dict(data):
    errors = []
    for section in data:
        if section not in SCHEMA:
            errors.append(_unknown("section", section, list(SCHEMA)))
    for section in REQUIRED_SECTIONS:
        if section not in data:
            errors.append(f"missing required section {section!r}")
    sections = {}
    for section, keys in SCHEMA.items():
        raw = data.get(section) or {}
        if not isinstance(raw, dict):
            errors.append(f"section {section!r} must be a mapping")
            raw = {}
        for key in raw:
            if key not in keys:
                errors.append(_unknown(f"key in section {section!r}:", key, list(keys)))
        if section in data:
            for key, required in keys.items():
                if required and key not in raw:
                    errors.append(f"missing required key {section}.{key}")
        sections[section] = {k: v for k, v in raw.items() if k in keys}

    def get(section, key, conv, default, check=None, what=None):
        raw = sections[section]
        if key not in raw or raw[key] is None:
            return default
        try:
            value = conv(raw[key])
        except (TypeError, ValueError) as exc:
            errors.append(f"{section}.{key}: {exc}")
            return default
        if check is not None and not check(value):
            errors.append(f"{section}.{key}: {what} (got {raw[key]!r})")
            return default
        return value

    N = get("grid", "N", _integer, 16, lambda n: n >= 4 and n % 2 == 0,
            "must be an even integer >= 4")
    L = get("grid", "L", _length, 2 * math.pi, lambda x: x > 0 and math.isfinite(x),
            "must be a positive length")

    pot = sections["potential"]
    name, coefficients = pot.get("name"), pot.get("coefficients")
    if "potential" in data:
        if (name is None) == (coefficients is None):
            errors.append("potential: give exactly one of 'name' or 'coefficients'")
        elif name is not None:
            try:
                by_name(name)
            except ValueError as exc:
                errors.append(f"potential.name: {exc}")
        else:
            try:
                coefficients = tuple(_number(c) for c in coefficients)
                polynomial_potential(coefficients)
            except (TypeError, ValueError) as exc:
                errors.append(f"potential.coefficients: {exc}")
                coefficients = None

    kind = get("initial", "kind", str, "random", lambda k: k in ("random", "modes", "tanh_front"),
               "must be one of random, modes, tanh_front")
    modes = ()
    raw_modes = sections["initial"].get("modes")
    if raw_modes:
        try:
            modes = tuple(
                (_integer(m[0]), _integer(m[1]), _integer(m[2]), _number(m[3])) for m in raw_modes
            )
            if any(len(m) != 4 for m in raw_modes):
                raise ValueError("each mode is [k1, k2, k3, amplitude]")
        except (TypeError, ValueError, IndexError) as exc:
            errors.append(f"initial.modes: {exc}")
            modes = ()
    if kind == "modes" and not modes:
        errors.append("initial.modes: required for kind 'modes'")
    initial = InitialSection(
        kind=kind,
        mean=get("initial", "mean", _number, 0.0, math.isfinite, "must be finite"),
        amplitude=get("initial", "amplitude", _number, 0.05, lambda a: a >= 0,
                      "must be non-negative"),
        seed=get("initial", "seed", _integer, 0),
        modes=modes,
        smoothing=get("initial", "smoothing", _number, None, lambda s: s > 0, "must be positive"),
        width=get("initial", "width", _number, 2.0, lambda w: w > 0, "must be positive"),
    )

    scheme = get("solver", "scheme", str, "etdrk2", lambda s: s in SCHEMES,
                 f"must be one of {', '.join(SCHEMES)}")
    dt = get("solver", "dt", _number, None, lambda x: x > 0 and math.isfinite(x),
             "must be positive")
    T = get("solver", "T", _number, None, lambda x: x >= 0 and math.isfinite(x),
            "must be non-negative")
    n_cutoff = get("solver", "n_cutoff", _number, math.inf, lambda x: x > 0, "must be positive")
    dealias = get("solver", "dealias", parse_dealias, parse_dealias("two_thirds"))
    record_every = get("solver", "record_every", _integer, 1, lambda r: r >= 1, "must be >= 1")
    solver_seed = get("solver", "seed", _integer, 0)
    if dt is not None and T is not None:
        n = round(T / dt)
        if abs(n * dt - T) > 1e-9 * max(T, dt):
            errors.append(f"solver.T: must be an integer multiple of solver.dt (T={T}, dt={dt})")

    output = OutputSection(
        dir=get("output", "dir", str, ""),
        snapshot_every=get("output", "snapshot_every", _integer, 0, lambda s: s >= 0,
                           "must be >= 0"),
        csv_path=get("output", "csv_path", str, "diagnostics.csv"),
        hs=get("output", "hs", _number, None, math.isfinite, "must be finite"),
    )

    if errors:
        raise ConfigError(errors)
    return RunConfig(
        grid=GridSection(N, L),
        potential=PotentialSection(name, coefficients),
        initial=initial,
        solver=SolverConfig(scheme, dt, T, n_cutoff, dealias, record_every, solver_seed),
        output=output,
    )


def load_config(path, overrides=None):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), overrides)
