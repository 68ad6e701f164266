"""Run configuration: INI-style text parsed into a validated :class:`RunConfig`.

Example::

    [run]
    mode = discrete
    steps = 1000
    output_every = 100

    [lattice]
    sites = 64
    spacing = 0.015625
    gamma = 1.0
    hop_rate = 0.05

    [density]
    kind = gaussian
    amplitude = 0.4
    center = 0.5
    width = 0.1
    background = 0.1

    [temperature]
    kind = constant
    value = 1.0

Every problem found is reported together, each naming its field and line.
:func:`canonical_text` writes a config back in a fixed layout that parses to
an identical object.
"""
from __future__ import annotations

import configparser
import inspect
import math
import re
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np

from .errors import ConfigError
from .lattice import SUM_MODES

MODES = ("discrete", "continuum", "oracle-check", "soret", "dufour", "convergence", "thermal-drift")
EXPERIMENT_MODES = MODES[3:]
PROFILE_KINDS = ("constant", "linear", "gaussian", "table")
POTENTIAL_KINDS = ("zero", "linear", "table")

# (key, required) per section; experiment keys are checked against the
# experiment's own signature.
SCHEMA = {
    "run": ("mode", "steps", "output_every", "sum_mode", "output_dir", "dt"),
    "lattice": ("sites", "spacing", "length", "energy_quantum", "gamma", "hop_rate", "rho_m", "k_cap"),
    "potential": ("kind", "slope", "values"),
    "density": ("kind", "value", "left", "right", "amplitude", "center", "width", "background", "values"),
    "temperature": ("kind", "value", "left", "right", "amplitude", "center", "width", "background", "values"),
    "tolerances": ("conservation", "entropy", "oracle"),
    "experiment": None,
}
PROFILE_FIELDS = {
    "constant": ("value",),
    "linear": ("left", "right"),
    "gaussian": ("amplitude", "center", "width", "background"),
    "table": ("values",),
}


@dataclass(frozen=True)
class Profile:
    """Initial field on the unit interval ``s = x / length``.

    ``gaussian`` is ``background + amplitude exp(-(s - center)^2 / (2 width^2))``;
    ``table`` lists one value per site or cell.
    """

    kind: str = "constant"
    value: Optional[float] = None
    left: Optional[float] = None
    right: Optional[float] = None
    amplitude: Optional[float] = None
    center: Optional[float] = None
    width: Optional[float] = None
    background: Optional[float] = None
    values: Optional[tuple] = None

    def evaluate(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.kind == "constant":
            return np.full(s.shape, self.value)
        if self.kind == "linear":
            return self.left + (self.right - self.left) * s
        if self.kind == "gaussian":
            bg = self.background or 0.0
            return bg + self.amplitude * np.exp(-((s - self.center) ** 2) / (2.0 * self.width**2))
        return np.array(self.values, dtype=float)


@dataclass(frozen=True)
class PotentialSpec:
    """``zero``; ``linear`` with ``V = slope * x``; or ``table`` of site values."""

    kind: str = "zero"
    slope: Optional[float] = None
    values: Optional[tuple] = None

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            return np.zeros(x.shape)
        if self.kind == "linear":
            return self.slope * x
        return np.array(self.values, dtype=float)


@dataclass(frozen=True)
class Tolerances:
    conservation: float = 1e-10
    entropy: float = 1e-12
    oracle: float = 1e-12


@dataclass(frozen=True)
class RunConfig:
    mode: str
    sites: int
    spacing: float
    hop_rate: float
    energy_quantum: Optional[float] = None
    rho_m: float = 1.0
    k_cap: Optional[int] = None
    steps: int = 0
    output_every: int = 0
    sum_mode: str = "finite"
    dt: Optional[float] = None
    output_dir: Optional[str] = None
    potential: PotentialSpec = PotentialSpec()
    density: Profile = Profile("constant", value=0.5)
    temperature: Profile = Profile("constant", value=1.0)
    tolerances: Tolerances = Tolerances()
    experiment: tuple = field(default=())

    @property
    def length(self) -> float:
        return self.sites * self.spacing

    @property
    def positions(self) -> np.ndarray:
        return (np.arange(self.sites) + 0.5) * self.spacing

    def experiment_kwargs(self) -> dict:
        return {k: _literal(v) for k, v in self.experiment}


DEFAULTS = {
    "steps": 0,
    "output_every": 0,
    "sum_mode": "finite",
    "rho_m": 1.0,
}


# ---------------------------------------------------------------------------
# parsing


_SECTION = re.compile(r"^\s*\[([^\]]+)\]")
_KEY = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")


def _line_index(text: str) -> dict:
    """Map ``(section, key)`` and ``(section, None)`` to 1-based line numbers."""
    where = {}
    section = None
    for i, line in enumerate(text.splitlines(), 1):
        if line.lstrip().startswith(("#", ";")) or not line.strip():
            continue
        m = _SECTION.match(line)
        if m:
            section = m.group(1).strip().lower()
            where.setdefault((section, None), i)
            continue
        if line[:1].isspace():
            continue  # continuation line
        m = _KEY.match(line)
        if m and section is not None:
            where.setdefault((section, m.group(1).strip().lower()), i)
    return where


def _literal(text: str):
    """Experiment values: int, float, bool, comma list, or bare string.

    A list may be wrapped in ``()`` or ``[]``.
    """
    t = text.strip()
    if len(t) > 1 and (t[0], t[-1]) in (("(", ")"), ("[", "]")):
        t = t[1:-1].strip()
        if "," not in t:
            t += ","
    if "," in t:
        return tuple(_literal(p) for p in t.split(",") if p.strip())
    low = t.lower()
    if low in ("true", "false"):
        return low == "true"
    for conv in (int, float):
        try:
            return conv(t)
        except ValueError:
            pass
    return t


class _Collector:
    def __init__(self, where):
        self.where = where
        self.problems = []

    def add(self, section, key, message):
        line = self.where.get((section, key)) or self.where.get((section, None))
        loc = f"[{section}] {key}" if key else f"[{section}]"
        self.problems.append(f"{loc}{f' (line {line})' if line else ''}: {message}")


def _number(parser, col, section, key, conv=float, required=False):
    if not parser.has_option(section, key):
        if required:
            col.add(section, key, "missing required key")
        return None
    raw = parser.get(section, key).strip()
    try:
        if conv is int:
            value = float(raw)
            if not value.is_integer():
                raise ValueError
            return int(value)
        value = float(raw)
        if not math.isfinite(value):
            raise ValueError
        return value
    except ValueError:
        col.add(section, key, f"expected {'an integer' if conv is int else 'a finite number'}, got {raw!r}")
        return None


def _floats(parser, col, section, key):
    raw = parser.get(section, key)
    try:
        vals = tuple(float(v) for v in re.split(r"[,\s]+", raw.strip()) if v)
    except ValueError:
        col.add(section, key, f"expected a comma separated list of numbers, got {raw!r}")
        return None
    if not vals or not all(math.isfinite(v) for v in vals):
        col.add(section, key, "needs at least one finite value")
        return None
    return vals


def _profile(parser, col, section, default: Profile) -> Profile:
    if not parser.has_section(section):
        return default
    kind = parser.get(section, "kind", fallback="constant").strip().lower()
    if kind not in PROFILE_KINDS:
        col.add(section, "kind", f"must be one of {', '.join(PROFILE_KINDS)}, got {kind!r}")
        return default
    values = {}
    for key in PROFILE_FIELDS[kind]:
        if key == "values":
            if not parser.has_option(section, key):
                col.add(section, key, "missing required key for a table profile")
            else:
                values[key] = _floats(parser, col, section, key)
        else:
            optional = kind == "gaussian" and key == "background"
            values[key] = _number(parser, col, section, key, required=not optional)
    for key in parser.options(section):
        if key != "kind" and key not in PROFILE_FIELDS[kind]:
            col.add(section, key, f"not used by a {kind} profile")
    if kind == "gaussian" and values.get("width") is not None and not values["width"] > 0:
        col.add(section, "width", "must be positive")
    return Profile(kind, **values)


def parse_config(text: str) -> RunConfig:
    """Parse and validate a run configuration.

    Raises
    ------
    ConfigError
        Listing every violation found (unknown or missing keys, bad values,
        range violations), each with its field and line.
    """
    where = _line_index(text)
    col = _Collector(where)
    parser = configparser.ConfigParser(
        interpolation=None, default_section="\x00defaults", inline_comment_prefixes=(";", "#")
    )
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError([f"syntax{f' (line {line})' if line else ''}: {exc.message.splitlines()[0]}"]) from None

    for section in parser.sections():
        if section not in SCHEMA:
            col.add(section, None, f"unknown section (expected {', '.join(SCHEMA)})")
            continue
        allowed = SCHEMA[section]
        if allowed is None or section in ("density", "temperature"):
            continue
        for key in parser.options(section):
            if key not in allowed:
                col.add(section, key, "unknown key")

    if not parser.has_section("run"):
        col.add("run", None, "missing required section")
        parser.add_section("run")

    mode = parser.get("run", "mode", fallback=None)
    if mode is None:
        col.add("run", "mode", "missing required key")
    elif mode.strip().lower() not in MODES:
        col.add("run", "mode", f"must be one of {', '.join(MODES)}, got {mode!r}")
        mode = None
    mode = mode.strip().lower() if mode else None
    experiment_mode = mode in EXPERIMENT_MODES

    steps = _number(parser, col, "run", "steps", int)
    every = _number(parser, col, "run", "output_every", int)
    dt = _number(parser, col, "run", "dt")
    sum_mode = parser.get("run", "sum_mode", fallback="finite").strip().lower()
    if sum_mode not in SUM_MODES:
        col.add("run", "sum_mode", f"must be one of {', '.join(SUM_MODES)}, got {sum_mode!r}")
    output_dir = parser.get("run", "output_dir", fallback=None)

    need_lattice = not experiment_mode
    if not parser.has_section("lattice"):
        if need_lattice:
            col.add("lattice", None, "missing required section")
        parser.add_section("lattice")
    sites = _number(parser, col, "lattice", "sites", int, required=need_lattice)
    spacing = _number(parser, col, "lattice", "spacing")
    length = _number(parser, col, "lattice", "length")
    eps = _number(parser, col, "lattice", "energy_quantum")
    gamma = _number(parser, col, "lattice", "gamma")
    lam = _number(parser, col, "lattice", "hop_rate", required=need_lattice)
    rho_m = _number(parser, col, "lattice", "rho_m")
    k_cap = _number(parser, col, "lattice", "k_cap", int)

    if spacing is not None and length is not None:
        col.add("lattice", "length", "give spacing or length, not both")
    if eps is not None and gamma is not None:
        col.add("lattice", "gamma", "give energy_quantum or gamma, not both")
    if sites is not None and sites < 2:
        col.add("lattice", "sites", f"must be >= 2, got {sites}")
    for key, val in (("spacing", spacing), ("length", length), ("energy_quantum", eps), ("gamma", gamma),
                     ("hop_rate", lam), ("rho_m", rho_m), ("dt", dt)):
        if val is not None and not val > 0:
            col.add("run" if key == "dt" else "lattice", key, f"must be positive, got {val:g}")
    if steps is not None and steps < 0:
        col.add("run", "steps", f"must be >= 0, got {steps}")
    if every is not None and every < 0:
        col.add("run", "output_every", f"must be >= 0, got {every}")
    if k_cap is not None and k_cap < 0:
        col.add("lattice", "k_cap", f"must be >= 0, got {k_cap}")

    if spacing is None:
        # default: the unit interval
        span = length if length is not None and length > 0 else 1.0
        spacing = span / sites if sites is not None and sites >= 2 else 1.0
    if eps is None and gamma is not None and gamma > 0 and spacing > 0:
        eps = gamma * spacing

    if mode in ("discrete", "oracle-check"):
        if eps is None:
            col.add("lattice", "energy_quantum", "missing: give energy_quantum or gamma")
        elif lam is not None and lam > 0 and eps > 0:
            if 2.0 * lam * eps >= 1.0:
                col.add("lattice", "hop_rate",
                        f"hopping cutoff violated: 2*hop_rate*energy_quantum = {2 * lam * eps:g} must be < 1")
            elif 4.0 * lam * eps > 1.0:
                col.add("lattice", "hop_rate",
                        f"hopping cutoff leaves k_max = 0: hop_rate*energy_quantum = {lam * eps:g} must be <= 1/4")
            elif k_cap is not None:
                from .lattice import k_max

                if k_cap > k_max(lam, eps):
                    col.add("lattice", "k_cap", f"{k_cap} exceeds k_max = {k_max(lam, eps)} for these rates")
    if mode == "oracle-check" and sites is not None and not 2 <= sites <= 4:
        col.add("lattice", "sites", f"oracle-check needs 2 to 4 sites, got {sites}")

    potential = PotentialSpec()
    if parser.has_section("potential"):
        kind = parser.get("potential", "kind", fallback="zero").strip().lower()
        if kind not in POTENTIAL_KINDS:
            col.add("potential", "kind", f"must be one of {', '.join(POTENTIAL_KINDS)}, got {kind!r}")
        elif kind == "linear":
            potential = PotentialSpec("linear", slope=_number(parser, col, "potential", "slope", required=True))
        elif kind == "table":
            if not parser.has_option("potential", "values"):
                col.add("potential", "values", "missing required key for a table potential")
            else:
                potential = PotentialSpec("table", values=_floats(parser, col, "potential", "values"))

    occupation_default = Profile("constant", value=0.5)
    density = _profile(parser, col, "density", occupation_default)
    temperature = _profile(parser, col, "temperature", Profile("constant", value=1.0))

    tol = Tolerances()
    if parser.has_section("tolerances"):
        vals = {}
        for f in fields(Tolerances):
            v = _number(parser, col, "tolerances", f.name)
            if v is not None:
                if not v > 0:
                    col.add("tolerances", f.name, f"must be positive, got {v:g}")
                vals[f.name] = v
        tol = replace(tol, **vals)

    experiment = ()
    if parser.has_section("experiment"):
        items = tuple(sorted((k, parser.get("experiment", k).strip()) for k in parser.options("experiment")))
        if mode is not None and not experiment_mode:
            col.add("experiment", None, f"only used by experiment modes, not {mode!r}")
        elif experiment_mode:
            from .experiments import EXPERIMENTS

            accepted = inspect.signature(EXPERIMENTS[mode]).parameters
            for k, _ in items:
                if k not in accepted or k == "setup":
                    col.add("experiment", k, f"unknown parameter for {mode!r}")
        experiment = items

    # field values against the grid
    if not experiment_mode and sites is not None and sites >= 2 and spacing > 0:
        s = (np.arange(sites) + 0.5) / sites
        for section, prof in (("density", density), ("temperature", temperature)):
            if prof.kind == "table" and prof.values is not None and len(prof.values) != sites:
                col.add(section, "values", f"needs {sites} entries, got {len(prof.values)}")
                continue
            if any(v is None for k, v in prof.__dict__.items() if k in PROFILE_FIELDS[prof.kind] and k != "background"):
                continue
            vals = prof.evaluate(s)
            if section == "temperature" and np.any(~(vals > 0)):
                col.add(section, None, "temperature must be positive at every site")
            if section == "density":
                top = 1.0 if mode in ("discrete", "oracle-check") else (rho_m or 1.0)
                name = "occupation" if top == 1.0 and mode != "continuum" else "density"
                if np.any(vals < 0) or np.any(vals > top):
                    col.add(section, None, f"{name} must lie in [0, {top:g}] at every site")
        if potential.kind == "table" and potential.values is not None and len(potential.values) != sites:
            col.add("potential", "values", f"needs {sites} entries, got {len(potential.values)}")

    if col.problems:
        raise ConfigError(col.problems)

    return RunConfig(
        mode=mode,
        sites=sites if sites is not None else 0,
        spacing=float(spacing),
        hop_rate=lam if lam is not None else 0.0,
        energy_quantum=eps,
        rho_m=rho_m if rho_m is not None else DEFAULTS["rho_m"],
        k_cap=k_cap,
        steps=steps if steps is not None else DEFAULTS["steps"],
        output_every=every if every is not None else DEFAULTS["output_every"],
        sum_mode=sum_mode,
        dt=dt,
        output_dir=output_dir.strip() if output_dir else None,
        potential=potential,
        density=density,
        temperature=temperature,
        tolerances=tol,
        experiment=experiment,
    )


# ---------------------------------------------------------------------------
# canonical echo


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


def canonical_text(cfg: RunConfig) -> str:
    """Fixed-layout text that parses back to ``cfg``."""
    out = ["[run]", f"mode = {cfg.mode}", f"steps = {cfg.steps}", f"output_every = {cfg.output_every}",
           f"sum_mode = {cfg.sum_mode}"]
    if cfg.dt is not None:
        out.append(f"dt = {_fmt(cfg.dt)}")
    if cfg.output_dir is not None:
        out.append(f"output_dir = {cfg.output_dir}")
    out += ["", "[lattice]"]
    if cfg.sites:
        out.append(f"sites = {cfg.sites}")
    out.append(f"spacing = {_fmt(cfg.spacing)}")
    if cfg.energy_quantum is not None:
        out.append(f"energy_quantum = {_fmt(cfg.energy_quantum)}")
    if cfg.hop_rate:
        out.append(f"hop_rate = {_fmt(cfg.hop_rate)}")
    out.append(f"rho_m = {_fmt(cfg.rho_m)}")
    if cfg.k_cap is not None:
        out.append(f"k_cap = {cfg.k_cap}")
    out += ["", "[potential]", f"kind = {cfg.potential.kind}"]
    if cfg.potential.kind == "linear":
        out.append(f"slope = {_fmt(cfg.potential.slope)}")
    elif cfg.potential.kind == "table":
        out.append(f"values = {_fmt(cfg.potential.values)}")
    for name, prof in (("density", cfg.density), ("temperature", cfg.temperature)):
        out += ["", f"[{name}]", f"kind = {prof.kind}"]
        for key in PROFILE_FIELDS[prof.kind]:
            v = getattr(prof, key)
            if v is not None:
                out.append(f"{key} = {_fmt(v)}")
    out += ["", "[tolerances]"] + [f"{f.name} = {_fmt(getattr(cfg.tolerances, f.name))}" for f in fields(Tolerances)]
    if cfg.experiment:
        out += ["", "[experiment]"] + [f"{k} = {v}" for k, v in cfg.experiment]
    return "\n".join(out) + "\n"
