"""Run configuration: INI documents parsed with :mod:`configparser`.

Example::

    [params]
    a = 0
    b = 1
    c = 1

    [grid]
    nx = 64
    ny = 64

    [run]
    scenario = theorem
    T = 1

Every key is optional except ``params.a``, ``params.b`` and ``params.c``.
Unknown sections or keys are errors.  The default output directory comes
from the ``NEMATICLAB_OUTPUT_DIR`` environment variable when it is set.
"""

from __future__ import annotations

import configparser
import io
import math
import os
from dataclasses import dataclass, field, fields
from typing import Any

from .bulk_potential import MaterialParams, validate
from .fields import BOUNDARIES, FD, SPECTRAL
from .solver import SCHEMES

OUTPUT_ENV = "NEMATICLAB_OUTPUT_DIR"
SCENARIOS = ("theorem", "corollary", "regularization", "custom")
Q0_KINDS = ("random", "uniaxial", "zero")
U0_KINDS = ("zero", "taylor-green", "modes")
REQUIRED = ("params.a", "params.b", "params.c")


def default_output_dir() -> str:
    return os.environ.get(OUTPUT_ENV, "nematiclab-out")


class ConfigError(ValueError):
    """Raised with every problem found; ``errors`` holds ``"key.path: message"`` strings."""

    def __init__(self, errors: list[str]):
        super().__init__("invalid configuration:\n  " + "\n  ".join(errors))
        self.errors = list(errors)


@dataclass
class GridConfig:
    nx: int = 64
    ny: int = 64
    lx: float = 2 * math.pi
    ly: float = 2 * math.pi
    boundary: str = "periodic"


@dataclass
class RunSection:
    scenario: str = "custom"
    backend: str = SPECTRAL
    scheme: str = "imex-euler"
    dt: float = 1e-3
    T: float = 1.0
    safety: float = 0.5
    monitor_interval: float = 0.05
    seed: int = 0
    adaptive: bool = False
    refinement_levels: int = 3


@dataclass
class InitialConfig:
    q0: str = "random"
    kmax: int = 4
    amplitude: float = 1.0
    # "interval" rescales into the invariant interval; "l1" sets max eigenvalue
    scaling: str = "interval"
    l1_target: float = 0.5
    s: float = 0.5
    director: tuple = (0.0, 0.0, 1.0)
    u0: str = "zero"
    u0_amplitude: float = 1.0


@dataclass
class RegularizationConfig:
    deltas: tuple = (0.4, 0.2, 0.1, 0.05, 0.025)
    velocity: str = "modes"


@dataclass
class OutputConfig:
    dir: str = field(default_factory=default_output_dir)
    snapshots: bool = True


@dataclass
class RunConfig:
    params: MaterialParams = field(default_factory=MaterialParams)
    grid: GridConfig = field(default_factory=GridConfig)
    run: RunSection = field(default_factory=RunSection)
    initial: InitialConfig = field(default_factory=InitialConfig)
    regularization: RegularizationConfig = field(default_factory=RegularizationConfig)
    output: OutputConfig = field(default_factory=OutputConfig)


SECTIONS = {f.name: f for f in fields(RunConfig)}


def _section_type(name):
    return {"params": MaterialParams, "grid": GridConfig, "run": RunSection,
            "initial": InitialConfig, "regularization": RegularizationConfig,
            "output": OutputConfig}[name]


def _convert(kind, text: str):
    text = text.strip()
    if kind is bool:
        low = text.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if kind is int:
        return int(text)
    if kind is float:
        v = float(text)
        if math.isnan(v):
            raise ValueError("NaN is not allowed")
        return v
    if kind is tuple:
        return tuple(float(p) for p in text.replace(",", " ").split())
    return text


_KINDS = {"int": int, "float": float, "str": str, "bool": bool, "tuple": tuple}


def _field_kind(section_cls, name):
    # annotations are strings under ``from __future__ import annotations``
    for f in fields(section_cls):
        if f.name == name:
            return _KINDS[f.type] if isinstance(f.type, str) else f.type
    return None


def _param_error(msg: str) -> str:
    # validate() messages start with the offending parameter name
    return f"params.{msg.split()[0]}: {msg}"


def _check_values(cfg: RunConfig) -> list[str]:
    errs = []
    errs += [_param_error(m) for m in validate(cfg.params)]
    g = cfg.grid
    for key in ("nx", "ny"):
        v = getattr(g, key)
        if v < 8 or v % 2:
            errs.append(f"grid.{key}: must be an even integer >= 8 (got {v})")
    for key in ("lx", "ly"):
        if not getattr(g, key) > 0:
            errs.append(f"grid.{key}: must be > 0")
    if g.boundary not in BOUNDARIES:
        errs.append(f"grid.boundary: must be one of {BOUNDARIES} (got {g.boundary!r})")
    r = cfg.run
    if r.scenario not in SCENARIOS:
        errs.append(f"run.scenario: must be one of {SCENARIOS} (got {r.scenario!r})")
    if r.backend not in (SPECTRAL, FD):
        errs.append(f"run.backend: must be 'spectral' or 'fd' (got {r.backend!r})")
    elif r.backend == SPECTRAL and g.boundary != "periodic":
        errs.append("run.backend: spectral backend needs grid.boundary = periodic")
    if r.scheme not in SCHEMES:
        errs.append(f"run.scheme: must be one of {SCHEMES} (got {r.scheme!r})")
    for key in ("dt", "monitor_interval"):
        if not getattr(r, key) > 0:
            errs.append(f"run.{key}: must be > 0")
    if not r.T >= 0:
        errs.append("run.T: must be >= 0")
    if not 0 < r.safety <= 1:
        errs.append("run.safety: must lie in (0, 1]")
    if r.refinement_levels not in (2, 3):
        errs.append("run.refinement_levels: must be 2 or 3")
    i = cfg.initial
    if i.q0 not in Q0_KINDS:
        errs.append(f"initial.q0: must be one of {Q0_KINDS} (got {i.q0!r})")
    if i.scaling not in ("interval", "l1", "none"):
        errs.append(f"initial.scaling: must be interval, l1 or none (got {i.scaling!r})")
    if i.kmax < 1:
        errs.append("initial.kmax: must be >= 1")
    if len(i.director) != 3 or not any(i.director):
        errs.append("initial.director: needs three components, not all zero")
    if i.u0 not in U0_KINDS:
        errs.append(f"initial.u0: must be one of {U0_KINDS} (got {i.u0!r})")
    if r.scenario in ("theorem", "corollary"):
        if g.boundary != "periodic":
            errs.append(f"grid.boundary: scenario {r.scenario} needs a periodic grid")
        if g.nx != g.ny or g.lx != g.ly:
            errs.append(f"grid: scenario {r.scenario} needs a square grid (nx = ny, lx = ly)")
        errs += [_param_error(m) for m in validate(cfg.params, require_thm_regime=True)
                 if m not in validate(cfg.params)]
    if r.scenario == "regularization":
        d = cfg.regularization.deltas
        if not d or any(x < 0 for x in d):
            errs.append("regularization.deltas: need at least one non-negative value")
        if g.boundary != "periodic" or g.nx != g.ny or g.lx != g.ly:
            errs.append("grid: regularization scenario needs a square periodic grid")
    if cfg.regularization.velocity not in ("modes", "single", "zero"):
        errs.append("regularization.velocity: must be modes, single or zero")
    return errs


def parse_config(text: str) -> RunConfig:
    """Parse an INI document; raises :class:`ConfigError` listing every problem."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"syntax: {exc}"]) from None
    errs = []
    values: dict[str, dict[str, Any]] = {}
    for sec in cp.sections():
        if sec not in SECTIONS:
            errs.append(f"{sec}: unknown section")
            continue
        cls = _section_type(sec)
        known = {f.name: f for f in fields(cls)}
        values[sec] = {}
        for key, raw in cp.items(sec):
            if key not in known:
                errs.append(f"{sec}.{key}: unknown key")
                continue
            kind = _field_kind(cls, key)
            try:
                values[sec][key] = _convert(kind, raw)
            except ValueError as exc:
                errs.append(f"{sec}.{key}: {exc}")
    for path in REQUIRED:
        sec, key = path.split(".")
        if key not in values.get(sec, {}) and not any(e.startswith(path + ":") for e in errs):
            errs.append(f"{path}: required key missing")
    # value checks run on whatever did parse, so one pass reports everything
    cfg = RunConfig(**{sec: _section_type(sec)(**vals) for sec, vals in values.items()})
    errs += _check_values(cfg)
    if errs:
        raise ConfigError(errs)
    return cfg


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    return str(v)


def serialize(cfg: RunConfig) -> str:
    """INI text with every key; ``parse_config(serialize(c)) == c``."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    for sec in SECTIONS:
        obj = getattr(cfg, sec)
        cp[sec] = {f.name: _format(getattr(obj, f.name)) for f in fields(obj)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())
