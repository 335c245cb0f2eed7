"""Run configuration: a flat ``key = value`` file with dotted section names.

Example::

    # Clifford torus at rest
    grid.n1 = 64
    grid.n2 = 64
    torus.a = 1.4142135623730951
    torus.r = 1.0
    time.dt = 1e-4
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ParseError, ValidationError


@dataclass(frozen=True)
class GridConfig:
    n1: int = 64
    n2: int = 64


@dataclass(frozen=True)
class TorusConfig:
    a: float = 2.0
    r: float = 1.0


@dataclass(frozen=True)
class PhysicsConfig:
    eps0: float = 1.0
    s: int = 6


@dataclass(frozen=True)
class TimeConfig:
    dt: float = 1e-4
    t_end: float = 0.1
    cfl: float = 0.5
    corrections: int = 1
    enforce_dt_max: bool = False
    max_steps: int = 1_000_000
    overflow: str = "stop"


@dataclass(frozen=True)
class InitialConfig:
    kind: str = "rest"
    amplitude: float = 0.0
    band: int = 3


@dataclass(frozen=True)
class PicardConfig:
    T_window: float = 0.02
    max_sweeps: int = 30
    tol: float = 1e-7
    delta: float = 0.1


@dataclass(frozen=True)
class ToleranceConfig:
    c0: float = 1e-3
    eps_degenerate: float = 1e-8
    a0: float = 1e-8
    pressure: float = 1e-10
    pressure_max_iter: int = 500
    solvability: float = 1e-6


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "output"
    stride: int = 10
    snapshots: bool = True


@dataclass(frozen=True)
class RunConfig:
    mode: str = "direct"
    seed: int = 0


@dataclass(frozen=True)
class Config:
    grid: GridConfig = field(default_factory=GridConfig)
    torus: TorusConfig = field(default_factory=TorusConfig)
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    picard: PicardConfig = field(default_factory=PicardConfig)
    tol: ToleranceConfig = field(default_factory=ToleranceConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def replace(self, **dotted) -> "Config":
        """Copy with dotted overrides, e.g. ``cfg.replace(**{"time.dt": 1e-3})``."""
        return from_mapping({**to_mapping(self), **dotted})


def _sections():
    return {f.name: getattr(Config(), f.name) for f in dataclasses.fields(Config)}


def to_mapping(cfg: Config) -> dict:
    out = {}
    for sec, obj in ((f.name, getattr(cfg, f.name)) for f in dataclasses.fields(cfg)):
        for f in dataclasses.fields(obj):
            out[f"{sec}.{f.name}"] = getattr(obj, f.name)
    return out


def _coerce(raw, default, key, line=None):
    if isinstance(raw, str):
        text = raw.strip()
        if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
            text = text[1:-1]
    else:
        text = raw
    try:
        if isinstance(default, bool):
            if isinstance(text, bool):
                return text
            low = str(text).lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            val = float(text)
            if val != int(val):
                raise ValueError(text)
            return int(val)
        if isinstance(default, float):
            return float(text)
        return str(text)
    except (TypeError, ValueError):
        kind = type(default).__name__
        raise ParseError(f"cannot read {raw!r} as {kind}", line=line, key=key) from None


def from_mapping(values: dict, lines: dict | None = None) -> Config:
    defaults = _sections()
    parts = {sec: {} for sec in defaults}
    for key, raw in values.items():
        line = (lines or {}).get(key)
        sec, _, name = key.partition(".")
        if sec not in defaults or not any(f.name == name for f in dataclasses.fields(defaults[sec])):
            raise ParseError("unknown key", line=line, key=key)
        parts[sec][name] = _coerce(raw, getattr(defaults[sec], name), key, line)
    cfg = Config(**{sec: dataclasses.replace(defaults[sec], **kw) for sec, kw in parts.items()})
    validate(cfg)
    return cfg


def parse_text(text: str) -> Config:
    values, lines = {}, {}
    for no, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        key, sep, val = body.partition("=")
        key, val = key.strip(), val.strip()
        if not sep or not key or not val:
            raise ParseError("expected 'key = value'", line=no)
        if key in values:
            raise ParseError("duplicate key", line=no, key=key)
        values[key], lines[key] = val, no
    return from_mapping(values, lines)


def parse_config(path) -> Config:
    return parse_text(Path(path).read_text())


def format_config(cfg: Config) -> str:
    return "".join(f"{k} = {v}\n" for k, v in to_mapping(cfg).items())


def validate(cfg: Config) -> None:
    def need(ok, constraint, key):
        if not ok:
            raise ValidationError(constraint, key)

    for key in ("n1", "n2"):
        n = getattr(cfg.grid, key)
        need(n >= 8 and n % 2 == 0, f"{key} even and >= 8", f"grid.{key}")
    need(cfg.torus.a > cfg.torus.r > 0, "a > r > 0", "torus.a")
    need(cfg.physics.eps0 > 0, "eps0 > 0", "physics.eps0")
    need(cfg.physics.s >= 6 and cfg.physics.s % 2 == 0, "s even and >= 6", "physics.s")
    need(cfg.time.dt > 0, "dt > 0", "time.dt")
    need(cfg.time.t_end >= cfg.time.dt, "t_end >= dt", "time.t_end")
    need(cfg.time.cfl > 0, "cfl > 0", "time.cfl")
    need(cfg.time.corrections >= 1, "corrections >= 1", "time.corrections")
    need(cfg.time.max_steps >= 1, "max_steps >= 1", "time.max_steps")
    need(cfg.time.overflow in ("stop", "fail"), "overflow in {stop, fail}", "time.overflow")
    if cfg.time.overflow == "fail":
        need(n_steps(cfg.time.t_end, cfg.time.dt) <= cfg.time.max_steps,
             "t_end / dt <= max_steps", "time.max_steps")
    need(cfg.initial.kind in ("rest", "stream_function", "normal_mode"),
         "kind in {rest, stream_function, normal_mode}", "initial.kind")
    need(cfg.initial.amplitude >= 0, "amplitude >= 0", "initial.amplitude")
    need(cfg.initial.band >= 1, "band >= 1", "initial.band")
    need(cfg.run.mode in ("direct", "picard"), "mode in {direct, picard}", "run.mode")
    need(cfg.picard.T_window > 0, "T_window > 0", "picard.T_window")
    need(cfg.picard.max_sweeps >= 1, "max_sweeps >= 1", "picard.max_sweeps")
    need(cfg.picard.tol > 0, "tol > 0", "picard.tol")
    need(cfg.picard.delta > 0, "delta > 0", "picard.delta")
    if cfg.run.mode == "picard":
        need(cfg.picard.T_window <= cfg.time.t_end, "T_window <= t_end", "picard.T_window")
        need(cfg.picard.T_window >= cfg.time.dt, "T_window >= dt", "picard.T_window")
    for key in ("c0", "eps_degenerate", "a0", "pressure", "solvability"):
        need(getattr(cfg.tol, key) > 0, f"{key} > 0", f"tol.{key}")
    need(cfg.tol.pressure_max_iter >= 1, "pressure_max_iter >= 1", "tol.pressure_max_iter")
    need(cfg.output.stride >= 1, "stride >= 1", "output.stride")


def n_steps(span: float, dt: float) -> int:
    """Number of steps of size dt covering span (rounded to the nearest step)."""
    return max(1, int(round(span / dt)))
