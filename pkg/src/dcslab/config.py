"""Run configuration: one flat record shared by every suite.

Config files are plain ``key = value`` lines; ``#`` starts a comment.  Keys
mirror the command-line flags with dashes replaced by underscores.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields

from .errors import ConfigError

ACCEPTANCE_SEED = 20261019


@dataclass(frozen=True)
class RunConfig:
    seed: int = ACCEPTANCE_SEED
    replicas: int | None = None  # suite-specific default when None
    depth: int | None = None
    significance: float = 1e-3
    # minima
    m: int = 32
    arcsine_paths: int = 100_000
    arcsine_depth: int = 14
    # density
    a: float = 1.0
    b: float = 1.0
    bridges: int = 100_000
    bridge_depth: int = 12
    tail_paths: int = 4000
    tail_levels: int = 6
    # coupling
    H: float = 30.0
    oracle: str = "iid-uniform"
    invariance_oracles: str = "iid-linear,markov-cosine"
    level: float = 10.0
    n_max: int | None = None
    slope: float = 1.0
    amplitude: float = 0.5
    oracle_scale: float = 1.0
    proxy_inner: int = 400
    proxy_depth: int = 10
    # duality
    instances: int = 200
    max_size: int = 8
    brute_force_size: int = 4
    instance_file: str | None = None
    # rational
    L: int = 256
    sweeps: int = 50
    x_max: int = 5
    shift_lo: int = -1
    shift_hi: int = 5

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def resolved(self, name: str, default):
        v = getattr(self, name)
        return default if v is None else v


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw):
    if key not in _TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    if raw is None:
        return None
    kind = _TYPES[key]
    if isinstance(raw, str) and raw.strip().lower() in ("none", "") and "None" in kind:
        return None
    try:
        if kind.startswith("int"):
            v = raw if isinstance(raw, int) else int(str(raw).strip())
        elif kind.startswith("float"):
            v = float(raw)
        else:
            v = str(raw).strip()
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return v


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        out[key] = _coerce(key, value)
    return out


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            return parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc


def build_config(file_values: dict | None = None, overrides: dict | None = None) -> RunConfig:
    """File values first, then explicit overrides (flags) on top."""
    values = {}
    for src in (file_values or {}, overrides or {}):
        for k, v in src.items():
            values[k] = _coerce(k, v)
    cfg = RunConfig(**values)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    need(cfg.seed >= 0 and cfg.seed < 2**64, "seed must be a 64-bit unsigned integer")
    need(cfg.replicas is None or cfg.replicas >= 1, "replicas must be >= 1")
    need(0 < cfg.significance < 1, "significance must be in (0, 1)")
    need(cfg.m >= 1, "m must be >= 1")
    need(cfg.H > 0, "H must be positive")
    need(cfg.bridges >= 100 and cfg.arcsine_paths >= 100, "acceptance-grade runs need at least 100 samples")
    need(cfg.L >= 1 and cfg.sweeps >= 1, "L and sweeps must be positive")
    need(cfg.x_max >= 1, "x_max must be >= 1")
    need(cfg.shift_lo <= cfg.shift_hi, "shift_lo must not exceed shift_hi")


def config_header(cfg: RunConfig, version: str) -> str:
    """One-line comment embedding the full config, for text artifacts."""
    items = ";".join(f"{k}={v}" for k, v in cfg.to_dict().items())
    return f"# dcslab {version}; {items}"
