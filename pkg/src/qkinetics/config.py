"""Run configuration: YAML schema, flag overrides and validation."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields

import yaml

from .constants import SODIUM_MASS, SODIUM_SCATTERING_LENGTH

SUBCOMMANDS = ("kmc", "uu", "condensate", "regime", "basis-check")


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


@dataclass
class RunConfig:
    """Every knob of a run.  ``None`` means "unset"; see :data:`REQUIRED`.

    Units: ``m`` kg, ``a`` m, ``T`` K, ``rho`` 1/m^3, ``l_c`` and ``L`` m,
    ``eta`` J, times in the natural unit of each subcommand (1/gamma for
    ``kmc`` and ``uu``, seconds for ``condensate``).  ``kT_reduced`` is
    ``kT / epsilon0`` on the mode lattice.
    """

    subcommand: str
    seed: int | None = None
    out: str = "qk_out"
    threads: int = 1
    # gas
    m: float = SODIUM_MASS
    a: float = SODIUM_SCATTERING_LENGTH
    T: float | None = None
    rho: float | None = None
    l_c: float | None = None
    lambda_mfp: float | None = None
    factor: float = 10.0
    # lattice
    L: float = 1e-5
    z_max: int = 1
    modes: list | None = None
    # dynamics
    gamma: float = 1.0
    t_end: float | None = None
    n_samples: int = 101
    n_traj: int = 1
    initial: list | None = None
    per_mode: bool = True
    kT_reduced: float = 2.0
    mu_over_kT: float = -1.0
    perturbation: float = 0.0
    eta: float | None = None
    phi0_re: float = 1.0
    phi0_im: float = 0.0
    rho0: float = 0.0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)


FIELD_TYPES = {
    "subcommand": str, "seed": int, "out": str, "threads": int,
    "m": float, "a": float, "T": float, "rho": float, "l_c": float,
    "lambda_mfp": float, "factor": float, "L": float, "z_max": int, "modes": list,
    "gamma": float, "t_end": float, "n_samples": int, "n_traj": int, "initial": list,
    "per_mode": bool, "kT_reduced": float, "mu_over_kT": float, "perturbation": float,
    "eta": float, "phi0_re": float, "phi0_im": float, "rho0": float,
}

REQUIRED = {
    "kmc": ("t_end",),
    "uu": ("t_end",),
    "condensate": ("T",),
    "regime": ("T", "rho", "l_c"),
    "basis-check": (),
}

POSITIVE = ("m", "a", "T", "rho", "l_c", "lambda_mfp", "L", "gamma", "kT_reduced", "factor")
NONNEGATIVE = ("t_end", "eta", "rho0", "perturbation")

assert set(FIELD_TYPES) == {f.name for f in fields(RunConfig)}


def _coerce(key, value):
    kind = FIELD_TYPES[key]
    if value is None:
        return None
    try:
        if kind is float:
            if isinstance(value, bool):
                raise TypeError
            v = float(value)  # YAML 1.1 reads "1e-5" as a string
            if not math.isfinite(v):
                raise ValueError
            return v
        if kind is int:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise TypeError
            return int(value)
        if kind is bool:
            if not isinstance(value, bool):
                raise TypeError
            return value
        if kind is list:
            if not isinstance(value, (list, tuple)):
                raise TypeError
            return [list(v) if isinstance(v, (list, tuple)) else int(v) for v in value]
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected {kind.__name__}, got {value!r}") from None


def build_config(mapping: dict) -> RunConfig:
    """Validate a plain mapping and return a :class:`RunConfig`."""
    if not isinstance(mapping, dict):
        raise ConfigError("configuration must be a mapping of keys to values")
    unknown = sorted(set(mapping) - set(FIELD_TYPES))
    if unknown:
        raise ConfigError(f"unknown configuration key: {unknown[0]}")
    sub = mapping.get("subcommand")
    if sub not in SUBCOMMANDS:
        raise ConfigError(f"subcommand: must be one of {', '.join(SUBCOMMANDS)}, got {sub!r}")
    values = {k: _coerce(k, v) for k, v in mapping.items()}
    cfg = RunConfig(**values)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    for key in REQUIRED[cfg.subcommand]:
        if getattr(cfg, key) is None:
            raise ConfigError(f"{key}: required for '{cfg.subcommand}'")
    for key in POSITIVE:
        v = getattr(cfg, key)
        if v is not None and not v > 0:
            raise ConfigError(f"{key}: must be positive, got {v}")
    for key in NONNEGATIVE:
        v = getattr(cfg, key)
        if v is not None and v < 0:
            raise ConfigError(f"{key}: must be nonnegative, got {v}")
    if cfg.seed is not None and not 0 <= cfg.seed < 2**64:
        raise ConfigError(f"seed: must be an unsigned 64-bit integer, got {cfg.seed}")
    if cfg.threads < 1:
        raise ConfigError("threads: must be at least 1")
    if cfg.z_max < 0:
        raise ConfigError("z_max: must be nonnegative")
    if cfg.n_samples < 2:
        raise ConfigError("n_samples: must be at least 2")
    if cfg.n_traj < 1:
        raise ConfigError("n_traj: must be at least 1")
    if cfg.factor is not None and cfg.factor <= 1:
        raise ConfigError("factor: must exceed 1")
    if cfg.subcommand == "condensate" and cfg.mu_over_kT > 0:
        raise ConfigError("mu_over_kT: must be <= 0 for 'condensate'")
    if cfg.modes is not None:
        if not all(isinstance(z, list) and len(z) == 3 for z in cfg.modes):
            raise ConfigError("modes: expected a list of integer triples")
    if cfg.initial is not None:
        if any(isinstance(v, list) or v < 0 for v in cfg.initial):
            raise ConfigError("initial: expected nonnegative integer occupations")


def load_yaml(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config: malformed YAML in {path}: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config: {path} must contain a mapping")
    return data


def parse_config(subcommand: str, path=None, overrides: dict | None = None) -> RunConfig:
    """Merge file values with flag overrides (flags win) and validate."""
    mapping = load_yaml(path) if path is not None else {}
    file_sub = mapping.pop("subcommand", subcommand)
    if file_sub != subcommand:
        raise ConfigError(f"subcommand: file says {file_sub!r} but '{subcommand}' was invoked")
    mapping.update({k: v for k, v in (overrides or {}).items() if v is not None})
    mapping["subcommand"] = subcommand
    return build_config(mapping)


def config_from_yaml(text: str) -> RunConfig:
    return build_config(yaml.safe_load(text))
