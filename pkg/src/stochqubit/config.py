"""Flat key = value experiment configuration.

Files are UTF-8 text with one ``key = value`` per line and ``#`` comments;
there are no sections.  Every rejection raises ``ConfigError`` naming the
key and the violated constraint.
"""
from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, fields, replace
import math

from .dynamics import POLE_POLICIES, SCHEMES, BathParameters
from .errors import ConfigError
from .fpe_grid import MODES
from .two_spin import BATH_MODES

# g^2 dt above this needs allow_large_dt = true
DT_G2_MAX = 0.01
INITIALS = ("delta", "uniform")
FPE_SCHEMES = ("split", "explicit")
SEED_MAX = 2 ** 64


@dataclass(frozen=True)
class ExperimentConfig:
    omega: float = 1.0
    eta: float = 1.0
    e0: float = 1.0
    alpha0: float = 1.0
    theta0: float = 0.7853981633974483
    phi0: float = 0.0
    theta1: float | None = None
    scheme: str = "unitary"
    bath_mode: str = "shared"
    pole_policy: str = "auto"
    initial: str = "delta"
    dt: float = 1e-3
    t_end: float = 1.0
    n_traj: int = 1000
    snapshot_stride: int = 100
    block_size: int = 4096
    n_theta: int = 64
    n_phi: int = 64
    operator_mode: str = "sde_consistent"
    fpe_scheme: str = "split"
    n_max: int = 3
    m_max: int = 3
    seed: int = 0
    output_dir: str = "out"
    allow_large_dt: bool = False

    @property
    def params(self) -> BathParameters:
        return BathParameters(self.omega, self.eta, self.e0)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    @property
    def r0(self) -> float:
        return math.sqrt(max(self.alpha0 ** 2 - math.cos(self.theta0) ** 2, 0.0))

    def echo(self) -> dict:
        return asdict(self)


_CHOICES = {
    "scheme": SCHEMES,
    "bath_mode": BATH_MODES,
    "pole_policy": POLE_POLICIES,
    "initial": INITIALS,
    "operator_mode": MODES,
    "fpe_scheme": FPE_SCHEMES,
}
_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _convert(key: str, raw: str):
    kind = _TYPES[key]
    text = raw.strip()
    try:
        if kind == "bool":
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError
        if kind == "int":
            return int(text, 0)
        if kind in ("float", "float | None"):
            if kind == "float | None" and text.lower() in ("", "none"):
                return None
            return float(text)
    except ValueError:
        raise ConfigError(key, f"cannot parse {raw!r} as {kind}") from None
    return text


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    """Check every field; return cfg unchanged or raise ConfigError."""
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, float) and not math.isfinite(v):
            raise ConfigError(f.name, "must be finite")
    for key in ("omega", "eta", "e0"):
        if getattr(cfg, key) < 0:
            raise ConfigError(key, "must be >= 0")
    for key, allowed in _CHOICES.items():
        if getattr(cfg, key) not in allowed:
            raise ConfigError(key, f"must be one of {', '.join(allowed)}")
    if not 0.0 <= cfg.alpha0 <= 1.0:
        raise ConfigError("alpha0", "must lie in [0, 1]")
    if not 0.0 <= cfg.theta0 <= math.pi:
        raise ConfigError("theta0", "must lie in [0, pi]")
    if abs(math.cos(cfg.theta0)) > cfg.alpha0 + 1e-12:
        raise ConfigError("theta0", "|cos theta0| must not exceed alpha0")
    if cfg.theta1 is not None and not 0.0 <= cfg.theta1 <= math.pi:
        raise ConfigError("theta1", "must lie in [0, pi]")
    if not cfg.dt > 0:
        raise ConfigError("dt", "must be > 0")
    if cfg.t_end < 0:
        raise ConfigError("t_end", "must be >= 0")
    if abs(cfg.n_steps * cfg.dt - cfg.t_end) > 1e-9 * max(1.0, cfg.t_end):
        raise ConfigError("t_end", "must be an integer multiple of dt")
    if cfg.params.g ** 2 * cfg.dt > DT_G2_MAX and not cfg.allow_large_dt:
        raise ConfigError("dt", f"g^2 dt must be <= {DT_G2_MAX} unless allow_large_dt = true")
    for key in ("n_traj", "snapshot_stride", "block_size"):
        if getattr(cfg, key) < 1:
            raise ConfigError(key, "must be >= 1")
    for key in ("n_theta", "n_phi"):
        if getattr(cfg, key) < 4:
            raise ConfigError(key, "must be >= 4")
    for key in ("n_max", "m_max"):
        if getattr(cfg, key) < 0:
            raise ConfigError(key, "must be >= 0")
    if not 0 <= cfg.seed < SEED_MAX:
        raise ConfigError("seed", "must lie in [0, 2^64)")
    if not cfg.output_dir:
        raise ConfigError("output_dir", "must be non-empty")
    return cfg


def parse_text(text: str) -> dict:
    """key -> converted value for every entry of a flat config text."""
    parser = configparser.ConfigParser(comment_prefixes=("#",), inline_comment_prefixes=("#",),
                                       interpolation=None, delimiters=("=",))
    parser.optionxform = str
    try:
        parser.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ConfigError("<file>", f"malformed line: {exc}") from None
    out = {}
    for key, raw in parser["config"].items():
        if key not in _TYPES:
            raise ConfigError(key, "unknown key")
        out[key] = _convert(key, raw)
    return out


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Defaults, then the file at ``path``, then ``overrides``; validated."""
    values = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            values.update(parse_text(fh.read()))
    for key, v in (overrides or {}).items():
        if key not in _TYPES:
            raise ConfigError(key, "unknown key")
        if v is not None:
            values[key] = v
    return validate(replace(ExperimentConfig(), **values))


def dump_config(cfg: ExperimentConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in cfg.echo().items())
