"""Scenario configuration files (TOML with [lattice], [emitters], [run])."""
from __future__ import annotations

from dataclasses import asdict, dataclass
import math
import re

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .bath import EmitterArray, a_ho_from_depth, coupling_kappa, rabi_for_kappa

__all__ = ["ConfigError", "ScenarioConfig", "parse_config", "load_config"]


class ConfigError(ValueError):
    """Invalid configuration text.

    Attributes
    ----------
    line, column : int or None
        Position of a syntax error (1-based).
    field : str or None
        Dotted name of the offending field for validation errors.
    """

    def __init__(self, msg, line=None, column=None, field=None):
        super().__init__(msg)
        self.line, self.column, self.field = line, column, field


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario; energies in E_r, times in hbar/E_r, lengths in 1/k.

    Exactly one of ``rabi`` / ``kappa`` was given; the other is derived.
    ``n_sites`` is an ``int`` or ``math.inf`` (polariton route).
    """

    depth_a: float = 20.0
    depth_b: float = 2.5
    cutoff: int = 10
    rabi: float = 0.0
    kappa: float = 0.0
    detuning: float = 1.32
    n_sites: int | float = 1
    a_ho: float = 0.0
    t_max: float = 10.0
    n_t: int = 101
    mode_time: float | None = None
    q_max: float = 3.0
    n_q: int = 257
    z_max: float = 10.0
    n_z: int = 401
    gap: int | None = None
    mode: str = "tight"
    oracle: bool = False
    out: str = "out"
    coupling_given: str = "kappa"

    @property
    def polariton(self) -> bool:
        return not math.isfinite(self.n_sites)

    def emitters(self) -> EmitterArray:
        if self.polariton:
            return EmitterArray(None, self.a_ho, self.rabi, self.detuning)
        return EmitterArray.chain(int(self.n_sites), self.a_ho, self.rabi, self.detuning)

    def echo(self) -> dict:
        """Every field with its effective value (for output headers)."""
        d = asdict(self)
        d["n_sites"] = "inf" if self.polariton else int(self.n_sites)
        return d


_SCHEMA = {
    "lattice": {"depth_a": float, "depth_b": float, "cutoff": int},
    "emitters": {"rabi": float, "kappa": float, "detuning": float,
                 "n_sites": "sites", "a_ho": float, "mode": ("tight", "exact"),
                 "gap": int},
    "run": {"t_max": float, "n_t": int, "mode_time": float, "q_max": float,
            "n_q": int, "z_max": float, "n_z": int, "oracle": bool, "out": str},
}


def _syntax_error(exc) -> ConfigError:
    m = re.search(r"line (\d+), column (\d+)", str(exc))
    line, col = (int(m.group(1)), int(m.group(2))) if m else (None, None)
    return ConfigError(f"syntax error: {exc}", line, col)


def _coerce(name, kind, value):
    if kind == "sites":
        if isinstance(value, str) and value.strip().lower() in ("inf", "infinite"):
            return math.inf
        kind = int
    if isinstance(kind, tuple):
        if value not in kind:
            raise ConfigError(f"{name} must be one of {', '.join(kind)}", field=name)
        return value
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be true or false", field=name)
        return value
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"{name} must be a string", field=name)
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number", field=name)
    if kind is int:
        if float(value) != int(value):
            raise ConfigError(f"{name} must be an integer", field=name)
        return int(value)
    if not math.isfinite(value):
        raise ConfigError(f"{name} must be finite", field=name)
    return float(value)


def parse_config(text: str) -> ScenarioConfig:
    """Parse and validate scenario text.

    Raises
    ------
    ConfigError
        With ``line``/``column`` for syntax errors and ``field`` for unknown
        keys, wrong types, out-of-range values or both/neither of
        ``rabi``/``kappa``.
    """
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise _syntax_error(exc) from None
    vals = {}
    for section, body in raw.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]", field=section)
        if not isinstance(body, dict):
            raise ConfigError(f"{section} must be a table", field=section)
        for key, value in body.items():
            name = f"{section}.{key}"
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {name}", field=name)
            vals[key] = _coerce(name, _SCHEMA[section][key], value)

    has_r, has_k = "rabi" in vals, "kappa" in vals
    if has_r == has_k:
        raise ConfigError("give exactly one of emitters.rabi and emitters.kappa",
                          field="emitters.rabi" if has_r else "emitters.kappa")
    if "depth_a" in vals and vals["depth_a"] <= 0:
        raise ConfigError("lattice.depth_a must be positive", field="lattice.depth_a")
    for key, sec in (("cutoff", "lattice"), ("n_t", "run"), ("n_q", "run"), ("n_z", "run")):
        if key in vals and vals[key] < 1:
            raise ConfigError(f"{sec}.{key} must be at least 1", field=f"{sec}.{key}")
    for key, sec in (("t_max", "run"), ("q_max", "run"), ("z_max", "run"), ("a_ho", "emitters")):
        if key in vals and vals[key] <= 0:
            raise ConfigError(f"{sec}.{key} must be positive", field=f"{sec}.{key}")
    n = vals.get("n_sites", 1)
    if n != math.inf and n < 1:
        raise ConfigError("emitters.n_sites must be >= 1 or \"inf\"", field="emitters.n_sites")
    if vals.get("rabi", 0) < 0 or vals.get("kappa", 0) < 0:
        raise ConfigError("coupling must be non-negative",
                          field="emitters.rabi" if has_r else "emitters.kappa")

    depth_a = vals.get("depth_a", ScenarioConfig.depth_a)
    a = vals.pop("a_ho", None) or a_ho_from_depth(depth_a)
    if has_k:
        vals["rabi"] = rabi_for_kappa(vals["kappa"], a)
    else:
        vals["kappa"] = coupling_kappa(EmitterArray(None, a, vals["rabi"], 0.0))
    return ScenarioConfig(**vals, a_ho=a, coupling_given="kappa" if has_k else "rabi")


def load_config(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
