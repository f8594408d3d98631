"""Simulation configuration: an INI file with a strict schema.

Every key has a documented default, so an empty file is a valid
configuration. Unknown sections or keys and every constraint violation are
collected and reported together.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .free_boundary import default_slab_length
from .geometry import RadiusBounds
from .macro import Profile, ReservoirSpec
from .numerics import GridSpec

# section -> key -> (type, default); None as default means "derived"
SCHEMA = {
    "physics": {
        "theta": (float, 0.1),
        "mu1": (float, 1.0),
        "lambda0": (float, 1.0),
        "c_s": (float, 1.0),
        "alpha_c": (float, 1.0),
    },
    "bounds": {"r_min": (float, 0.05), "r_max": (float, 0.45), "M0": (float, 1.0)},
    "fields": {
        "p1": (float, 1.0),
        "p2": (float, 0.0),
        "p0_profile": (str, "linear_x1"),
        "c0_profile": (str, "constant"),
        "c0": (float, 1.0),
        "c0_s1": (float, 1.0),
        "c0_s2": (float, 0.0),
        "r0_profile": (str, "constant"),
        "r0": (float, 0.3),
        "r0_lo": (float, 0.3),
        "r0_hi": (float, 0.3),
    },
    "grid": {"n": (int, 16), "cell_n": (int, 16), "knots": (int, 5)},
    "time": {"T": (float, 1.0), "dt": (float, 0.05), "T_slab": (float, None)},
    "solver": {
        "tol": (float, 1e-12),
        "cell_tol": (float, 1e-10),
        "picard_tol": (float, 1e-10),
        "picard_max_iter": (int, 30),
        "relaxation": (float, 1.0),
    },
    "head_bc": {"enabled": (bool, False), "S1": (float, 0.0), "S2": (float, 0.0)},
    "output": {"snapshot_every": (int, 0), "table": (str, "")},
}

R0_PROFILES = {"constant": None, "linear_x1": 0, "linear_x2": 1, "linear_x3": 2}
C0_PROFILES = {"constant": None, "linear_x1": 0}
P0_PROFILES = {"linear_x1": 0}


@dataclass(frozen=True)
class SimulationConfig:
    theta: float
    mu1: float
    lambda0: float
    c_s: float
    alpha_c: float
    r_min: float
    r_max: float
    M0: float
    p1: float
    p2: float
    p0_profile: str
    c0_profile: str
    c0: float
    c0_s1: float
    c0_s2: float
    r0_profile: str
    r0: float
    r0_lo: float
    r0_hi: float
    n: int
    cell_n: int
    knots: int
    T: float
    dt: float
    T_slab: float
    tol: float
    cell_tol: float
    picard_tol: float
    picard_max_iter: int
    relaxation: float
    head_bc_enabled: bool
    head_S1: float
    head_S2: float
    snapshot_every: int
    table: str
    source_dir: str = "."

    @property
    def steps(self) -> int:
        return round(self.T / self.dt) if self.T > 0 else 0

    @property
    def slab_steps(self) -> int:
        return max(1, math.floor(self.T_slab / self.dt + 1e-9)) if self.T > 0 else 1

    @property
    def bounds(self) -> RadiusBounds:
        return RadiusBounds(self.r_min, self.r_max, self.theta, self.M0)

    def c0_profile_obj(self) -> Profile:
        if self.c0_profile == "constant":
            return Profile.constant(self.c0)
        return Profile(self.c0_s1, self.c0_s2, 0)

    def r0_profile_obj(self) -> Profile:
        axis = R0_PROFILES[self.r0_profile]
        return Profile.constant(self.r0) if axis is None else Profile(self.r0_lo, self.r0_hi, axis)

    def reservoir(self) -> ReservoirSpec:
        p0 = Profile(self.p1, self.p2, 0) if self.p1 != self.p2 else Profile.constant(self.p1)
        return ReservoirSpec(GridSpec.unit_cube(self.n), p0, self.c0_profile_obj())

    def r0_field(self):
        spec = self.reservoir()
        return self.r0_profile_obj()(*spec.centers())

    def head_bc(self) -> dict | None:
        return {"S1": self.head_S1, "S2": self.head_S2} if self.head_bc_enabled else None

    def table_path(self) -> Path | None:
        if not self.table:
            return None
        p = Path(self.table)
        return p if p.is_absolute() else Path(self.source_dir) / p

    def to_ini(self) -> str:
        """Canonical text of this configuration (all keys, fixed order)."""
        values = self._section_values()
        lines = []
        for section, keys in SCHEMA.items():
            lines.append(f"[{section}]")
            for key in keys:
                v = values[section][key]
                if isinstance(v, bool):
                    text = "true" if v else "false"
                elif isinstance(v, float):
                    text = repr(v)
                else:
                    text = str(v)
                lines.append(f"{key} = {text}")
            lines.append("")
        return "\n".join(lines)

    def _section_values(self) -> dict:
        out = {}
        for section, keys in SCHEMA.items():
            out[section] = {k: getattr(self, _attr(section, k)) for k in keys}
        return out


def _attr(section: str, key: str) -> str:
    if section == "head_bc":
        return "head_bc_enabled" if key == "enabled" else f"head_{key}"
    return key


def _parse(kind, raw: str):
    raw = raw.strip()
    if kind is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    return raw


def config_from_mapping(data: dict, source_dir: str = ".") -> SimulationConfig:
    """Build and validate a config from ``{section: {key: value}}``.

    Raises:
        ConfigError: listing every unknown key and violated constraint.
    """
    problems = []
    values = {}
    for section in data:
        if section not in SCHEMA:
            problems.append(f"unknown section [{section}]")
    for section, keys in SCHEMA.items():
        given = dict(data.get(section, {}))
        for key in given:
            if key not in keys:
                problems.append(f"unknown key {section}.{key}")
        for key, (kind, default) in keys.items():
            name = f"{section}.{key}"
            if key in given:
                raw = given[key]
                try:
                    value = _parse(kind, raw) if isinstance(raw, str) else kind(raw)
                except (TypeError, ValueError):
                    problems.append(f"{name}: cannot parse {raw!r} as {kind.__name__}")
                    value = default
                if kind is float and value is not None and value != value:
                    problems.append(f"{name}: NaN is not allowed")
            else:
                value = default
            values[_attr(section, key)] = value
    problems += _constraints(values)
    if problems:
        raise ConfigError(problems)
    if values["T_slab"] is None:
        values["T_slab"] = default_slab_length(values["T"], values["theta"], values["M0"])
    cfg = SimulationConfig(**values, source_dir=str(source_dir))
    return cfg


def _constraints(v: dict) -> list[str]:
    out = []

    def positive(section, key):
        x = v[key]
        if x is None or not x > 0:
            out.append(f"{section}.{key} must be positive, got {x}")
            return False
        return True

    for key in ("theta", "mu1", "lambda0", "c_s", "alpha_c"):
        positive("physics", key)
    positive("bounds", "M0")
    if not (0.0 < v["r_min"] < v["r_max"] < 0.5):
        out.append(f"bounds.r_min and bounds.r_max need 0 < r_min < r_max < 1/2, got {v['r_min']}, {v['r_max']}")
    if v["p0_profile"] not in P0_PROFILES:
        out.append(f"fields.p0_profile must be one of {sorted(P0_PROFILES)}, got {v['p0_profile']!r}")
    if v["c0_profile"] not in C0_PROFILES:
        out.append(f"fields.c0_profile must be one of {sorted(C0_PROFILES)}, got {v['c0_profile']!r}")
    else:
        keys = ("c0",) if v["c0_profile"] == "constant" else ("c0_s1", "c0_s2")
        for key in keys:
            if not 0.0 <= v[key] <= 1.0:
                out.append(f"fields.{key} must lie in [0, 1], got {v[key]}")
    if v["r0_profile"] not in R0_PROFILES:
        out.append(f"fields.r0_profile must be one of {sorted(R0_PROFILES)}, got {v['r0_profile']!r}")
    else:
        keys = ("r0",) if v["r0_profile"] == "constant" else ("r0_lo", "r0_hi")
        for key in keys:
            if not v["r_min"] <= v[key] <= v["r_max"]:
                out.append(
                    f"fields.{key} must lie in [bounds.r_min, bounds.r_max] = [{v['r_min']}, {v['r_max']}], got {v[key]}"
                )
    if v["n"] < 4:
        out.append(f"grid.n must be >= 4, got {v['n']}")
    if v["cell_n"] < 16:
        out.append(f"grid.cell_n must be >= 16, got {v['cell_n']}")
    if v["knots"] < 5:
        out.append(f"grid.knots must be >= 5, got {v['knots']}")
    T, dt, ts = v["T"], v["dt"], v["T_slab"]
    if T is None or T < 0:
        out.append(f"time.T must be non-negative, got {T}")
    elif T > 0:
        if positive("time", "dt"):
            if ts is not None:
                if not ts > 0:
                    out.append(f"time.T_slab must be positive, got {ts}")
                else:
                    if dt > ts:
                        out.append(f"time.dt ({dt}) exceeds time.T_slab ({ts})")
                    if ts > T:
                        out.append(f"time.T_slab ({ts}) exceeds time.T ({T})")
                    if not _multiple(ts, dt):
                        out.append(f"time.T_slab ({ts}) must be a multiple of time.dt ({dt})")
            elif dt > T:
                out.append(f"time.dt ({dt}) exceeds time.T ({T})")
            if not _multiple(T, dt):
                out.append(f"time.T ({T}) must be a multiple of time.dt ({dt})")
    for key in ("tol", "cell_tol", "picard_tol"):
        if not 0 < v[key] < 1:
            out.append(f"solver.{key} must lie in (0, 1), got {v[key]}")
    if v["picard_max_iter"] < 1:
        out.append(f"solver.picard_max_iter must be >= 1, got {v['picard_max_iter']}")
    if not 0 < v["relaxation"] <= 1:
        out.append(f"solver.relaxation must lie in (0, 1], got {v['relaxation']}")
    if v["snapshot_every"] < 0:
        out.append(f"output.snapshot_every must be >= 0, got {v['snapshot_every']}")
    return out


def _multiple(a: float, b: float) -> bool:
    q = a / b
    return abs(q - round(q)) <= 1e-9 * max(1.0, abs(q))


def load_config(path) -> SimulationConfig:
    """Read an INI file; relative paths inside it resolve against its directory.

    Raises:
        ConfigError: missing/unparseable file, unknown keys or violated constraints.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"config file {path} does not exist"])
    parser = configparser.ConfigParser(
        interpolation=None, default_section="__none__", inline_comment_prefixes=(";",)
    )
    parser.optionxform = str  # keys are case sensitive (T, M0, S1)
    try:
        parser.read_string(path.read_text(), source=str(path))
    except configparser.Error as exc:
        raise ConfigError([f"cannot parse {path}: {exc}"]) from None
    data = {s: dict(parser.items(s)) for s in parser.sections()}
    return config_from_mapping(data, source_dir=str(path.parent))

