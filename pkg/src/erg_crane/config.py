"""TOML scenario configuration: schema, defaults, validation and round-trip.

Angles in a file are read in ``angle_unit`` (top-level key, ``"deg"`` by
default; angular rates follow the same unit per second).  The parsed
:class:`Config` always holds radians, and :func:`dump_config` writes
radians, so ``parse -> dump -> parse`` is the identity.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

import tomli
import tomli_w

from .constraints import SWING_MAX, THETA3_MAX, THETA3_MIN, default_safety_margin
from .crane_model import CraneParams
from .synthesis import DEFAULT_Q, DEFAULT_R, REFERENCE_GAIN

BUNDLED_SCENARIO = "paper_scenario.toml"

_ANGLE_UNITS = {"deg": math.pi / 180.0, "rad": 1.0}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending section and field."""


@dataclass(frozen=True)
class CraneSection:
    M: float = 2.5
    m: float = 3.5
    M1: float = 6.0
    L: float = 2.0
    l: float = 1.0
    L1: float = 0.5
    g: float = 9.81
    # None is resolved to the model defaults while parsing
    Jx: float | None = None
    Jy: float | None = None
    Jz: float | None = None
    Ib: float | None = None

    def __post_init__(self):
        resolved = CraneParams(**{f.name: getattr(self, f.name) for f in fields(self)})
        for name in ("Jx", "Jy", "Jz", "Ib"):
            object.__setattr__(self, name, getattr(resolved, name))

    def params(self) -> CraneParams:
        return CraneParams(**asdict(self))


@dataclass(frozen=True)
class LqrSection:
    gain: str = "given"                  # "given": use K; "lqr": Kleinman from q_diag/r_diag
    K: tuple = tuple(tuple(row) for row in REFERENCE_GAIN.tolist())
    q_diag: tuple = tuple(float(v) for v in DEFAULT_Q.diagonal())
    r_diag: tuple = tuple(float(v) for v in DEFAULT_R.diagonal())
    operating_point: tuple = (math.pi / 3, 0.0)


@dataclass(frozen=True)
class ErgSection:
    k: float = 30.0
    eta: float = 1e-4
    zeta: float = math.radians(10.0)
    delta: float = math.radians(0.09)
    Ts: float = 0.01
    omega: float = 0.6


@dataclass(frozen=True)
class ConstraintsSection:
    theta3_min: float = THETA3_MIN
    theta3_max: float = THETA3_MAX
    swing_max: float = SWING_MAX
    payload_radius: float = 0.05
    grid_n: int = 200
    n_t: int = 8
    decay_rate: float = 0.2
    refine_steps: int = 40


@dataclass(frozen=True)
class ObstacleEntry:
    label: str
    center: tuple
    half_extents: tuple
    margin: float


@dataclass(frozen=True)
class ReferenceEntry:
    r: tuple
    switch: str = "on_convergence"
    value: float = 2e-2       # tolerance (angle) or switch time (s)


@dataclass(frozen=True)
class ScenarioSection:
    x0: tuple = (0.0, 0.0, 105 * math.pi / 180, math.pi / 2, 0.0, 0.0, 0.0, 0.0)
    references: tuple = (ReferenceEntry((59 * math.pi / 180, -48 * math.pi / 180)),
                         ReferenceEntry((88 * math.pi / 180, -58 * math.pi / 180)))
    duration: float = 60.0


@dataclass(frozen=True)
class IntegrationSection:
    dt_int: float = 1e-3


@dataclass(frozen=True)
class Config:
    crane: CraneSection = field(default_factory=CraneSection)
    lqr: LqrSection = field(default_factory=LqrSection)
    erg: ErgSection = field(default_factory=ErgSection)
    constraints: ConstraintsSection = field(default_factory=ConstraintsSection)
    obstacles: tuple = ()
    scenario: ScenarioSection = field(default_factory=ScenarioSection)
    integration: IntegrationSection = field(default_factory=IntegrationSection)


# ---------------------------------------------------------------- validation

def _number(where, value, positive=False, nonneg=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {type(value).__name__}")
    if integer and not isinstance(value, int):
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"{where}: must be finite")
    if positive and value <= 0:
        raise ConfigError(f"{where}: must be positive, got {value!r}")
    if nonneg and value < 0:
        raise ConfigError(f"{where}: must be non-negative, got {value!r}")
    return int(value) if integer else float(value)


def _vector(where, value, n, scale=1.0):
    if not isinstance(value, (list, tuple)) or len(value) != n:
        raise ConfigError(f"{where}: expected a list of {n} numbers")
    return tuple(_number(f"{where}[{i}]", v) * scale for i, v in enumerate(value))


def _string(where, value, choices):
    if value not in choices:
        raise ConfigError(f"{where}: expected one of {sorted(choices)}, got {value!r}")
    return value


def _table(where, value):
    if not isinstance(value, dict):
        raise ConfigError(f"{where}: expected a table")
    return value


def _unknown(section, table, known):
    extra = sorted(set(table) - set(known))
    if extra:
        raise ConfigError(f"[{section}]: unknown field(s) {', '.join(extra)}")


def _crane(t) -> CraneSection:
    _unknown("crane", t, [f.name for f in fields(CraneSection)])
    vals = {k: _number(f"[crane].{k}", v) for k, v in t.items()}
    try:
        return CraneSection(**vals)
    except ValueError as exc:
        raise ConfigError(f"[crane]: {exc}") from None


def _lqr(t, a) -> LqrSection:
    _unknown("lqr", t, [f.name for f in fields(LqrSection)])
    d = LqrSection()
    gain = _string("[lqr].gain", t.get("gain", d.gain), {"given", "lqr"})
    K = t.get("K", d.K)
    if not isinstance(K, (list, tuple)) or len(K) != 2:
        raise ConfigError("[lqr].K: expected 2 rows of 8 numbers")
    K = tuple(_vector(f"[lqr].K[{i}]", row, 8) for i, row in enumerate(K))
    q = _vector("[lqr].q_diag", t.get("q_diag", d.q_diag), 8)
    r = _vector("[lqr].r_diag", t.get("r_diag", d.r_diag), 2)
    if min(q) < 0:
        raise ConfigError("[lqr].q_diag: entries must be non-negative")
    if min(r) <= 0:
        raise ConfigError("[lqr].r_diag: entries must be positive")
    if "operating_point" in t:
        op = _vector("[lqr].operating_point", t["operating_point"], 2, a)
    else:
        op = d.operating_point
    return LqrSection(gain=gain, K=K, q_diag=q, r_diag=r, operating_point=op)


def _erg(t, a) -> ErgSection:
    _unknown("erg", t, [f.name for f in fields(ErgSection)])
    d = ErgSection()
    vals = {
        "k": _number("[erg].k", t.get("k", d.k), positive=True),
        "eta": _number("[erg].eta", t.get("eta", d.eta), positive=True),
        "Ts": _number("[erg].Ts", t.get("Ts", d.Ts), positive=True),
        "omega": _number("[erg].omega", t.get("omega", d.omega)),
    }
    for key in ("zeta", "delta"):
        vals[key] = _number(f"[erg].{key}", t[key]) * a if key in t else getattr(d, key)
    if not vals["zeta"] > vals["delta"] > 0:
        raise ConfigError(f"[erg]: need zeta > delta > 0 (zeta={t.get('zeta', 'default')}, "
                          f"delta={t.get('delta', 'default')})")
    return ErgSection(**vals)


def _constraints(t, a) -> ConstraintsSection:
    _unknown("constraints", t, [f.name for f in fields(ConstraintsSection)])
    d = ConstraintsSection()
    vals = {}
    for key in ("theta3_min", "theta3_max", "swing_max"):
        vals[key] = _number(f"[constraints].{key}", t[key]) * a if key in t else getattr(d, key)
    vals["payload_radius"] = _number("[constraints].payload_radius",
                                     t.get("payload_radius", d.payload_radius), nonneg=True)
    vals["grid_n"] = _number("[constraints].grid_n", t.get("grid_n", d.grid_n), integer=True)
    vals["n_t"] = _number("[constraints].n_t", t.get("n_t", d.n_t), integer=True)
    vals["decay_rate"] = _number("[constraints].decay_rate", t.get("decay_rate", d.decay_rate),
                                 nonneg=True)
    vals["refine_steps"] = _number("[constraints].refine_steps",
                                   t.get("refine_steps", d.refine_steps), nonneg=True, integer=True)
    if not 0 < vals["theta3_min"] < vals["theta3_max"] < math.pi:
        raise ConfigError("[constraints]: need 0 < theta3_min < theta3_max < pi")
    if not 0 < vals["swing_max"] < math.pi / 2:
        raise ConfigError("[constraints].swing_max: must lie in (0, pi/2)")
    if vals["grid_n"] < 8:
        raise ConfigError("[constraints].grid_n: must be at least 8")
    if vals["n_t"] < 3:
        raise ConfigError("[constraints].n_t: must be at least 3")
    return ConstraintsSection(**vals)


def _obstacles(items, default_margin) -> tuple:
    if not isinstance(items, list):
        raise ConfigError("[[obstacles]]: expected an array of tables")
    out = []
    for i, t in enumerate(items):
        where = f"[[obstacles]] #{i + 1}"
        _table(where, t)
        _unknown(f"obstacles #{i + 1}", t, [f.name for f in fields(ObstacleEntry)])
        for key in ("center", "half_extents"):
            if key not in t:
                raise ConfigError(f"{where}: missing field {key!r}")
        label = t.get("label", "custom")
        if not isinstance(label, str):
            raise ConfigError(f"{where}.label: expected a string")
        center = _vector(f"{where}.center", t["center"], 3)
        half = _vector(f"{where}.half_extents", t["half_extents"], 3)
        if min(half) <= 0:
            raise ConfigError(f"{where}.half_extents: must be positive")
        margin = _number(f"{where}.margin", t.get("margin", default_margin), nonneg=True)
        out.append(ObstacleEntry(label=label, center=center, half_extents=half, margin=margin))
    return tuple(out)


def _scenario(t, a) -> ScenarioSection:
    _unknown("scenario", t, [f.name for f in fields(ScenarioSection)])
    d = ScenarioSection()
    x0 = _vector("[scenario].x0", t["x0"], 8, a) if "x0" in t else d.x0
    duration = _number("[scenario].duration", t.get("duration", d.duration), positive=True)
    if "references" not in t:
        return ScenarioSection(x0=x0, references=d.references, duration=duration)
    items = t["references"]
    if not isinstance(items, list) or not items:
        raise ConfigError("[scenario].references: expected a non-empty array of tables")
    refs = []
    for i, rt in enumerate(items):
        where = f"[scenario].references[{i}]"
        _table(where, rt)
        _unknown(f"scenario.references[{i}]", rt, [f.name for f in fields(ReferenceEntry)])
        if "r" not in rt:
            raise ConfigError(f"{where}: missing field 'r'")
        r = _vector(f"{where}.r", rt["r"], 2, a)
        switch = _string(f"{where}.switch", rt.get("switch", "on_convergence"),
                         {"on_convergence", "at_time"})
        if "value" in rt:
            value = _number(f"{where}.value", rt["value"], positive=True)
            if switch == "on_convergence":
                value *= a
        else:
            value = 2e-2 if switch == "on_convergence" else duration
        refs.append(ReferenceEntry(r=r, switch=switch, value=value))
    return ScenarioSection(x0=x0, references=tuple(refs), duration=duration)


def _integration(t, erg: ErgSection) -> IntegrationSection:
    _unknown("integration", t, ["dt_int"])
    dt = _number("[integration].dt_int", t.get("dt_int", IntegrationSection.dt_int), positive=True)
    n = erg.Ts / dt
    if dt > erg.Ts or abs(n - round(n)) > 1e-9:
        raise ConfigError(f"[integration].dt_int: must divide [erg].Ts = {erg.Ts}")
    return IntegrationSection(dt_int=dt)


_SECTIONS = {"angle_unit", "crane", "lqr", "erg", "constraints", "obstacles", "scenario",
             "integration"}


def config_from_dict(doc: dict) -> Config:
    _unknown("top level", doc, _SECTIONS)
    a = _ANGLE_UNITS[_string("angle_unit", doc.get("angle_unit", "deg"), set(_ANGLE_UNITS))]
    crane = _crane(_table("[crane]", doc.get("crane", {})))
    constraints = _constraints(_table("[constraints]", doc.get("constraints", {})), a)
    margin = default_safety_margin(crane.params(), constraints.payload_radius)
    erg = _erg(_table("[erg]", doc.get("erg", {})), a)
    return Config(
        crane=crane,
        lqr=_lqr(_table("[lqr]", doc.get("lqr", {})), a),
        erg=erg,
        constraints=constraints,
        obstacles=_obstacles(doc.get("obstacles", []), margin),
        scenario=_scenario(_table("[scenario]", doc.get("scenario", {})), a),
        integration=_integration(_table("[integration]", doc.get("integration", {})), erg),
    )


def parse_config_text(text: str, source: str = "<string>") -> Config:
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    try:
        return config_from_dict(doc)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def parse_config(path) -> Config:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config_text(text, str(path))


def bundled_config_text() -> str:
    return resources.files("erg_crane.data").joinpath(BUNDLED_SCENARIO).read_text()


def bundled_config() -> Config:
    return parse_config_text(bundled_config_text(), BUNDLED_SCENARIO)


def config_to_dict(cfg: Config) -> dict:
    doc = {"angle_unit": "rad"}
    for name in ("crane", "lqr", "erg", "constraints", "scenario", "integration"):
        doc[name] = asdict(getattr(cfg, name))
    doc["lqr"]["K"] = [list(row) for row in cfg.lqr.K]
    doc["scenario"]["references"] = [asdict(r) for r in cfg.scenario.references]
    doc["obstacles"] = [asdict(o) for o in cfg.obstacles]

    def lists(obj):
        if isinstance(obj, dict):
            return {k: lists(v) for k, v in obj.items()}
        if isinstance(obj, (list, tuple)):
            return [lists(v) for v in obj]
        return obj

    return lists(doc)


def dump_config(cfg: Config) -> str:
    return tomli_w.dumps(config_to_dict(cfg))
