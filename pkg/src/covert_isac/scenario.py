"""Simulation parameters: scenario and algorithm configuration files.

Both file kinds use a flat ``key = value`` text format, one entry per line.
Blank lines and ``#`` comments are ignored. Positions are written ``x,y`` and
target lists are ``;``-separated positions. Powers, path loss and residual
interference levels are stored in dB (``-inf`` allowed for a zero linear
value) and converted to linear units at load time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np


class ScenarioError(ValueError):
    """Raised for unparseable files or parameter sets violating an invariant."""


def db2lin(db):
    out = np.power(10.0, np.asarray(db, dtype=float) / 10.0)
    return float(out) if out.ndim == 0 else out


def lin2db(lin):
    with np.errstate(divide="ignore"):
        out = 10.0 * np.log10(np.asarray(lin, dtype=float))
    return float(out) if out.ndim == 0 else out


def dbm2watt(dbm):
    return db2lin(dbm) * 1e-3


def watt2dbm(w):
    return lin2db(w) + 30.0


@dataclass(frozen=True)
class Scenario:
    num_slots: int
    cco_slots: int
    ccs_slots: int
    slot_duration: float
    max_speed: float
    antennas: int
    altitude_alice: float
    altitude_jack: float
    antenna_spacing_ratio: float
    pathloss_ref: float
    noise_bob: float
    noise_willie: float
    power_alice: float
    power_jack: float
    residual_rb: float
    residual_jb: float
    residual_rw: float
    covertness_level: float
    sensing_threshold: float
    alice_initial: np.ndarray
    alice_final: np.ndarray
    jack_initial: np.ndarray
    jack_final: np.ndarray
    bob: np.ndarray
    willie: np.ndarray
    targets: np.ndarray
    sched_weights: tuple[float, float] = (0.5, 0.5)

    def __post_init__(self):
        for name in ("alice_initial", "alice_final", "jack_initial", "jack_final", "bob", "willie"):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(2)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        tg = np.asarray(self.targets, dtype=float).reshape(-1, 2)
        tg.setflags(write=False)
        object.__setattr__(self, "targets", tg)
        object.__setattr__(self, "sched_weights", tuple(float(w) for w in self.sched_weights))
        validate(self)

    @property
    def num_targets(self) -> int:
        return len(self.targets)

    @property
    def slots_per_target(self) -> int:
        return self.ccs_slots // self.num_targets

    @property
    def duration(self) -> float:
        return self.num_slots * self.slot_duration

    def with_updates(self, **changes) -> "Scenario":
        """Copy with some fields replaced; keeps ``cco_slots`` consistent when
        ``num_slots`` or ``ccs_slots`` change without it."""
        if ("num_slots" in changes or "ccs_slots" in changes) and "cco_slots" not in changes:
            n = changes.get("num_slots", self.num_slots)
            changes["cco_slots"] = n - changes.get("ccs_slots", self.ccs_slots)
        return replace(self, **changes)

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        for f in fields(self):
            a, b = getattr(self, f.name), getattr(other, f.name)
            if isinstance(a, np.ndarray):
                if a.shape != b.shape or not np.array_equal(a, b):
                    return False
            elif a != b:
                return False
        return True

    __hash__ = None


def max_displacement(s: Scenario) -> float:
    """Largest horizontal move a UAV can make within one slot (metres)."""
    return s.max_speed * s.slot_duration


def validate(s: Scenario) -> None:
    def fail(msg):
        raise ScenarioError(f"invariant violated: {msg}")

    if s.num_slots < 2:
        fail("num_slots >= 2")
    if not (1 <= s.cco_slots < s.num_slots):
        fail("1 <= cco_slots < num_slots")
    if not (s.num_targets <= s.ccs_slots < s.num_slots):
        fail("num_targets <= ccs_slots < num_slots")
    if s.cco_slots + s.ccs_slots != s.num_slots:
        fail("cco_slots + ccs_slots == num_slots")
    if s.num_targets < 1:
        fail("at least one target")
    if s.ccs_slots % s.num_targets:
        fail("ccs_slots divisible by the number of targets")
    a1, a2 = s.sched_weights
    if not (0 < a1 < 1 and 0 < a2 < 1 and abs(a1 + a2 - 1) <= 1e-12):
        fail("sched weights in (0,1) summing to 1")
    for name in ("slot_duration", "pathloss_ref", "noise_bob", "noise_willie",
                 "altitude_alice", "altitude_jack", "antenna_spacing_ratio"):
        if not getattr(s, name) > 0:
            fail(f"{name} > 0")
    for name in ("power_alice", "power_jack"):
        if not getattr(s, name) > 0:
            fail(f"{name} > 0")
    if s.max_speed < 0:
        fail("max_speed >= 0")
    if s.antennas < 1:
        fail("antennas >= 1")
    if not (0 < s.covertness_level < 1):
        fail("covertness_level in (0,1)")
    for name in ("residual_rb", "residual_jb", "residual_rw"):
        if not (0 <= getattr(s, name) <= 1):
            fail(f"{name} in [0,1]")
    if s.sensing_threshold < 0:
        fail("sensing_threshold >= 0")


@dataclass(frozen=True)
class AlgorithmConfig:
    """Knobs of the alternating optimisation. ``None`` trust radii default to
    the per-slot displacement cap of the scenario."""

    trust_radius_alice: float | None = None
    trust_radius_jack: float | None = None
    shrink_alice: float = 0.9
    shrink_jack: float = 0.9
    penalty_scale: float = 10.0
    penalty_tightenings: int = 4
    phi_outer: float = 1e-3
    phi_beam: float = 1e-3
    phi_alice: float = 1e-3
    phi_jack: float = 1e-3
    max_outer: int = 30
    max_sca: int = 50
    max_traj: int = 30
    rank_one_ratio_min: float = 0.999
    stall_radius: float = 1e-3
    solver_tol: float = 1e-8
    mrc_power_control: bool = True

    def __post_init__(self):
        for name in ("shrink_alice", "shrink_jack"):
            if not 0 < getattr(self, name) < 1:
                raise ScenarioError(f"invariant violated: {name} in (0,1)")
        for name in ("phi_outer", "phi_beam", "phi_alice", "phi_jack", "penalty_scale",
                     "stall_radius", "solver_tol"):
            if not getattr(self, name) > 0:
                raise ScenarioError(f"invariant violated: {name} > 0")
        for name in ("max_outer", "max_sca", "max_traj"):
            if getattr(self, name) < 1:
                raise ScenarioError(f"invariant violated: {name} >= 1")
        if self.penalty_tightenings < 0:
            raise ScenarioError("invariant violated: penalty_tightenings >= 0")
        if not 0 < self.rank_one_ratio_min <= 1:
            raise ScenarioError("invariant violated: rank_one_ratio_min in (0,1]")
        for name in ("trust_radius_alice", "trust_radius_jack"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ScenarioError(f"invariant violated: {name} > 0")

    def radius_alice(self, s: Scenario) -> float:
        return self.trust_radius_alice if self.trust_radius_alice is not None else max_displacement(s)

    def radius_jack(self, s: Scenario) -> float:
        return self.trust_radius_jack if self.trust_radius_jack is not None else max_displacement(s)


# ---------------------------------------------------------------------------
# file format

# key -> (Scenario field, kind). Kinds: int, float, db (linear power ratio),
# dbm (watts), pos, targets, pair.
_SCENARIO_KEYS = {
    "num_slots": ("num_slots", "int"),
    "cco_slots": ("cco_slots", "int"),
    "ccs_slots": ("ccs_slots", "int"),
    "slot_duration": ("slot_duration", "float"),
    "max_speed": ("max_speed", "float"),
    "antennas": ("antennas", "int"),
    "altitude_alice": ("altitude_alice", "float"),
    "altitude_jack": ("altitude_jack", "float"),
    "antenna_spacing_ratio": ("antenna_spacing_ratio", "float"),
    "pathloss_ref_db": ("pathloss_ref", "db"),
    "noise_bob_dbm": ("noise_bob", "dbm"),
    "noise_willie_dbm": ("noise_willie", "dbm"),
    "power_alice_dbm": ("power_alice", "dbm"),
    "power_jack_dbm": ("power_jack", "dbm"),
    "residual_rb_db": ("residual_rb", "db"),
    "residual_jb_db": ("residual_jb", "db"),
    "residual_rw_db": ("residual_rw", "db"),
    "covertness_level": ("covertness_level", "float"),
    "sensing_threshold_db": ("sensing_threshold", "db"),
    "alice_initial": ("alice_initial", "pos"),
    "alice_final": ("alice_final", "pos"),
    "jack_initial": ("jack_initial", "pos"),
    "jack_final": ("jack_final", "pos"),
    "bob": ("bob", "pos"),
    "willie": ("willie", "pos"),
    "targets": ("targets", "targets"),
    "sched_weights": ("sched_weights", "pair"),
}
_OPTIONAL = {"sched_weights", "antenna_spacing_ratio"}


def _parse_kv(text: str, source: str) -> dict[str, tuple[str, int]]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if not key or not value:
            raise ScenarioError(f"{source}:{lineno}: empty key or value in {raw!r}")
        if key in out:
            raise ScenarioError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = (value, lineno)
    return out


def _pos(value: str) -> np.ndarray:
    parts = [p.strip() for p in value.split(",")]
    if len(parts) != 2:
        raise ValueError(f"expected 'x,y', got {value!r}")
    return np.array([float(parts[0]), float(parts[1])])


def _convert(kind: str, value: str):
    if kind == "int":
        return int(value)
    if kind == "float":
        return float(value)
    if kind == "db":
        return db2lin(float(value))
    if kind == "dbm":
        return dbm2watt(float(value))
    if kind == "pos":
        return _pos(value)
    if kind == "targets":
        return np.array([_pos(p) for p in value.split(";") if p.strip()])
    if kind == "pair":
        a, b = _pos(value)
        return (float(a), float(b))
    raise AssertionError(kind)


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    entries = _parse_kv(text, source)
    kwargs = {}
    for key, (value, lineno) in entries.items():
        if key not in _SCENARIO_KEYS:
            raise ScenarioError(f"{source}:{lineno}: unknown key {key!r}")
        name, kind = _SCENARIO_KEYS[key]
        try:
            kwargs[name] = _convert(kind, value)
        except ValueError as exc:
            raise ScenarioError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    missing = [k for k, (name, _) in _SCENARIO_KEYS.items()
               if name not in kwargs and k not in _OPTIONAL]
    if missing:
        raise ScenarioError(f"{source}: missing keys: {', '.join(missing)}")
    kwargs.setdefault("antenna_spacing_ratio", 0.5)
    return Scenario(**kwargs)


def load_scenario(path) -> Scenario:
    path = Path(path)
    return parse_scenario(path.read_text(), str(path))


def _fmt(x: float) -> str:
    return repr(float(x))


def _fmt_db(x: float) -> str:
    return "-inf" if x == 0 else repr(float(lin2db(x)))


def dump_scenario(s: Scenario) -> str:
    lines = []
    for key, (name, kind) in _SCENARIO_KEYS.items():
        v = getattr(s, name)
        if kind == "int":
            txt = str(int(v))
        elif kind == "float":
            txt = _fmt(v)
        elif kind == "db":
            txt = _fmt_db(v)
        elif kind == "dbm":
            txt = repr(float(watt2dbm(v)))
        elif kind == "pos":
            txt = f"{_fmt(v[0])},{_fmt(v[1])}"
        elif kind == "targets":
            txt = "; ".join(f"{_fmt(p[0])},{_fmt(p[1])}" for p in v)
        else:
            txt = f"{_fmt(v[0])},{_fmt(v[1])}"
        lines.append(f"{key} = {txt}")
    return "\n".join(lines) + "\n"


_CONFIG_KINDS = {f.name: f.type for f in fields(AlgorithmConfig)}


def parse_config(text: str, source: str = "<string>") -> AlgorithmConfig:
    kwargs = {}
    for key, (value, lineno) in _parse_kv(text, source).items():
        if key not in _CONFIG_KINDS:
            raise ScenarioError(f"{source}:{lineno}: unknown config key {key!r}")
        kind = _CONFIG_KINDS[key]
        try:
            if value.lower() == "none":
                kwargs[key] = None
            elif kind == "bool":
                if value.lower() not in ("true", "false", "1", "0"):
                    raise ValueError(value)
                kwargs[key] = value.lower() in ("true", "1")
            elif kind == "int":
                kwargs[key] = int(value)
            else:
                kwargs[key] = float(value)
        except ValueError:
            raise ScenarioError(f"{source}:{lineno}: bad value for {key!r}: {value!r}") from None
    return AlgorithmConfig(**kwargs)


def load_config(path) -> AlgorithmConfig:
    path = Path(path)
    return parse_config(path.read_text(), str(path))


def dump_config(c: AlgorithmConfig) -> str:
    out = []
    for f in fields(c):
        v = getattr(c, f.name)
        out.append(f"{f.name} = {'none' if v is None else (str(v).lower() if isinstance(v, bool) else v)}")
    return "\n".join(out) + "\n"


def builtin_scenario(name: str = "case1") -> Scenario:
    """Shipped scenarios: ``case1`` (Bob [35,40], Willie [65,40]) and ``case2``
    (Bob [50,30], Willie [50,35])."""
    ref = resources.files("covert_isac") / "data" / f"{name}.txt"
    return parse_scenario(ref.read_text(), f"builtin:{name}")


def resolve_scenario(spec: str) -> Scenario:
    if spec.startswith("builtin:"):
        return builtin_scenario(spec.split(":", 1)[1])
    return load_scenario(spec)
