"""Scenario files: parsing, validation, serialisation and overrides.

Format (one ``key = value`` per line, ``#`` starts a comment)::

    [run]        name, duration, seed
    [phy]        sectors, main_gain_db, side_gain_db, quasi_omni_gain_db,
                 tx_power_dbm, noise_dbm, preamble_threshold_dbm,
                 energy_detect_dbm, control_rate_bps, rate (repeatable)
    [protocol]   name (aodv|bcp), refinement (on|off), hello_interval, v,
                 reroute_period, loss_detect_window, ttl, queue_capacity,
                 route_lifetime
    [node]       id, waypoint (repeatable: "t x y z")
    [blocker]    center ("x y z") or waypoint lines, dims, attenuation_db,
                 window (repeatable: "on off"), poisson_mu
    [flow]       src, dst, rate_bps, packet_size, start, stop

Times are decimal seconds and are held internally as integer nanoseconds.
``[node]``, ``[blocker]`` and ``[flow]`` may repeat; the others appear once.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from importlib import resources
from typing import Any, Callable

import numpy as np

from .engine import MS, SECOND
from .phy import DEFAULT_RATE_TABLE, HUMAN_ATTENUATION_DB, HUMAN_DIMS, RateTable


class ScenarioError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


# --- value codecs -------------------------------------------------------------

def _time(s: str) -> int:
    try:
        v = Decimal(s.strip())
    except InvalidOperation:
        raise ValueError(f"not a time in seconds: {s!r}") from None
    if not v.is_finite():
        raise ValueError(f"not a finite time: {s!r}")
    return int(v * SECOND)


def _fmt_time(ns: int) -> str:
    d = (Decimal(ns) / SECOND).normalize()
    return format(d, "f")


def _float(s: str) -> float:
    return float(s)


def _int(s: str) -> int:
    v = Decimal(s.strip())
    if v != v.to_integral_value():
        raise ValueError(f"not an integer: {s!r}")
    return int(v)


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("on", "true", "yes", "1"):
        return True
    if v in ("off", "false", "no", "0"):
        return False
    raise ValueError(f"not on/off: {s!r}")


def _fmt_bool(b: bool) -> str:
    return "on" if b else "off"


def _floats(n: int) -> Callable[[str], tuple]:
    def parse(s: str) -> tuple:
        parts = s.replace(",", " ").split()
        if len(parts) != n:
            raise ValueError(f"expected {n} numbers, got {s!r}")
        return tuple(float(p) for p in parts)
    return parse


def _fmt_floats(t) -> str:
    return " ".join(repr(float(x)) for x in t)


def _waypoint(s: str) -> tuple[int, tuple[float, float, float]]:
    parts = s.replace(",", " ").split()
    if len(parts) != 4:
        raise ValueError(f"waypoint needs 't x y z', got {s!r}")
    return _time(parts[0]), tuple(float(p) for p in parts[1:])


def _fmt_waypoint(w) -> str:
    return f"{_fmt_time(w[0])} {_fmt_floats(w[1])}"


def _window(s: str) -> tuple[int, int]:
    parts = s.replace(",", " ").split()
    if len(parts) != 2:
        raise ValueError(f"window needs 'on off', got {s!r}")
    return _time(parts[0]), _time(parts[1])


def _fmt_window(w) -> str:
    return f"{_fmt_time(w[0])} {_fmt_time(w[1])}"


def _tier(s: str) -> tuple[float, float]:
    a, b = _floats(2)(s)
    return a, b


def _fmt_tier(t) -> str:
    return f"{t[0]!r} {t[1]!r}"


# --- config dataclasses ---------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    name: str = "scenario"
    duration: int = 10 * SECOND
    seed: int = 1


@dataclass(frozen=True)
class PhyConfig:
    sectors: int = 8
    main_gain_db: float = 15.0
    side_gain_db: float = -10.0
    quasi_omni_gain_db: float = 0.0
    tx_power_dbm: float = 18.0
    noise_dbm: float = -70.6
    preamble_threshold_dbm: float = -68.0
    energy_detect_dbm: float = -48.0
    control_rate_bps: float = 27.5e6
    rate_table: tuple[tuple[float, float], ...] = DEFAULT_RATE_TABLE.tiers


@dataclass(frozen=True)
class ProtocolConfig:
    name: str = "aodv"
    refinement: bool = True
    hello_interval: int = 1 * SECOND
    v: float = 2.0
    reroute_period: int = 10 * MS
    loss_detect_window: int = 20 * MS
    ttl: int = 4
    queue_capacity: int = 20_000
    route_lifetime: int = 10 * SECOND


@dataclass(frozen=True)
class NodeConfig:
    id: int
    waypoints: tuple[tuple[int, tuple[float, float, float]], ...] = ()


@dataclass(frozen=True)
class BlockerConfig:
    waypoints: tuple[tuple[int, tuple[float, float, float]], ...] = ()
    dims: tuple[float, float, float] = HUMAN_DIMS
    attenuation_db: float = HUMAN_ATTENUATION_DB
    windows: tuple[tuple[int, int], ...] = ()
    poisson_mu: float | None = None


@dataclass(frozen=True)
class FlowConfig:
    src: int
    dst: int
    rate_bps: int
    packet_size: int = 7935
    start: int = 0
    stop: int | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    run: RunConfig = field(default_factory=RunConfig)
    phy: PhyConfig = field(default_factory=PhyConfig)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    nodes: tuple[NodeConfig, ...] = ()
    blockers: tuple[BlockerConfig, ...] = ()
    flows: tuple[FlowConfig, ...] = ()

    def flow_stop(self, f: FlowConfig) -> int:
        return self.run.duration if f.stop is None else f.stop


# (attribute, parser, formatter, repeatable)
_SCHEMA: dict[str, dict[str, tuple[str, Callable, Callable, bool]]] = {
    "run": {
        "name": ("name", str.strip, str, False),
        "duration": ("duration", _time, _fmt_time, False),
        "seed": ("seed", _int, str, False),
    },
    "phy": {
        "sectors": ("sectors", _int, str, False),
        "main_gain_db": ("main_gain_db", _float, repr, False),
        "side_gain_db": ("side_gain_db", _float, repr, False),
        "quasi_omni_gain_db": ("quasi_omni_gain_db", _float, repr, False),
        "tx_power_dbm": ("tx_power_dbm", _float, repr, False),
        "noise_dbm": ("noise_dbm", _float, repr, False),
        "preamble_threshold_dbm": ("preamble_threshold_dbm", _float, repr, False),
        "energy_detect_dbm": ("energy_detect_dbm", _float, repr, False),
        "control_rate_bps": ("control_rate_bps", _float, repr, False),
        "rate": ("rate_table", _tier, _fmt_tier, True),
    },
    "protocol": {
        "name": ("name", lambda s: s.strip().lower(), str, False),
        "refinement": ("refinement", _bool, _fmt_bool, False),
        "hello_interval": ("hello_interval", _time, _fmt_time, False),
        "v": ("v", _float, repr, False),
        "reroute_period": ("reroute_period", _time, _fmt_time, False),
        "loss_detect_window": ("loss_detect_window", _time, _fmt_time, False),
        "ttl": ("ttl", _int, str, False),
        "queue_capacity": ("queue_capacity", _int, str, False),
        "route_lifetime": ("route_lifetime", _time, _fmt_time, False),
    },
    "node": {
        "id": ("id", _int, str, False),
        "waypoint": ("waypoints", _waypoint, _fmt_waypoint, True),
    },
    "blocker": {
        "center": ("waypoints", lambda s: (0, _floats(3)(s)), None, False),
        "waypoint": ("waypoints", _waypoint, _fmt_waypoint, True),
        "dims": ("dims", _floats(3), _fmt_floats, False),
        "attenuation_db": ("attenuation_db", _float, repr, False),
        "window": ("windows", _window, _fmt_window, True),
        "poisson_mu": ("poisson_mu", _float, repr, False),
    },
    "flow": {
        "src": ("src", _int, str, False),
        "dst": ("dst", _int, str, False),
        "rate_bps": ("rate_bps", lambda s: _int(format(Decimal(s.strip()), "f")), str, False),
        "packet_size": ("packet_size", _int, str, False),
        "start": ("start", _time, _fmt_time, False),
        "stop": ("stop", _time, _fmt_time, False),
    },
}
_SINGLE = ("run", "phy", "protocol")
_CLASSES = {"run": RunConfig, "phy": PhyConfig, "protocol": ProtocolConfig,
            "node": NodeConfig, "blocker": BlockerConfig, "flow": FlowConfig}


def _build(section: str, values: dict[str, Any], errors: list[str], where: str):
    cls = _CLASSES[section]
    try:
        return cls(**values)
    except TypeError as exc:
        missing = [f.name for f in dataclasses.fields(cls)
                   if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING
                   and f.name not in values]
        errors.append(f"{where}: [{section}] missing required key(s) {', '.join(missing)}"
                      if missing else f"{where}: {exc}")
        return None


def parse_text(text: str, source: str = "<string>") -> ScenarioConfig:
    """Parse scenario text; raises ScenarioError listing every problem found."""
    errors: list[str] = []
    sections: list[tuple[str, int, dict[str, Any]]] = []
    current: tuple[str, int, dict[str, Any]] | None = None
    seen_single: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip().lower()
            if name not in _SCHEMA:
                errors.append(f"{where}: unknown section [{name}]")
                current = None
                continue
            if name in _SINGLE:
                if name in seen_single:
                    errors.append(f"{where}: section [{name}] appears twice")
                seen_single.add(name)
            current = (name, lineno, {})
            sections.append(current)
            continue
        if "=" not in line:
            errors.append(f"{where}: expected 'key = value', got {line!r}")
            continue
        if current is None:
            errors.append(f"{where}: key outside a known section")
            continue
        key, value = (p.strip() for p in line.split("=", 1))
        spec = _SCHEMA[current[0]].get(key.lower())
        if spec is None:
            errors.append(f"{where}: unknown key {key!r} in [{current[0]}]")
            continue
        attr, parse, _, repeat = spec
        try:
            v = parse(value)
        except (ValueError, InvalidOperation) as exc:
            errors.append(f"{where}: bad value for {key}: {exc}")
            continue
        vals = current[2]
        if repeat or attr == "waypoints":
            vals.setdefault(attr, []).append(v)
        elif attr in vals:
            errors.append(f"{where}: duplicate key {key!r}")
        else:
            vals[attr] = v

    built: dict[str, Any] = {"nodes": [], "blockers": [], "flows": []}
    lines: dict[int, int] = {}
    for name, lineno, vals in sections:
        vals = {k: tuple(v) if isinstance(v, list) else v for k, v in vals.items()}
        obj = _build(name, vals, errors, f"{source}:{lineno}")
        if obj is None:
            continue
        if name in _SINGLE:
            built[name] = obj
        else:
            key = {"node": "nodes", "blocker": "blockers", "flow": "flows"}[name]
            lines[id(obj)] = lineno
            built[key].append(obj)
    cfg = ScenarioConfig(
        run=built.get("run", RunConfig()), phy=built.get("phy", PhyConfig()),
        protocol=built.get("protocol", ProtocolConfig()),
        nodes=tuple(built["nodes"]), blockers=tuple(built["blockers"]), flows=tuple(built["flows"]),
    )
    errors.extend(validate(cfg, source, lines))
    if errors:
        raise ScenarioError(errors)
    return cfg


def validate(cfg: ScenarioConfig, source: str = "<config>", lines: dict[int, int] | None = None) -> list[str]:
    lines = lines or {}

    def at(obj) -> str:
        ln = lines.get(id(obj))
        return f"{source}:{ln}" if ln else source

    errs: list[str] = []
    if not cfg.nodes:
        errs.append(f"{source}: no nodes")
    ids = [n.id for n in cfg.nodes]
    dup = sorted({i for i in ids if ids.count(i) > 1})
    if dup:
        errs.append(f"{source}: duplicate node ids {dup}")
    for n in cfg.nodes:
        if not n.waypoints:
            errs.append(f"{at(n)}: node {n.id} has no waypoint")
    dur = cfg.run.duration
    if dur <= 0:
        errs.append(f"{source}: duration must be positive")
    for f in cfg.flows:
        for end in (f.src, f.dst):
            if end not in ids:
                errs.append(f"{at(f)}: flow references unknown node {end}")
        if f.src == f.dst:
            errs.append(f"{at(f)}: flow source equals destination")
        if f.rate_bps <= 0:
            errs.append(f"{at(f)}: flow rate must be positive")
        if f.packet_size <= 0:
            errs.append(f"{at(f)}: packet size must be positive")
        stop = cfg.flow_stop(f)
        if not 0 <= f.start < stop:
            errs.append(f"{at(f)}: flow start must precede stop")
        if stop > dur:
            errs.append(f"{at(f)}: flow stops after the run ends")
    for b in cfg.blockers:
        if not b.waypoints:
            errs.append(f"{at(b)}: blocker needs a center or waypoints")
        if any(d <= 0 for d in b.dims):
            errs.append(f"{at(b)}: blocker dims must be positive")
        if b.attenuation_db < 0:
            errs.append(f"{at(b)}: blocker attenuation must be >= 0")
        for on, off in b.windows:
            if not 0 <= on < off <= dur:
                errs.append(f"{at(b)}: blockage window {_fmt_window((on, off))} outside run")
        if b.poisson_mu is not None and b.poisson_mu <= 0:
            errs.append(f"{at(b)}: poisson_mu must be positive")
    p = cfg.protocol
    if p.name not in ("aodv", "bcp"):
        errs.append(f"{source}: protocol must be aodv or bcp, got {p.name!r}")
    if p.v < 0:
        errs.append(f"{source}: V must be non-negative")
    if p.hello_interval <= 0 or p.reroute_period <= 0 or p.loss_detect_window <= 0:
        errs.append(f"{source}: protocol timers must be positive")
    if p.ttl < 1 or p.queue_capacity < 1:
        errs.append(f"{source}: ttl and queue_capacity must be >= 1")
    if p.name == "bcp" and len({f.dst for f in cfg.flows}) > 1:
        errs.append(f"{source}: bcp scenarios carry a single sink")
    ph = cfg.phy
    if ph.sectors < 1:
        errs.append(f"{source}: sectors must be >= 1")
    if ph.control_rate_bps <= 0:
        errs.append(f"{source}: control rate must be positive")
    try:
        table = RateTable(tuple(ph.rate_table))
        # one MPDU must fit in a TXOP at the lowest rate
        biggest = max((f.packet_size for f in cfg.flows), default=0)
        if table.tiers[0][1] * 300e-6 / 8 < biggest:
            errs.append(f"{source}: lowest rate cannot carry a {biggest} B packet within one TXOP")
    except ValueError as exc:
        errs.append(f"{source}: rate table: {exc}")
    return errs


def parse_scenario(path) -> ScenarioConfig:
    with open(path) as fh:
        return parse_text(fh.read(), str(path))


def serialize(cfg: ScenarioConfig) -> str:
    out: list[str] = [f"# scenario {cfg.run.name}"]

    def emit(section: str, obj) -> None:
        out.append("")
        out.append(f"[{section}]")
        defaults = None
        if section in _SINGLE:
            defaults = _CLASSES[section]()
        for key, (attr, _, fmt, repeat) in _SCHEMA[section].items():
            if fmt is None:
                continue
            val = getattr(obj, attr)
            if val is None:
                continue
            if defaults is not None and getattr(defaults, attr) == val and attr != "name":
                continue
            if repeat:
                for item in val:
                    out.append(f"{key} = {fmt(item)}")
            else:
                out.append(f"{key} = {fmt(val)}")

    emit("run", cfg.run)
    emit("phy", cfg.phy)
    emit("protocol", cfg.protocol)
    for n in cfg.nodes:
        emit("node", n)
    for b in cfg.blockers:
        emit("blocker", b)
    for f in cfg.flows:
        emit("flow", f)
    return "\n".join(out) + "\n"


def apply_overrides(cfg: ScenarioConfig, overrides: list[str]) -> ScenarioConfig:
    """Apply ``section.key=value`` (or ``section.N.key=value``) strings."""
    errors = []
    for item in overrides:
        if "=" not in item:
            errors.append(f"override {item!r}: expected key=value")
            continue
        path, value = item.split("=", 1)
        parts = path.strip().split(".")
        section = parts[0].lower()
        if section not in _SCHEMA:
            errors.append(f"override {item!r}: unknown section {section!r}")
            continue
        index = None
        if len(parts) == 3:
            try:
                index = int(parts[1])
            except ValueError:
                errors.append(f"override {item!r}: bad index")
                continue
        elif len(parts) != 2:
            errors.append(f"override {item!r}: expected section.key or section.N.key")
            continue
        key = parts[-1].lower()
        spec = _SCHEMA[section].get(key)
        if spec is None or spec[3]:
            errors.append(f"override {item!r}: unknown or repeatable key {key!r}")
            continue
        attr, parse = spec[0], spec[1]
        try:
            v = parse(value)
        except (ValueError, InvalidOperation) as exc:
            errors.append(f"override {item!r}: {exc}")
            continue
        if section in _SINGLE:
            cfg = dataclasses.replace(cfg, **{section: dataclasses.replace(getattr(cfg, section), **{attr: v})})
        else:
            coll = {"node": "nodes", "blocker": "blockers", "flow": "flows"}[section]
            items = list(getattr(cfg, coll))
            if index is None:
                index = 0 if len(items) == 1 else None
            if index is None or not 0 <= index < len(items):
                errors.append(f"override {item!r}: index required / out of range")
                continue
            if attr == "waypoints":
                v = (v,)
            items[index] = dataclasses.replace(items[index], **{attr: v})
            cfg = dataclasses.replace(cfg, **{coll: tuple(items)})
    errors.extend(validate(cfg, "<overrides>"))
    if errors:
        raise ScenarioError(errors)
    return cfg


def poisson_blockage(mu: float, rng: np.random.Generator, duration: int) -> list[tuple[int, int]]:
    """Alternating exponential gaps and blockages, both with mean 1/mu seconds."""
    if not mu > 0:
        raise ValueError("mu must be positive")
    windows = []
    t = 0
    scale = SECOND / mu
    while True:
        t += int(rng.exponential(scale))
        if t >= duration:
            break
        length = max(int(rng.exponential(scale)), 1)
        windows.append((t, min(t + length, duration)))
        t += length
    return windows


def bundled_scenarios() -> list[str]:
    return sorted(p.name for p in resources.files("mmroute.scenarios").iterdir() if p.name.endswith(".scn"))


def bundled_path(name: str):
    if not name.endswith(".scn"):
        name += ".scn"
    return resources.files("mmroute.scenarios") / name


def load_bundled(name: str) -> ScenarioConfig:
    return parse_text(bundled_path(name).read_text(), name if name.endswith(".scn") else name + ".scn")
