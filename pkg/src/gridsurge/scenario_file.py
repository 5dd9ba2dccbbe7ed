"""Scenario files: strict TOML in, Scenario out, and back.

Grammar (every table optional unless noted; unknown keys are rejected)::

    [scenario]            name, description, duration_s (required), dt_s,
                          trip_path = "direct" | "networked", initially_open
    [grid]                base_mva, nominal_hz
    [[buses]]             id, kv                                  (required)
    [[branches]]          id, from, to, r_pu, x_pu, breaker
    [sources.<id>]        type = "genset" | "inverter" | "grid", bus, ...
    [loads.<id>]          bus, p_kw, q_kvar, class, sheddable
    [faults.<id>]         bus, r_pu, x_pu, start_s, clear_s
    [breakers.<id>]       operate_delay_s
    [relays.<id>]         type = "overcurrent" | "voltage" | "frequency", ...
    [cyber]               master, master_address, latency_s, bandwidth_fps,
                          capacity
    [cyber.outstations.<name>]  address, points = [{index, kind, target}],
                          latency_s, bandwidth_fps, capacity
    [control]             islanding_breaker, shed_order, frequency_monitor_hz,
                          poll_period_s, retry, retry_timeout_s, max_retries
    [[events]]            time, kind, target, value, channel
    [[commands]]          time, point_kind, target, command, value
    [[attacks]]           kind, target, start_s, end_s, delay_s, rate_fps,
                          function, point, command, value
    [output]              buses, sources, plot_buses
"""

from __future__ import annotations

import math
import re
from dataclasses import MISSING, fields, replace
from pathlib import Path
from typing import Any

import tomli
import tomli_w

from gridsurge.control import MgcPolicy, OutstationBinding, PointBinding
from gridsurge.cybernet import CyberTopology, LinkParams, Node
from gridsurge.engine import (
    AttackSpec,
    CyberCommand,
    OutputSpec,
    Scenario,
    ScriptedEvent,
    validate_scenario,
)
from gridsurge.errors import ParseError, ValidationError
from gridsurge.grid import (
    Branch,
    Bus,
    FaultSpec,
    GensetSpec,
    GridSourceSpec,
    InverterSpec,
    LoadSpec,
    NetworkSpec,
)
from gridsurge.protection import (
    IEEE_CURVES,
    BreakerSpec,
    FrequencyRelaySpec,
    OvercurrentRelaySpec,
    VoltageRelaySpec,
)

# value kinds used by the schemas below
F, I, S, B = "float", "int", "str", "bool"
OPT_F, OPT_S, OPT_I = "float?", "str?", "int?"
STRS = "str[]"

# file key -> (dataclass field, value kind)
_SCENARIO = {"name": ("name", S), "description": ("description", S), "duration_s": ("duration_s", F),
             "dt_s": ("dt_s", F), "trip_path": ("trip_path", S), "initially_open": ("initially_open", STRS)}
_GRID = {"base_mva": ("base_mva", F), "nominal_hz": ("nominal_hz", F)}
_BUS = {"id": ("id", S), "kv": ("kv", F)}
_BRANCH = {"id": ("id", S), "from": ("from_bus", S), "to": ("to_bus", S), "r_pu": ("r_pu", F),
           "x_pu": ("x_pu", F), "breaker": ("breaker", OPT_S)}
_GENSET = {"bus": ("bus", S), "rated_kw": ("rated_kw", F), "inertia_h": ("inertia_h", F),
           "damping": ("damping", F), "droop": ("droop", F), "governor_tc": ("governor_tc", F),
           "xdpp": ("xdpp", F), "overload_factor": ("overload_factor", F),
           "overload_duration_s": ("overload_duration_s", F), "pm_max": ("pm_max", F),
           "pm_min": ("pm_min", F), "dispatch_kw": ("dispatch_kw", OPT_F), "q_kvar": ("q_kvar", F),
           "governor": ("governor", B)}
_INVERTER = {"bus": ("bus", S), "rated_kva": ("rated_kva", F), "p_kw": ("p_kw", F),
             "q_kvar": ("q_kvar", F), "current_limit": ("current_limit", F),
             "filter_tc": ("filter_tc", F), "relays": ("relays", STRS), "mode": ("mode", S)}
_GRIDSRC = {"bus": ("bus", S), "voltage_pu": ("voltage_pu", F), "r_pu": ("r_pu", F), "x_pu": ("x_pu", F)}
_LOAD = {"bus": ("bus", S), "p_kw": ("p_kw", F), "q_kvar": ("q_kvar", F), "class": ("load_class", S),
         "sheddable": ("sheddable", B)}
_FAULT = {"bus": ("bus", S), "r_pu": ("r_pu", F), "x_pu": ("x_pu", F), "start_s": ("start_s", F),
          "clear_s": ("clear_s", OPT_F), "kind": ("kind", S)}
_BREAKER = {"operate_delay_s": ("operate_delay_s", F)}
_OC = {"branch": ("branch", S), "breaker": ("breaker", S), "pickup_pu": ("pickup_pu", F), "tds": ("tds", F),
       "a": ("a", F), "b": ("b", F), "p": ("p", F), "reset": ("reset", S)}
_UV = {"bus": ("bus", S), "threshold_pu": ("threshold_pu", F), "time_s": ("time_s", F),
       "target": ("target", S), "direction": ("direction", S)}
_UF = {"threshold_hz": ("threshold_hz", F), "time_s": ("time_s", F), "target": ("target", S),
       "direction": ("direction", S), "enabled": ("enabled", B)}
_LINK = {"latency_s": ("latency_s", F), "bandwidth_fps": ("bandwidth_fps", F), "capacity": ("capacity", I)}
_POINT = {"index": ("index", I), "kind": ("kind", S), "target": ("target", S)}
_CONTROL = {"islanding_breaker": ("islanding_breaker", S), "shed_order": ("shed_order", STRS),
            "frequency_monitor_hz": ("frequency_monitor_hz", F), "poll_period_s": ("poll_period_s", F),
            "retry": ("retry", B), "retry_timeout_s": ("retry_timeout_s", F),
            "max_retries": ("max_retries", I)}
_EVENT = {"time": ("time", F), "kind": ("kind", S), "target": ("target", S), "value": ("value", OPT_F),
          "channel": ("channel", OPT_S)}
_COMMAND = {"time": ("time", F), "point_kind": ("point_kind", S), "target": ("target", S),
            "command": ("command", S), "value": ("value", F)}
_ATTACK = {"kind": ("kind", S), "target": ("target", S), "start_s": ("start_s", F), "end_s": ("end_s", F),
           "delay_s": ("delay_s", OPT_F), "rate_fps": ("rate_fps", OPT_F), "function": ("function", OPT_S),
           "point": ("point", OPT_I), "command": ("command", OPT_S), "value": ("value", OPT_F)}
_OUTPUT = {"buses": ("buses", STRS), "sources": ("sources", STRS), "plot_buses": ("plot_buses", STRS)}

_SOURCE_TYPES = {"genset": (GensetSpec, _GENSET), "inverter": (InverterSpec, _INVERTER),
                 "grid": (GridSourceSpec, _GRIDSRC)}
_RELAY_TYPES = {"overcurrent": (OvercurrentRelaySpec, _OC), "voltage": (VoltageRelaySpec, _UV),
                "frequency": (FrequencyRelaySpec, _UF)}
_TOP = ("scenario", "grid", "buses", "branches", "sources", "loads", "faults", "breakers", "relays",
        "cyber", "control", "events", "commands", "attacks", "output")


def _coerce(key: str, kind: str, value: Any):
    if kind.endswith("?"):
        kind = kind[:-1]
    if kind == F:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(key, f"expected a number, got {value!r}")
        if not math.isfinite(value):
            raise ValidationError(key, "must be finite")
        return float(value)
    if kind == I:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValidationError(key, f"expected an integer, got {value!r}")
        return value
    if kind == S:
        if not isinstance(value, str):
            raise ValidationError(key, f"expected a string, got {value!r}")
        return value
    if kind == B:
        if not isinstance(value, bool):
            raise ValidationError(key, f"expected true/false, got {value!r}")
        return value
    if kind == STRS:
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise ValidationError(key, "expected a list of strings")
        return tuple(value)
    raise AssertionError(kind)  # pragma: no cover


def _fields(key: str, table: Any, schema: dict, skip: tuple[str, ...] = ()) -> dict:
    """Map a file table onto dataclass keyword arguments, rejecting unknown keys."""
    if not isinstance(table, dict):
        raise ValidationError(key, "expected a table")
    out = {}
    for k, v in table.items():
        if k in skip:
            continue
        if k not in schema:
            raise ValidationError(f"{key}.{k}", "unknown key")
        name, kind = schema[k]
        out[name] = _coerce(f"{key}.{k}", kind, v)
    return out


def _build(key: str, cls, kwargs: dict, schema: dict | None = None):
    for f in fields(cls):
        if f.name not in kwargs and f.default is MISSING and f.default_factory is MISSING:
            file_key = next((k for k, (name, _) in (schema or {}).items() if name == f.name), f.name)
            raise ValidationError(f"{key}.{file_key}", "required key missing")
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ValidationError(key, str(exc)) from None


def _unique(key: str, ids: list[str]) -> None:
    seen = set()
    for i, x in enumerate(ids):
        if x in seen:
            raise ValidationError(f"{key}[{i}].id", f"duplicate id {x!r}")
        seen.add(x)


def _list_of_tables(raw: dict, name: str) -> list:
    items = raw.get(name, [])
    if not isinstance(items, list) or not all(isinstance(t, dict) for t in items):
        raise ValidationError(name, "expected an array of tables ([[...]])")
    return items


def _named_tables(raw: dict, name: str) -> dict:
    items = raw.get(name, {})
    if not isinstance(items, dict) or not all(isinstance(t, dict) for t in items.values()):
        raise ValidationError(name, "expected named tables ([<section>.<id>])")
    return items


def scenario_from_dict(raw: dict) -> Scenario:
    """Build and validate a Scenario from the parsed TOML document."""
    for k in raw:
        if k not in _TOP:
            raise ValidationError(k, "unknown section")
    if "scenario" not in raw:
        raise ValidationError("scenario", "section required")
    head = _fields("scenario", raw["scenario"], _SCENARIO)
    if "duration_s" not in head:
        raise ValidationError("scenario.duration_s", "required key missing")
    head.setdefault("name", "scenario")

    grid = _fields("grid", raw.get("grid", {}), _GRID)
    bus_tables = _list_of_tables(raw, "buses")
    if not bus_tables:
        raise ValidationError("buses", "at least one bus required")
    buses = tuple(_build(f"buses[{i}]", Bus, _fields(f"buses[{i}]", t, _BUS), _BUS) for i, t in enumerate(bus_tables))
    _unique("buses", [b.id for b in buses])
    branches = tuple(
        _build(f"branches[{i}]", Branch, _fields(f"branches[{i}]", t, _BRANCH), _BRANCH)
        for i, t in enumerate(_list_of_tables(raw, "branches"))
    )
    _unique("branches", [b.id for b in branches])

    sources = []
    for sid, t in _named_tables(raw, "sources").items():
        key = f"sources.{sid}"
        typ = t.get("type")
        if typ not in _SOURCE_TYPES:
            raise ValidationError(f"{key}.type", f"must be one of {sorted(_SOURCE_TYPES)}")
        cls, schema = _SOURCE_TYPES[typ]
        sources.append(_build(key, cls, {"id": sid, **_fields(key, t, schema, skip=("type",))}, schema))
    loads = []
    for lid, t in _named_tables(raw, "loads").items():
        key = f"loads.{lid}"
        kw = _fields(key, t, _LOAD)
        if kw.get("load_class") == "critical" and kw.get("sheddable"):
            raise ValidationError(f"{key}.sheddable", "critical loads are never sheddable")
        loads.append(_build(key, LoadSpec, {"id": lid, **kw}, _LOAD))
    network = NetworkSpec(buses, branches, tuple(sources), tuple(loads), **grid)

    faults = tuple(
        _build(f"faults.{fid}", FaultSpec, {"id": fid, **_fields(f"faults.{fid}", t, _FAULT)}, _FAULT)
        for fid, t in _named_tables(raw, "faults").items()
    )
    breakers = tuple(
        _build(f"breakers.{bid}", BreakerSpec, {"id": bid, **_fields(f"breakers.{bid}", t, _BREAKER)}, _BREAKER)
        for bid, t in _named_tables(raw, "breakers").items()
    )
    relays = []
    for rid, t in _named_tables(raw, "relays").items():
        key = f"relays.{rid}"
        typ = t.get("type")
        if typ not in _RELAY_TYPES:
            raise ValidationError(f"{key}.type", f"must be one of {sorted(_RELAY_TYPES)}")
        cls, schema = _RELAY_TYPES[typ]
        kw = _fields(key, t, schema, skip=("type", "curve"))
        if typ == "overcurrent" and "curve" in t:
            if t["curve"] not in IEEE_CURVES:
                raise ValidationError(f"{key}.curve", f"must be one of {sorted(IEEE_CURVES)}")
            a, b, p = IEEE_CURVES[t["curve"]]
            kw = {"a": a, "b": b, "p": p, **kw}
        elif "curve" in t:
            raise ValidationError(f"{key}.curve", "unknown key")
        relays.append(_build(key, cls, {"id": rid, **kw}, schema))

    cyber, bindings = None, ()
    if "cyber" in raw:
        cyber, bindings = _cyber(raw["cyber"])
    policy = None
    if "control" in raw:
        policy = _build("control", MgcPolicy, _fields("control", raw["control"], _CONTROL), _CONTROL)
    events = tuple(
        _build(f"events[{i}]", ScriptedEvent, _fields(f"events[{i}]", t, _EVENT), _EVENT)
        for i, t in enumerate(_list_of_tables(raw, "events"))
    )
    commands = tuple(
        _build(f"commands[{i}]", CyberCommand, _fields(f"commands[{i}]", t, _COMMAND), _COMMAND)
        for i, t in enumerate(_list_of_tables(raw, "commands"))
    )
    attacks = tuple(
        _build(f"attacks[{i}]", AttackSpec, _fields(f"attacks[{i}]", t, _ATTACK), _ATTACK)
        for i, t in enumerate(_list_of_tables(raw, "attacks"))
    )
    output = OutputSpec(**_fields("output", raw.get("output", {}), _OUTPUT))

    scn = Scenario(
        network=network, faults=faults, breakers=breakers, relays=tuple(relays), cyber=cyber,
        bindings=bindings, policy=policy, events=events, commands=commands, attacks=attacks,
        output=output, **head,
    )
    validate_scenario(scn)
    return scn


def _cyber(t: dict) -> tuple[CyberTopology, tuple[OutstationBinding, ...]]:
    if not isinstance(t, dict):
        raise ValidationError("cyber", "expected a table")
    head = {"master": S, "master_address": I}
    for k in t:
        if k not in head and k not in _LINK and k != "outstations":
            raise ValidationError(f"cyber.{k}", "unknown key")
    master = Node(_coerce("cyber.master", S, t.get("master", "mgc")),
                  _coerce("cyber.master_address", I, t.get("master_address", 1)))
    default = _build("cyber", LinkParams, _fields("cyber", {k: v for k, v in t.items() if k in _LINK}, _LINK))
    nodes, links, bindings = [], {}, []
    outs = t.get("outstations", {})
    if not isinstance(outs, dict):
        raise ValidationError("cyber.outstations", "expected named tables")
    for name, o in outs.items():
        key = f"cyber.outstations.{name}"
        if not isinstance(o, dict):
            raise ValidationError(key, "expected a table")
        for k in o:
            if k not in ("address", "points") and k not in _LINK:
                raise ValidationError(f"{key}.{k}", "unknown key")
        if "address" not in o:
            raise ValidationError(f"{key}.address", "required key missing")
        addr = _coerce(f"{key}.address", I, o["address"])
        nodes.append(Node(name, addr))
        link_kw = {k: v for k, v in o.items() if k in _LINK}
        if link_kw:
            params = _fields(key, link_kw, _LINK)
            links[name] = _build(key, LinkParams, {**{f.name: getattr(default, f.name) for f in fields(LinkParams)},
                                                   **params})
        pts = o.get("points", [])
        if not isinstance(pts, list):
            raise ValidationError(f"{key}.points", "expected an array of tables")
        points = tuple(
            _build(f"{key}.points[{i}]", PointBinding, _fields(f"{key}.points[{i}]", p, _POINT), _POINT)
            for i, p in enumerate(pts)
        )
        bindings.append(_build(key, OutstationBinding, {"name": name, "address": addr, "points": points}))
    try:
        topo = CyberTopology(master, tuple(nodes), links, default)
    except ValueError as exc:
        raise ValidationError("cyber", str(exc)) from None
    return topo, tuple(bindings)


def _location(exc: tomli.TOMLDecodeError) -> tuple[int, int]:
    line = getattr(exc, "lineno", None)
    col = getattr(exc, "colno", None)
    if line is None:
        m = re.search(r"line (\d+), column (\d+)", str(exc))
        line, col = (int(m.group(1)), int(m.group(2))) if m else (0, 0)
    return line, col


def load_raw(text: str) -> dict:
    try:
        return tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        line, col = _location(exc)
        msg = getattr(exc, "msg", str(exc))
        raise ParseError(msg, line, col) from None


def parse_scenario_text(text: str, overrides: dict[str, str] | None = None) -> Scenario:
    raw = load_raw(text)
    if overrides:
        apply_overrides(raw, overrides)
    return scenario_from_dict(raw)


def parse_scenario_file(path: str | Path, overrides: dict[str, str] | None = None) -> Scenario:
    """Load a scenario file into a validated Scenario.

    Raises:
        ParseError: the text is not valid TOML (carries line and column).
        ValidationError: a key is unknown or its value is invalid.
        ModelError: the network topology itself is invalid.
    """
    return parse_scenario_text(Path(path).read_text(encoding="utf-8"), overrides)


def _parse_value(text: str):
    try:
        return tomli.loads(f"v = {text}")["v"]
    except tomli.TOMLDecodeError:
        return text


def apply_overrides(raw: dict, overrides: dict[str, str]) -> None:
    """Set dotted keys (``attacks.0.delay_s=5``) in the raw document.

    The parent table must exist; the leaf is then checked by strict parsing.
    """
    for dotted, text in overrides.items():
        parts = dotted.split(".")
        node: Any = raw
        for i, part in enumerate(parts[:-1]):
            where = ".".join(parts[: i + 1])
            if isinstance(node, list):
                if not part.isdigit() or int(part) >= len(node):
                    raise ValidationError(where, "no such array element")
                node = node[int(part)]
            elif isinstance(node, dict) and part in node:
                node = node[part]
            else:
                raise ValidationError(where, "no such table")
        leaf = parts[-1]
        if not isinstance(node, dict):
            raise ValidationError(dotted, "override must target a key of a table")
        node[leaf] = _parse_value(text)


def _dump(obj, schema: dict, skip: tuple[str, ...] = ()) -> dict:
    out = {}
    for key, (name, kind) in schema.items():
        if name in skip:
            continue
        v = getattr(obj, name)
        if v is None:
            continue
        out[key] = list(v) if kind == STRS else v
    return out


def scenario_to_dict(s: Scenario) -> dict:
    doc: dict[str, Any] = {"scenario": _dump(s, _SCENARIO)}
    net = s.network
    doc["grid"] = _dump(net, _GRID)
    doc["buses"] = [_dump(b, _BUS) for b in net.buses]
    if net.branches:
        doc["branches"] = [_dump(b, _BRANCH) for b in net.branches]
    if net.sources:
        doc["sources"] = {}
        for src in net.sources:
            typ = next(k for k, (cls, _) in _SOURCE_TYPES.items() if isinstance(src, cls))
            doc["sources"][src.id] = {"type": typ, **_dump(src, _SOURCE_TYPES[typ][1])}
    if net.loads:
        doc["loads"] = {ld.id: _dump(ld, _LOAD) for ld in net.loads}
    if s.faults:
        doc["faults"] = {f.id: _dump(f, _FAULT) for f in s.faults}
    if s.breakers:
        doc["breakers"] = {b.id: _dump(b, _BREAKER) for b in s.breakers}
    if s.relays:
        doc["relays"] = {}
        for r in s.relays:
            typ = next(k for k, (cls, _) in _RELAY_TYPES.items() if isinstance(r, cls))
            doc["relays"][r.id] = {"type": typ, **_dump(r, _RELAY_TYPES[typ][1])}
    if s.cyber is not None:
        c = s.cyber
        cy: dict[str, Any] = {"master": c.master.name, "master_address": c.master.address,
                              **_dump(c.default_link, _LINK)}
        outs = {}
        by_name = {b.name: b for b in s.bindings}
        for node in c.outstations:
            o: dict[str, Any] = {"address": node.address}
            if node.name in c.links:
                o.update(_dump(c.links[node.name], _LINK))
            if node.name in by_name:
                o["points"] = [_dump(p, _POINT) for p in by_name[node.name].points]
            outs[node.name] = o
        cy["outstations"] = outs
        doc["cyber"] = cy
    if s.policy is not None:
        doc["control"] = _dump(s.policy, _CONTROL)
    if s.events:
        doc["events"] = [_dump(e, _EVENT) for e in s.events]
    if s.commands:
        doc["commands"] = [_dump(c, _COMMAND) for c in s.commands]
    if s.attacks:
        doc["attacks"] = [_dump(a, _ATTACK) for a in s.attacks]
    out = _dump(s.output, _OUTPUT)
    if out:
        doc["output"] = out
    return doc


def print_scenario(s: Scenario) -> str:
    """Canonical text of ``s``; ``parse_scenario_text(print_scenario(s)) == s``."""
    return tomli_w.dumps(scenario_to_dict(s))


def with_dt(s: Scenario, dt: float) -> Scenario:
    out = replace(s, dt_s=dt)
    validate_scenario(out)
    return out
