"""Co-simulation kernel: fixed-step physical loop interleaved with the cyber
event queue, plus run summaries and run-to-run comparison.

One step at ``t = k*dt``:

1. deliver frames due at or before ``t`` and act on them (controller or
   outstation);
2. apply scripted events, fault timings and breaker operations that are due;
3. solve the network;
4. evaluate relays and the central controller on the fresh solution and route
   their commands (directly, or through the cyber layer);
5. check the genset overload criterion and record the sample;
6. integrate the dynamics to ``t + dt``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from gridsurge.control import (
    MgcPolicy,
    MicrogridController,
    Observations,
    OutstationBinding,
    check_bindings,
    outstation_apply,
)
from gridsurge.cybernet import (
    Command,
    CyberNetwork,
    CyberTopology,
    FixedDelay,
    Flood,
    Function,
    MitmRule,
    TraceRecord,
    Window,
)
from gridsurge.errors import (
    EmptySeries,
    InvalidScenario,
    NoConvergence,
    QueueOverflow,
    ShapeMismatch,
    ValidationError,
)
from gridsurge.grid import (
    EVENT_KINDS,
    DynamicState,
    FaultSpec,
    GridModel,
    LogEntry,
    NetworkSpec,
    PhysicalEvent,
    apply_event,
    build_network,
    genset_loading,
    initial_state,
    refresh,
    step_dynamics,
)
from gridsurge.protection import (
    BreakerCommand,
    BreakerSpec,
    BreakerState,
    FrequencyRelaySpec,
    OvercurrentRelaySpec,
    RelayState,
    VoltageRelaySpec,
    breaker_step,
    oc_step,
    uf_step,
    uv_step,
)

ATTACK_KINDS = ("dos_fixed_delay", "dos_flood", "mitm_rewrite", "breaker_delay")
THRESHOLDS_HZ = (59.5, 56.0, 55.0)
SCRIPT_KINDS = tuple(k for k in EVENT_KINDS if k not in ("fault", "clear"))

RelaySpec = OvercurrentRelaySpec | VoltageRelaySpec | FrequencyRelaySpec


@dataclass(frozen=True)
class ScriptedEvent:
    time: float
    kind: str
    target: str
    value: float | None = None
    channel: str | None = None


@dataclass(frozen=True)
class CyberCommand:
    """Command the master sends at ``time`` to the point bound to ``(point_kind, target)``."""

    time: float
    point_kind: str
    target: str
    command: str
    value: float = 0.0


@dataclass(frozen=True)
class AttackSpec:
    """One attack. ``target`` is a link name (``src->dst``) or, for
    ``breaker_delay``, a breaker id."""

    kind: str
    target: str
    start_s: float
    end_s: float
    delay_s: float | None = None
    rate_fps: float | None = None
    function: str | None = None
    point: int | None = None
    command: str | None = None
    value: float | None = None

    @property
    def window(self) -> Window:
        return Window(self.start_s, self.end_s)


@dataclass(frozen=True)
class OutputSpec:
    buses: tuple[str, ...] | None = None       # None = every bus
    sources: tuple[str, ...] | None = None
    plot_buses: tuple[str, ...] = ()


@dataclass(frozen=True)
class Scenario:
    name: str
    network: NetworkSpec
    duration_s: float
    dt_s: float = 0.001
    description: str = ""
    faults: tuple[FaultSpec, ...] = ()
    breakers: tuple[BreakerSpec, ...] = ()
    initially_open: tuple[str, ...] = ()
    relays: tuple[RelaySpec, ...] = ()
    cyber: CyberTopology | None = None
    bindings: tuple[OutstationBinding, ...] = ()
    policy: MgcPolicy | None = None
    trip_path: str = "direct"
    events: tuple[ScriptedEvent, ...] = ()
    commands: tuple[CyberCommand, ...] = ()
    attacks: tuple[AttackSpec, ...] = ()
    output: OutputSpec = OutputSpec()

    @property
    def n_steps(self) -> int:
        return int(round(self.duration_s / self.dt_s))


def validate_scenario(s: Scenario) -> GridModel:
    """Cross-check every section of ``s``; returns the built GridModel.

    Raises:
        ModelError: the network itself is invalid (see ``build_network``).
        ValidationError: any other section is inconsistent; names the key.
    """
    model = build_network(s.network)
    if not s.dt_s > 0:
        raise ValidationError("scenario.dt_s", "must be > 0")
    if not s.duration_s > 0:
        raise ValidationError("scenario.duration_s", "must be > 0")
    if abs(s.n_steps * s.dt_s - s.duration_s) > 1e-9 * max(1.0, s.duration_s):
        raise ValidationError("scenario.dt_s", "duration must be a whole number of steps")
    breaker_ids = set(model.breakers())
    declared = [b.id for b in s.breakers]
    if len(set(declared)) != len(declared):
        raise ValidationError("breakers", "duplicate breaker id")
    for b in declared:
        if b not in breaker_ids:
            raise ValidationError(f"breakers.{b}", "breaker is not on any branch")
    for b in s.initially_open:
        if b not in breaker_ids:
            raise ValidationError("scenario.initially_open", f"unknown breaker {b!r}")

    def check_time(key, t):
        if not 0 <= t < s.duration_s:
            raise ValidationError(key, f"time {t} outside [0, {s.duration_s})")

    for f in s.faults:
        key = f"faults.{f.id}"
        if f.bus not in model.bus_index:
            raise ValidationError(f"{key}.bus", f"unknown bus {f.bus!r}")
        if f.r_pu < 0 or f.x_pu < 0 or (f.r_pu == 0 and f.x_pu == 0):
            raise ValidationError(f"{key}.r_pu", "shunt impedance must be > 0")
        check_time(f"{key}.start_s", f.start_s)
        if f.clear_s is not None:
            check_time(f"{key}.clear_s", f.clear_s)
            if not f.clear_s > f.start_s:
                raise ValidationError(f"{key}.clear_s", "must be after start_s")
    ids = [r.id for r in s.relays]
    if len(set(ids)) != len(ids):
        raise ValidationError("relays", "duplicate relay id")
    for r in s.relays:
        key = f"relays.{r.id}"
        if isinstance(r, OvercurrentRelaySpec):
            if r.branch not in model.branch_index:
                raise ValidationError(f"{key}.branch", f"unknown branch {r.branch!r}")
            if r.breaker not in breaker_ids:
                raise ValidationError(f"{key}.breaker", f"unknown breaker {r.breaker!r}")
        else:
            if isinstance(r, VoltageRelaySpec) and r.bus not in model.bus_index:
                raise ValidationError(f"{key}.bus", f"unknown bus {r.bus!r}")
            kind, _, tgt = r.target.partition(":")
            if kind == "breaker" and tgt in breaker_ids:
                pass
            elif kind == "source" and tgt in model.source_index:
                pass
            else:
                raise ValidationError(f"{key}.target", f"bad target {r.target!r}")
    for i, ev in enumerate(s.events):
        key = f"events[{i}]"
        check_time(f"{key}.time", ev.time)
        if ev.kind not in SCRIPT_KINDS:
            raise ValidationError(f"{key}.kind", f"unknown kind {ev.kind!r}")
        known = {
            "breaker_open": breaker_ids,
            "breaker_close": breaker_ids,
            "load_shed": model.load_index,
            "setpoint_change": {inv.id for inv in model.inverters},
            "source_trip": model.source_index,
        }[ev.kind]
        if ev.target not in known:
            raise ValidationError(f"{key}.target", f"unknown target {ev.target!r}")
        if ev.kind == "setpoint_change" and (ev.channel not in ("p", "q") or ev.value is None):
            raise ValidationError(f"{key}.channel", "setpoint_change needs channel p|q and value")
    if s.trip_path not in ("direct", "networked"):
        raise ValidationError("scenario.trip_path", "must be 'direct' or 'networked'")
    needs_cyber = s.policy is not None or s.commands or s.trip_path == "networked" or any(
        a.kind != "breaker_delay" for a in s.attacks
    )
    if needs_cyber and s.cyber is None:
        raise ValidationError("cyber", "section required by policy/commands/attacks/trip_path")
    if s.cyber is not None:
        names = {o.name for o in s.cyber.outstations}
        bound = [b.name for b in s.bindings]
        if len(set(bound)) != len(bound):
            raise ValidationError("cyber.outstations", "duplicate outstation")
        for b in s.bindings:
            if b.name not in names:
                raise ValidationError(f"cyber.outstations.{b.name}", "binding without node")
        try:
            check_bindings(model, breaker_ids, s.bindings)
        except ValueError as exc:
            raise ValidationError("cyber.outstations", str(exc)) from exc
        links = {f"{s.cyber.master.name}->{n}" for n in names} | {f"{n}->{s.cyber.master.name}" for n in names}
    else:
        links = set()
    if s.policy is not None and s.policy.islanding_breaker not in breaker_ids:
        raise ValidationError("control.islanding_breaker", f"unknown breaker {s.policy.islanding_breaker!r}")
    for ld in s.network.loads:
        if ld.load_class == "critical" and ld.sheddable:
            raise ValidationError(f"loads.{ld.id}.sheddable", "critical loads are never sheddable")
    if s.trip_path == "networked":
        for r in s.relays:
            tgt = r.breaker if isinstance(r, OvercurrentRelaySpec) else r.target.partition(":")[2]
            if (isinstance(r, OvercurrentRelaySpec) or r.target.startswith("breaker:")) and not any(
                b.find("breaker", tgt) for b in s.bindings
            ):
                raise ValidationError(f"relays.{r.id}", f"networked trip path but breaker {tgt!r} is not bound")
    for i, c in enumerate(s.commands):
        key = f"commands[{i}]"
        check_time(f"{key}.time", c.time)
        if c.command not in Command.__members__:
            raise ValidationError(f"{key}.command", f"unknown command {c.command!r}")
        if not any(b.find(c.point_kind, c.target) for b in s.bindings):
            raise ValidationError(f"{key}.target", f"no point bound to {c.point_kind} {c.target!r}")
    for i, a in enumerate(s.attacks):
        key = f"attacks[{i}]"
        if a.kind not in ATTACK_KINDS:
            raise ValidationError(f"{key}.kind", f"unknown attack kind {a.kind!r}")
        if not a.end_s >= a.start_s:
            raise ValidationError(f"{key}.end_s", "window end precedes start")
        if a.kind == "breaker_delay":
            if a.target not in breaker_ids:
                raise ValidationError(f"{key}.target", f"unknown breaker {a.target!r}")
        elif a.target not in links:
            raise ValidationError(f"{key}.target", f"unknown link {a.target!r}")
        required = {
            "dos_fixed_delay": ("delay_s",),
            "breaker_delay": ("delay_s",),
            "dos_flood": ("rate_fps",),
            "mitm_rewrite": ("function", "point"),
        }[a.kind]
        for f in required:
            if getattr(a, f) is None:
                raise ValidationError(f"{key}.{f}", f"required for {a.kind}")
        if a.delay_s is not None and a.delay_s < 0:
            raise ValidationError(f"{key}.delay_s", "must be >= 0")
        if a.rate_fps is not None and a.rate_fps <= 0:
            raise ValidationError(f"{key}.rate_fps", "must be > 0")
        if a.kind == "mitm_rewrite":
            if a.function not in Function.__members__:
                raise ValidationError(f"{key}.function", f"unknown function {a.function!r}")
            if a.command is not None and a.command not in Command.__members__:
                raise ValidationError(f"{key}.command", f"unknown command {a.command!r}")
    for key, ids, pool in (
        ("output.buses", s.output.buses, model.bus_index),
        ("output.plot_buses", s.output.plot_buses, model.bus_index),
        ("output.sources", s.output.sources, model.source_index),
    ):
        for x in ids or ():
            if x not in pool:
                raise ValidationError(key, f"unknown id {x!r}")
    return model


@dataclass
class SimResult:
    scenario: str
    dt: float
    duration: float
    nominal_hz: float
    time: np.ndarray
    frequency_hz: np.ndarray
    bus_voltage: dict[str, np.ndarray]
    source_p_kw: dict[str, np.ndarray]
    source_q_kvar: dict[str, np.ndarray]
    genset_loading: np.ndarray
    events: list[LogEntry]
    status: str = "completed"
    frames: list[TraceRecord] = field(default_factory=list)
    plot_buses: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.time)

    def channels(self) -> dict[str, np.ndarray]:
        """Every recorded series keyed by its CSV column name."""
        out = {"time_s": self.time, "freq_hz": self.frequency_hz}
        for b, v in self.bus_voltage.items():
            out[f"v_{b}_pu"] = v
        for s in self.source_p_kw:
            out[f"p_{s}_kw"] = self.source_p_kw[s]
            out[f"q_{s}_kvar"] = self.source_q_kvar[s]
        out["genset_loading_pu"] = self.genset_loading
        return out

    def trips(self) -> list[LogEntry]:
        return [e for e in self.events if e.kind == "trip"]


@dataclass(frozen=True)
class Summary:
    scenario: str
    nadir_hz: float
    nadir_time_s: float
    crossings: dict[float, bool]
    trips: tuple[tuple[float, str, str], ...]
    genset_overload_s: float
    blackout: bool
    status: str

    def as_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "nadir_hz": self.nadir_hz,
            "nadir_time_s": self.nadir_time_s,
            "crossings": {f"{k:g}": v for k, v in self.crossings.items()},
            "trips": [{"time_s": t, "relay": r, "target": tg} for t, r, tg in self.trips],
            "genset_overload_s": self.genset_overload_s,
            "blackout": self.blackout,
            "status": self.status,
        }


class _Run:
    """Mutable bookkeeping of one run (kept off the public API)."""

    def __init__(self, scn: Scenario, model: GridModel):
        self.scn = scn
        self.model = model
        self.dt = scn.dt_s
        self.log: list[LogEntry] = []
        self.state: DynamicState = initial_state(model, {b: False for b in scn.initially_open})
        specs = {b.id: b for b in scn.breakers}
        self.breaker_specs = {b: specs.get(b, BreakerSpec(b)) for b in model.breakers()}
        self.breakers = {b: BreakerState(closed=self.state.breakers[b]) for b in model.breakers()}
        self.relays = list(scn.relays)
        self.relay_state = {r.id: RelayState() for r in scn.relays}
        self.net: CyberNetwork | None = None
        self.mgc: MicrogridController | None = None
        self.outstations: dict[int, OutstationBinding] = {}
        if scn.cyber is not None:
            self.net = CyberNetwork(scn.cyber, self.log)
            self.outstations = {b.address: b for b in scn.bindings}
            self.node_of = {n.address: n.name for n in (scn.cyber.master, *scn.cyber.outstations)}
            for a in scn.attacks:
                if a.kind == "dos_fixed_delay":
                    self.net.inject_dos(a.target, a.window, FixedDelay(a.delay_s))
                elif a.kind == "dos_flood":
                    self.net.inject_dos(a.target, a.window, Flood(a.rate_fps))
                elif a.kind == "mitm_rewrite":
                    rule = MitmRule(
                        Function[a.function], a.point, a.window,
                        Command[a.command] if a.command else None, a.value,
                    )
                    self.net.mitm_rewrite(a.target, rule)
            if scn.policy is not None:
                self.mgc = MicrogridController(scn.policy, model, scn.bindings, scn.cyber.master.address)
                self.mgc.pcc_closed = self.state.breakers[scn.policy.islanding_breaker]
        self.breaker_delays = [a for a in scn.attacks if a.kind == "breaker_delay"]
        # scripted timeline: (time, order, payload)
        timeline = []
        for f in scn.faults:
            timeline.append((f.start_s, len(timeline), ("fault", f)))
            if f.clear_s is not None:
                timeline.append((f.clear_s, len(timeline), ("clear", f)))
        for ev in scn.events:
            timeline.append((ev.time, len(timeline), ("event", ev)))
        for c in scn.commands:
            timeline.append((c.time, len(timeline), ("command", c)))
        timeline.sort(key=lambda x: (x[0], x[1]))
        self.timeline = timeline
        self.next_item = 0
        self.over_since: float | None = None

    # -- helpers -----------------------------------------------------------
    def log_entry(self, t, kind, subject, **detail):
        self.log.append(LogEntry(t, kind, subject, detail))

    def send(self, frame, t):
        dst = self.node_of[frame.dst]
        src = self.node_of[frame.src]
        try:
            self.net.send(src, dst, frame, t)
        except QueueOverflow:
            pass  # recorded by the network

    def command_breaker(self, breaker: str, action: str, issued: float, now: float, origin: str):
        delay = sum(a.delay_s for a in self.breaker_delays if a.target == breaker and a.window.contains(issued))
        st = self.breakers[breaker]
        if st.attack_delay_s != delay:
            st = BreakerState(st.closed, st.pending, st.due, delay)
        st, change = breaker_step(self.breaker_specs[breaker], st, now, BreakerCommand(action, issued))
        self.breakers[breaker] = st
        self.log_entry(now, "breaker_command", breaker, action=action, issued=issued, due=st.due, origin=origin)
        if change:
            self._apply(PhysicalEvent(now, f"breaker_{change}", breaker, origin=origin))

    def _apply(self, ev: PhysicalEvent, fault=None):
        apply_event(self.model, self.state, ev, self.log, fault)

    def route_trip(self, trip, now):
        kind, _, target = trip.target.partition(":")
        self.log_entry(now, "trip", trip.relay, target=trip.target, reason=trip.reason)
        if kind == "source":
            if self.state.online.get(target, False):
                self._apply(PhysicalEvent(now, "source_trip", target, origin=trip.relay))
        elif self.scn.trip_path == "networked":
            frame = self.mgc_or_master_frame("breaker", target, Command.TRIP)
            self.send(frame, now)
        else:
            self.command_breaker(target, "open", now, now, trip.relay)

    def mgc_or_master_frame(self, kind, target, command, value=0.0):
        master = self.scn.cyber.master.address
        for b in self.scn.bindings:
            p = b.find(kind, target)
            if p is not None:
                from gridsurge.cybernet import Frame

                return Frame.command(Function.DIRECT_OPERATE, self.net.next_seq(master), b.address, master,
                                     p.index, Command[command] if isinstance(command, str) else command, value)
        raise InvalidScenario(f"no outstation point bound to {kind} {target!r}")

    def measure(self, point):
        sol = self.state.solution
        if point.kind == "meas_bus":
            return float(abs(sol.voltages[self.model.bus_index[point.target]]))
        if point.kind == "meas_source":
            return sol.source_p_kw[point.target]
        if point.kind == "load":
            idx = self.model.load_index[point.target]
            return float(sol.load_p_kw[idx])
        return math.nan

    # -- step stages -------------------------------------------------------
    def deliver(self, t):
        for d, frame, verdict in self.net.pop_due(t):
            if frame is None:
                continue
            if frame.dst == self.scn.cyber.master.address:
                if self.mgc is not None:
                    self.mgc.receive(frame)
                continue
            binding = self.outstations.get(frame.dst)
            if binding is None:
                continue
            reply = outstation_apply(binding, frame, d.t_deliver, self.measure)
            if reply.error:
                self.log_entry(t, reply.error, binding.name, point=frame.point_record()[0])
            ev = reply.event
            if ev is not None:
                if ev.kind == "breaker_command":
                    self.command_breaker(ev.target, ev.channel, d.t_deliver, t, "cyber")
                elif ev.kind == "load_shed" and ev.target in self.state.shed:
                    pass
                else:
                    self._apply(PhysicalEvent(t, ev.kind, ev.target, ev.value, ev.channel, origin="cyber"))
            self.send(reply.response, t)

    def scripted(self, t):
        while self.next_item < len(self.timeline) and self.timeline[self.next_item][0] <= t + 1e-9:
            _, _, (what, item) = self.timeline[self.next_item]
            self.next_item += 1
            if what == "fault":
                self._apply(PhysicalEvent(t, "fault", item.id), fault=item)
            elif what == "clear":
                if item.id in self.state.faults:
                    self._apply(PhysicalEvent(t, "clear", item.id))
            elif what == "command":
                self.send(self.mgc_or_master_frame(item.point_kind, item.target, item.command, item.value), t)
            else:
                if item.kind in ("breaker_open", "breaker_close"):
                    self.breakers[item.target] = BreakerState(closed=item.kind == "breaker_close")
                self._apply(PhysicalEvent(t, item.kind, item.target, item.value, item.channel))
        for b, st in self.breakers.items():
            if st.pending is not None:
                st, change = breaker_step(self.breaker_specs[b], st, t)
                self.breakers[b] = st
                if change:
                    self._apply(PhysicalEvent(t, f"breaker_{change}", b, origin="breaker"))

    def protect_and_control(self, t):
        sol = self.state.solution
        freq = self.state.frequency_hz(self.model.nominal_hz)
        for r in self.relays:
            st = self.relay_state[r.id]
            if st.latched:
                continue
            # a source's own protection goes quiet once the source is off line
            kind, _, tgt = getattr(r, "target", "").partition(":")
            if kind == "source" and not self.state.online[tgt]:
                continue
            if isinstance(r, OvercurrentRelaySpec):
                cur = abs(sol.branch_currents[self.model.branch_index[r.branch]])
                st, trip = oc_step(r, st, cur, self.dt, t)
            elif isinstance(r, VoltageRelaySpec):
                st, trip = uv_step(r, st, abs(sol.voltages[self.model.bus_index[r.bus]]), self.dt, t)
            else:
                st, trip = uf_step(r, st, freq, self.dt, t)
            self.relay_state[r.id] = st
            if trip is not None:
                self.route_trip(trip, t)
        if self.mgc is not None:
            obs = Observations(t, self.state.breakers[self.scn.policy.islanding_breaker], freq)
            for frame in self.mgc.step(obs, self.net.next_seq, self.state.online, self.state.shed):
                self.send(frame, t)

    def extinguish_faults(self, t):
        sol = self.state.solution
        for fid, f in list(self.state.faults.items()):
            if f.clear_s is None and sol.dead[self.model.bus_index[f.bus]]:
                del self.state.faults[fid]
                self.log_entry(t, "fault_extinguished", fid, bus=f.bus)


def run_scenario(scn: Scenario) -> SimResult:
    """Run ``scn`` to completion or to a blackout; deterministic in ``scn``."""
    model = validate_scenario(scn)
    run = _Run(scn, model)
    n = scn.n_steps
    dt = scn.dt_s
    out = scn.output
    buses = list(out.buses) if out.buses is not None else [b.id for b in model.buses]
    sources = list(out.sources) if out.sources is not None else [s.id for s in model.sources]
    bus_idx = [model.bus_index[b] for b in buses]
    rows = n + 1
    time = np.round(np.arange(rows) * dt, 9)
    freq = np.empty(rows)
    volt = np.empty((len(buses), rows))
    sp = np.empty((len(sources), rows))
    sq = np.empty((len(sources), rows))
    loading = np.empty(rows)
    genset = model.genset
    status = "completed"
    recorded = 0
    state = run.state

    for k in range(rows):
        t = float(time[k])
        state.time = t
        if run.net is not None:
            run.deliver(t)
        run.scripted(t)
        try:
            sol = refresh(model, state)
        except NoConvergence as exc:
            run.log_entry(t, "blackout", "network", reason="solver_no_convergence", message=str(exc))
            status = "blackout"
            break
        if state.faults:
            run.extinguish_faults(t)
        run.protect_and_control(t)

        f_hz = state.frequency_hz(model.nominal_hz)
        load_pu = genset_loading(model, state)
        freq[k] = f_hz
        v = sol.voltages
        for j, bi in enumerate(bus_idx):
            volt[j, k] = abs(v[bi])
        for j, s in enumerate(sources):
            sp[j, k] = sol.source_p_kw[s]
            sq[j, k] = sol.source_q_kvar[s]
        loading[k] = load_pu
        recorded = k + 1

        if genset is not None and load_pu > genset.overload_factor:
            if run.over_since is None:
                run.over_since = t
            elif t - run.over_since > genset.overload_duration_s + 1e-9:
                run.log_entry(t, "blackout", genset.id, reason="genset_overload",
                              since=run.over_since, loading_pu=load_pu)
                status = "blackout"
                break
        else:
            run.over_since = None
        if k == n:
            break
        try:
            step_dynamics(model, state, dt)
        except FloatingPointError as exc:
            run.log_entry(t, "solver_failure", "dynamics", message=str(exc))
            status = "solver_failure"
            break

    return SimResult(
        scenario=scn.name,
        dt=dt,
        duration=scn.duration_s,
        nominal_hz=model.nominal_hz,
        time=time[:recorded],
        frequency_hz=freq[:recorded],
        bus_voltage={b: volt[j, :recorded] for j, b in enumerate(buses)},
        source_p_kw={s: sp[j, :recorded] for j, s in enumerate(sources)},
        source_q_kvar={s: sq[j, :recorded] for j, s in enumerate(sources)},
        genset_loading=loading[:recorded],
        events=run.log,
        status=status,
        frames=run.net.trace if run.net is not None else [],
        plot_buses=tuple(out.plot_buses),
    )


def _longest_run(mask: np.ndarray, dt: float) -> float:
    best = cur = 0
    for m in mask:
        cur = cur + 1 if m else 0
        best = max(best, cur)
    return max(best - 1, 0) * dt if best else 0.0


def summarize(result: SimResult, thresholds=THRESHOLDS_HZ) -> Summary:
    """Headline numbers of one run: the frequency nadir with its threshold
    crossings, plus relay trips and genset overload.

    ``genset_overload_s`` is the longest continuous stretch with the genset
    above its rating.
    """
    if len(result.time) == 0:
        raise EmptySeries(f"{result.scenario}: no samples")
    k = int(np.argmin(result.frequency_hz))
    nadir = float(result.frequency_hz[k])
    trips = tuple((e.time, e.target, e.detail.get("target", "")) for e in result.trips())
    return Summary(
        scenario=result.scenario,
        nadir_hz=nadir,
        nadir_time_s=float(result.time[k]),
        crossings={float(th): nadir < th for th in thresholds},
        trips=trips,
        genset_overload_s=float(_longest_run(result.genset_loading > 1.0, result.dt)),
        blackout=result.status == "blackout",
        status=result.status,
    )


@dataclass(frozen=True)
class DiffReport:
    max_abs: dict[str, float]
    first_divergence_s: float | None
    compared_samples: int
    length_a: int
    length_b: int

    @property
    def identical(self) -> bool:
        return self.first_divergence_s is None and self.length_a == self.length_b

    def as_dict(self) -> dict:
        return {
            "max_abs": self.max_abs,
            "first_divergence_s": self.first_divergence_s,
            "compared_samples": self.compared_samples,
            "length_a": self.length_a,
            "length_b": self.length_b,
            "identical": self.identical,
        }


def compare_runs(a: SimResult, b: SimResult) -> DiffReport:
    """Per-channel max absolute deviation and first time any channel differs.

    Runs that ended at different times (e.g. one blacked out) are compared
    over their common prefix.
    """
    if a.dt != b.dt or a.duration != b.duration:
        raise ShapeMismatch(f"dt/duration differ: ({a.dt}, {a.duration}) vs ({b.dt}, {b.duration})")
    ca, cb = a.channels(), b.channels()
    if list(ca) != list(cb):
        raise ShapeMismatch("channel sets differ")
    n = min(len(a), len(b))
    max_abs: dict[str, float] = {}
    first = None
    for name in ca:
        if name == "time_s":
            continue
        x, y = ca[name][:n], cb[name][:n]
        diff = np.abs(x - y)
        max_abs[name] = float(diff.max()) if n else 0.0
        ne = np.flatnonzero(x != y)
        if ne.size:
            t = float(a.time[ne[0]])
            first = t if first is None else min(first, t)
    return DiffReport(max_abs, first, n, len(a), len(b))
