"""Microgrid central controller (the SCADA master) and outstation agents."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

from gridsurge.cybernet.codec import Command, Frame, Function
from gridsurge.grid.dynamics import PhysicalEvent
from gridsurge.grid.model import GridModel

POINT_KINDS = ("load", "breaker", "setpoint_p", "setpoint_q", "meas_bus", "meas_source")


@dataclass(frozen=True)
class MgcPolicy:
    """Load-shedding policy of the central controller.

    ``shed_order`` lists load classes from first to last shed; ``critical``
    may never appear in it.
    """

    islanding_breaker: str
    shed_order: tuple[str, ...] = ("residential", "commercial")
    frequency_monitor_hz: float = 59.5
    poll_period_s: float = 0.0
    retry: bool = False
    retry_timeout_s: float = 0.5
    max_retries: int = 3

    def __post_init__(self):
        if "critical" in self.shed_order:
            raise ValueError("critical loads are never in the shed order")
        if self.poll_period_s < 0 or self.retry_timeout_s <= 0 or self.max_retries < 0:
            raise ValueError("poll period >= 0, retry timeout > 0 and max_retries >= 0 required")


@dataclass(frozen=True)
class PointBinding:
    index: int
    kind: str
    target: str

    def __post_init__(self):
        if self.kind not in POINT_KINDS:
            raise ValueError(f"unknown point kind {self.kind!r}")
        if not 0 <= self.index <= 0xFFFF:
            raise ValueError("point index must fit in u16")


@dataclass(frozen=True)
class OutstationBinding:
    """Maps an outstation's point indices onto physical elements."""

    name: str
    address: int
    points: tuple[PointBinding, ...] = ()

    def __post_init__(self):
        idx = [p.index for p in self.points]
        if len(set(idx)) != len(idx):
            raise ValueError(f"outstation {self.name}: duplicate point index")

    def point(self, index: int) -> PointBinding | None:
        return next((p for p in self.points if p.index == index), None)

    def find(self, kind: str, target: str) -> PointBinding | None:
        return next((p for p in self.points if p.kind == kind and p.target == target), None)


def check_bindings(model: GridModel, breakers, bindings) -> None:
    """Raise ValueError when a binding names an element absent from the model."""
    inverter_ids = {inv.id for inv in model.inverters}
    for b in bindings:
        for p in b.points:
            ok = {
                "load": p.target in model.load_index,
                "breaker": p.target in breakers,
                "setpoint_p": p.target in inverter_ids,
                "setpoint_q": p.target in inverter_ids,
                "meas_bus": p.target in model.bus_index,
                "meas_source": p.target in model.source_index,
            }[p.kind]
            if not ok:
                raise ValueError(f"outstation {b.name} point {p.index}: unknown {p.kind} target {p.target!r}")


@dataclass(frozen=True)
class Observations:
    """What the controller sees at one step."""

    time: float
    pcc_closed: bool
    frequency_hz: float


@dataclass
class _Outstanding:
    frame: Frame
    sent_at: float
    attempts: int = 1


@dataclass
class MicrogridController:
    """Central controller state machine; one ``step`` per physical step.

    On the closed-to-open edge of the islanding breaker it sheds sheddable
    loads in policy order until forecast generation covers the remaining load,
    issuing every command in the same step as the detection.
    """

    policy: MgcPolicy
    model: GridModel
    bindings: tuple[OutstationBinding, ...]
    address: int = 1
    pcc_closed: bool | None = None
    shed_sent: set[str] = field(default_factory=set)
    telemetry: dict[tuple[int, int], float] = field(default_factory=dict)
    next_poll: float = 0.0
    outstanding: dict[tuple[int, int], _Outstanding] = field(default_factory=dict)
    islanding_events: int = 0

    def _frame(self, seq: Callable[[int], int], binding, point, command, value=0.0, function=Function.DIRECT_OPERATE):
        return Frame.command(function, seq(self.address), binding.address, self.address, point, command, value)

    def forecast_generation_kw(self, online: dict[str, bool] | None = None) -> float:
        total = 0.0
        for src in self.model.sources:
            if online is not None and not online.get(src.id, True):
                continue
            if src is self.model.genset:
                total += src.rated_kw
            elif src in self.model.inverters:
                total += src.p_kw
        return total

    def shed_plan(self, online=None, already_shed=()) -> list[str]:
        """Load ids to shed, in order, so that generation covers the load."""
        gen = self.forecast_generation_kw(online)
        remaining = sum(ld.p_kw for ld in self.model.loads if ld.id not in already_shed)
        plan = []
        for cls in self.policy.shed_order:
            for ld in self.model.loads:
                if gen >= remaining:
                    return plan
                if ld.load_class == cls and ld.sheddable and ld.id not in already_shed:
                    plan.append(ld.id)
                    remaining -= ld.p_kw
        return plan

    def _binding_for(self, kind: str, target: str):
        for b in self.bindings:
            p = b.find(kind, target)
            if p is not None:
                return b, p
        return None, None

    def step(self, obs: Observations, seq: Callable[[int], int], online=None, shed=()) -> list[Frame]:
        frames: list[Frame] = []
        was_closed = self.pcc_closed
        self.pcc_closed = obs.pcc_closed
        if was_closed and not obs.pcc_closed:
            self.islanding_events += 1
            for load_id in self.shed_plan(online, set(shed) | self.shed_sent):
                b, p = self._binding_for("load", load_id)
                if b is None:
                    continue
                self.shed_sent.add(load_id)
                frames.append(self._frame(seq, b, p.index, Command.SHED))
        if self.policy.retry:
            for key, out in list(self.outstanding.items()):
                if obs.time - out.sent_at >= self.policy.retry_timeout_s - 1e-9:
                    if out.attempts > self.policy.max_retries:
                        del self.outstanding[key]
                        continue
                    f = out.frame
                    resend = Frame(f.function, seq(self.address), f.dst, f.src, f.payload)
                    del self.outstanding[key]
                    self.outstanding[(resend.dst, resend.seq)] = _Outstanding(resend, obs.time, out.attempts + 1)
                    frames.append(resend)
        if self.policy.poll_period_s > 0 and obs.time >= self.next_poll - 1e-9:
            self.next_poll = obs.time + self.policy.poll_period_s
            for b in self.bindings:
                meas = [p for p in b.points if p.kind.startswith("meas")]
                if meas:
                    frames.append(self._frame(seq, b, meas[0].index, Command.MEAS, function=Function.READ))
        if self.policy.retry:
            for f in frames:
                if f.function == Function.DIRECT_OPERATE and (f.dst, f.seq) not in self.outstanding:
                    self.outstanding[(f.dst, f.seq)] = _Outstanding(f, obs.time)
        return frames

    def command_frame(self, seq, kind: str, target: str, command: Command, value: float = 0.0) -> Frame:
        """DIRECT_OPERATE frame for the point bound to ``(kind, target)``."""
        b, p = self._binding_for(kind, target)
        if b is None:
            raise KeyError(f"no outstation point bound to {kind} {target!r}")
        return self._frame(seq, b, p.index, command, value)

    def receive(self, frame: Frame) -> None:
        """Handle a RESPONSE: record telemetry and clear the outstanding command."""
        self.outstanding.pop((frame.src, frame.seq), None)
        if frame.has_point:
            point, cmd, value = frame.point_record()
            if cmd == Command.MEAS:
                self.telemetry[(frame.src, point)] = value


@dataclass(frozen=True)
class OutstationReply:
    event: PhysicalEvent | None
    response: Frame
    error: str | None = None


_SETPOINT = {Command.SET_P: ("setpoint_p", "p"), Command.SET_Q: ("setpoint_q", "q")}


def outstation_apply(
    binding: OutstationBinding,
    frame: Frame,
    t_deliver: float,
    measure: Callable[[PointBinding], float] | None = None,
) -> OutstationReply:
    """Turn a delivered frame into a physical event at the delivery time.

    The RESPONSE echoes the request's sequence number and point record; a NACK
    (unknown point or a command the point does not accept) carries NaN.
    """
    point, cmd, value = frame.point_record()
    bound = binding.point(point)

    def reply(val, error=None, event=None):
        resp = Frame.command(Function.RESPONSE, frame.seq, frame.src, binding.address, point, cmd, val)
        return OutstationReply(event, resp, error)

    if bound is None:
        return reply(math.nan, "UnknownPoint")
    if frame.function == Function.READ:
        meas = measure(bound) if measure is not None else math.nan
        return reply(meas)
    if frame.function != Function.DIRECT_OPERATE:
        return reply(math.nan, "UnsupportedFunction")
    if cmd == Command.SHED and bound.kind == "load":
        return reply(value, event=PhysicalEvent(t_deliver, "load_shed", bound.target, origin="cyber"))
    if cmd in (Command.TRIP, Command.CLOSE) and bound.kind == "breaker":
        action = "open" if cmd == Command.TRIP else "close"
        ev = PhysicalEvent(t_deliver, "breaker_command", bound.target, channel=action, origin="cyber")
        return reply(value, event=ev)
    if cmd in _SETPOINT and bound.kind == _SETPOINT[cmd][0]:
        ev = PhysicalEvent(t_deliver, "setpoint_change", bound.target, value=value,
                           channel=_SETPOINT[cmd][1], origin="cyber")
        return reply(value, event=ev)
    return reply(math.nan, "UnsupportedCommand")
