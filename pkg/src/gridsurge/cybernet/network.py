"""Event-driven emulation of the radial SCADA network.

Every master-outstation pair is joined by two directional links. A link is a
FIFO single-server queue: a frame departs once the frames ahead of it have
been serialised at ``bandwidth_fps`` and arrives ``latency_s`` later. Attacks
hook into the link: a fixed-delay DoS postpones frames sent inside its window,
a flood fills the queue with attacker frames, and a MITM rule rewrites
matching payloads (with a fresh CRC) before they leave.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field

from gridsurge.cybernet.codec import Command, Frame, Function, decode_frame, encode_frame
from gridsurge.errors import FrameError, QueueOverflow, UnknownLink
from gridsurge.grid.dynamics import LogEntry

EPS = 1e-9


@dataclass(frozen=True)
class LinkParams:
    latency_s: float = 0.005
    bandwidth_fps: float = 100.0
    capacity: int = 64

    def __post_init__(self):
        if self.latency_s < 0:
            raise ValueError("latency must be >= 0")
        if self.bandwidth_fps <= 0 or self.capacity < 1:
            raise ValueError("bandwidth must be > 0 and capacity >= 1")


@dataclass(frozen=True)
class Node:
    name: str
    address: int


@dataclass(frozen=True)
class CyberTopology:
    """One master joined radially to each outstation."""

    master: Node
    outstations: tuple[Node, ...]
    links: dict[str, LinkParams] = field(default_factory=dict)   # per outstation name
    default_link: LinkParams = LinkParams()

    def __post_init__(self):
        names = [self.master.name] + [o.name for o in self.outstations]
        addrs = [self.master.address] + [o.address for o in self.outstations]
        if len(set(names)) != len(names):
            raise ValueError("duplicate cyber node name")
        if len(set(addrs)) != len(addrs):
            raise ValueError("duplicate cyber node address")
        for name in self.links:
            if name not in names[1:]:
                raise ValueError(f"link parameters for unknown outstation {name!r}")


@dataclass(frozen=True)
class Window:
    start: float
    end: float

    def __post_init__(self):
        if not self.end >= self.start:
            raise ValueError(f"window end {self.end} precedes start {self.start}")

    def contains(self, t: float) -> bool:
        return self.start - EPS <= t <= self.end + EPS


@dataclass(frozen=True)
class FixedDelay:
    delay_s: float

    def __post_init__(self):
        if self.delay_s < 0:
            raise ValueError("DoS delay must be >= 0")


@dataclass(frozen=True)
class Flood:
    rate_fps: float

    def __post_init__(self):
        if self.rate_fps <= 0:
            raise ValueError("flood rate must be > 0")


@dataclass(frozen=True)
class MitmRule:
    function: Function
    point: int
    window: Window
    command: Command | None = None
    value: float | None = None


@dataclass
class _FloodState:
    window: Window
    rate: float
    sent: int = 0

    def next_arrival(self) -> float:
        return self.window.start + self.sent / self.rate


@dataclass
class Link:
    name: str
    src: Node
    dst: Node
    params: LinkParams
    departures: deque = field(default_factory=deque)
    last_depart: float = -math.inf
    last_deliver: float = -math.inf
    delays: list = field(default_factory=list)       # (Window, FixedDelay)
    floods: list = field(default_factory=list)       # _FloodState
    mitm: list = field(default_factory=list)         # MitmRule
    flood_sent: int = 0
    flood_dropped: int = 0

    def occupancy(self, t: float) -> int:
        while self.departures and self.departures[0] < t - EPS:
            self.departures.popleft()
        return len(self.departures)

    def _enqueue(self, t: float) -> float | None:
        if self.occupancy(t) >= self.params.capacity:
            return None
        depart = max(t, self.last_depart + 1.0 / self.params.bandwidth_fps)
        self.last_depart = depart
        self.departures.append(depart)
        return depart

    def advance(self, t: float) -> None:
        """Inject attacker frames arriving at or before ``t``, in time order."""
        while True:
            pending = [f for f in self.floods if f.next_arrival() <= f.window.end + EPS]
            if not pending:
                return
            f = min(pending, key=_FloodState.next_arrival)
            arrival = f.next_arrival()
            if arrival > t + EPS:
                return
            f.sent += 1
            self.flood_sent += 1
            if self._enqueue(arrival) is None:
                self.flood_dropped += 1

    def added_delay(self, t: float) -> float:
        return sum(d.delay_s for w, d in self.delays if w.contains(t))


@dataclass(frozen=True)
class Delivery:
    t_deliver: float
    t_send: float
    link: str
    src: str
    dst: str
    data: bytes


@dataclass(frozen=True)
class TraceRecord:
    t_send: float
    t_deliver: float | None
    src: str
    dst: str
    data: bytes
    verdict: str

    def line(self) -> str:
        t_del = "-" if self.t_deliver is None else f"{self.t_deliver:.6f}"
        return f"{self.t_send:.6f} {t_del} {self.src} {self.dst} {self.data.hex()} {self.verdict}"


class CyberNetwork:
    """Links, in-flight deliveries and attack hooks of one simulation run."""

    def __init__(self, topology: CyberTopology, log: list[LogEntry] | None = None):
        self.topology = topology
        self.log = log if log is not None else []
        self.trace: list[TraceRecord] = []
        self.nodes = {n.name: n for n in (topology.master, *topology.outstations)}
        self.by_address = {n.address: n for n in self.nodes.values()}
        self.links: dict[str, Link] = {}
        m = topology.master
        for o in topology.outstations:
            params = topology.links.get(o.name, topology.default_link)
            for a, b in ((m, o), (o, m)):
                name = link_name(a.name, b.name)
                self.links[name] = Link(name, a, b, params)
        self._queue: list[tuple[float, int, Delivery]] = []
        self._counter = 0
        self._seq: dict[int, int] = {}

    def link(self, name: str) -> Link:
        try:
            return self.links[name]
        except KeyError:
            raise UnknownLink(f"no link {name!r}") from None

    def next_seq(self, src_address: int) -> int:
        seq = self._seq.get(src_address, 0)
        self._seq[src_address] = (seq + 1) % 256
        return seq

    def send(self, src: str, dst: str, frame: Frame, t_now: float) -> Delivery:
        """Queue ``frame`` on the ``src -> dst`` link.

        Raises:
            UnknownLink: no such link.
            QueueOverflow: the link queue is full; the frame is dropped and
                recorded in the trace and the event log.
        """
        link = self.link(link_name(src, dst))
        link.advance(t_now)
        data = encode_frame(frame)
        verdict = "ok"
        for rule in link.mitm:
            if rule.window.contains(t_now) and _matches(rule, frame):
                point, cmd, value = frame.point_record()
                new_cmd = rule.command if rule.command is not None else cmd
                new_val = rule.value if rule.value is not None else value
                data = encode_frame(frame.with_point_record(point, new_cmd, new_val))
                verdict = "rewritten"
                self.log.append(
                    LogEntry(t_now, "attack_mitm", link.name,
                             {"point": point, "from": [int(cmd), value], "to": [int(new_cmd), new_val]})
                )
        depart = link._enqueue(t_now)
        if depart is None:
            self.trace.append(TraceRecord(t_now, None, src, dst, data, "dropped"))
            self.log.append(LogEntry(t_now, "frame_dropped", link.name, {"seq": frame.seq}))
            raise QueueOverflow(f"link {link.name} queue full at t={t_now:.6f}")
        t_deliver = depart + link.params.latency_s + link.added_delay(t_now)
        t_deliver = max(t_deliver, link.last_deliver)
        link.last_deliver = t_deliver
        delivery = Delivery(t_deliver, t_now, link.name, src, dst, data)
        heapq.heappush(self._queue, (t_deliver, self._counter, delivery))
        self._counter += 1
        self.trace.append(TraceRecord(t_now, t_deliver, src, dst, data, verdict))
        return delivery

    def inject_dos(self, link: str, window: Window, mode: FixedDelay | Flood) -> None:
        target = self.link(link)
        if isinstance(mode, FixedDelay):
            target.delays.append((window, mode))
        elif isinstance(mode, Flood):
            target.floods.append(_FloodState(window, mode.rate_fps))
        else:
            raise TypeError(f"unknown DoS mode {mode!r}")

    def mitm_rewrite(self, link: str, rule: MitmRule) -> None:
        self.link(link).mitm.append(rule)

    def advance(self, t: float) -> None:
        for link in self.links.values():
            if link.floods:
                link.advance(t)

    def pop_due(self, t: float) -> list[tuple[Delivery, Frame | None, str]]:
        """Deliveries due at or before ``t`` as ``(delivery, frame, verdict)``.

        Frames are decoded at the receiver; a frame that fails decoding is
        returned with ``frame=None`` and the error kind as verdict.
        """
        out = []
        while self._queue and self._queue[0][0] <= t + EPS:
            _, _, d = heapq.heappop(self._queue)
            try:
                out.append((d, decode_frame(d.data), "ok"))
            except FrameError as exc:
                self.log.append(LogEntry(t, "frame_rejected", d.link, {"error": exc.kind}))
                out.append((d, None, exc.kind))
        return out

    @property
    def in_flight(self) -> int:
        return len(self._queue)


def link_name(src: str, dst: str) -> str:
    return f"{src}->{dst}"


def _matches(rule: MitmRule, frame: Frame) -> bool:
    if frame.function != rule.function or not frame.has_point:
        return False
    point, _, _ = frame.point_record()
    return point == rule.point
