"""Protection chain: inverse-time overcurrent, definite-time voltage and
frequency elements, and breakers with an operate delay.

All step functions are pure: they take a state and return a new one plus an
optional trip. Relays evaluate the measurement of the current sample; time
already spent above pickup is credited over the preceding interval, so a
constant overload trips at the first sample at or after ``t(M)`` from onset.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

EPS = 1e-9

# IEEE C37.112 inverse-time constants (A, B, p)
IEEE_CURVES: dict[str, tuple[float, float, float]] = {
    "moderately_inverse": (0.0515, 0.1140, 0.02),
    "very_inverse": (19.61, 0.491, 2.0),
    "extremely_inverse": (28.2, 0.1217, 2.0),
}


@dataclass(frozen=True)
class OvercurrentRelaySpec:
    """Non-directional inverse-time overcurrent element.

    ``pickup_pu`` is in per unit of system base current as seen on ``branch``.
    """

    id: str
    branch: str
    breaker: str
    pickup_pu: float
    tds: float = 1.0
    a: float = 0.0515
    b: float = 0.1140
    p: float = 0.02
    reset: str = "instantaneous"

    def __post_init__(self):
        if self.pickup_pu <= 0 or self.tds <= 0 or self.p <= 0:
            raise ValueError(f"relay {self.id}: pickup, time dial and exponent must all be positive")

    def trip_time(self, m: float) -> float:
        """Operating time for a constant multiple of pickup ``m`` (inf at or below 1)."""
        if m <= 1.0:
            return float("inf")
        return self.tds * (self.a / (m**self.p - 1.0) + self.b)


@dataclass(frozen=True)
class VoltageRelaySpec:
    """Definite-time voltage element.

    ``target`` is ``"breaker:<id>"`` or ``"source:<id>"`` (inverter
    self-protection disconnects the source directly).
    """

    id: str
    bus: str
    threshold_pu: float
    time_s: float
    target: str
    direction: str = "under"

    def __post_init__(self):
        if self.threshold_pu <= 0 or self.time_s < 0:
            raise ValueError(f"relay {self.id}: threshold must be > 0 and time >= 0")
        if self.direction not in ("under", "over"):
            raise ValueError(f"relay {self.id}: direction must be 'under' or 'over'")


@dataclass(frozen=True)
class FrequencyRelaySpec:
    id: str
    threshold_hz: float
    time_s: float
    target: str
    direction: str = "under"
    enabled: bool = False

    def __post_init__(self):
        if self.threshold_hz <= 0 or self.time_s < 0:
            raise ValueError(f"relay {self.id}: threshold must be > 0 and time >= 0")
        if self.direction not in ("under", "over"):
            raise ValueError(f"relay {self.id}: direction must be 'under' or 'over'")


@dataclass(frozen=True)
class RelayState:
    integral: float = 0.0     # inverse-time progress, 1.0 = trip
    rate: float = 0.0         # 1/t(M) of the previous sample
    timer: float = 0.0        # definite-time elapsed
    picked_up: bool = False
    latched: bool = False
    last_trip: float | None = None


@dataclass(frozen=True)
class TripCommand:
    relay: str
    target: str
    time: float
    reason: str


def oc_step(spec: OvercurrentRelaySpec, state: RelayState, current_pu: float, dt: float, now: float = 0.0):
    """One overcurrent evaluation; returns ``(state, TripCommand | None)``."""
    if current_pu < 0:
        raise ValueError("current magnitude must be non-negative")
    if state.latched:
        return state, None
    m = current_pu / spec.pickup_pu
    if m <= 1.0:
        if state.integral or state.picked_up:
            state = replace(state, integral=0.0, rate=0.0, picked_up=False)
        return state, None
    integral = state.integral + dt * state.rate if state.picked_up else 0.0
    rate = 1.0 / spec.trip_time(m)
    if integral >= 1.0 - EPS:
        new = RelayState(integral=1.0, rate=rate, picked_up=True, latched=True, last_trip=now)
        return new, TripCommand(spec.id, f"breaker:{spec.breaker}", now, f"overcurrent M={m:.4g}")
    return replace(state, integral=integral, rate=rate, picked_up=True), None


def _definite_time(state: RelayState, active: bool, delay: float, dt: float, now: float):
    if state.latched:
        return state, False
    if not active:
        if state.timer or state.picked_up:
            state = replace(state, timer=0.0, picked_up=False)
        return state, False
    timer = state.timer + dt if state.picked_up else 0.0
    if timer >= delay - EPS:
        return RelayState(timer=timer, picked_up=True, latched=True, last_trip=now), True
    return replace(state, timer=timer, picked_up=True), False


def uv_step(spec: VoltageRelaySpec, state: RelayState, voltage_pu: float, dt: float, now: float = 0.0):
    """One voltage-element evaluation; returns ``(state, TripCommand | None)``.

    An under-voltage element runs while ``V < threshold`` strictly and resets
    as soon as the voltage recovers.
    """
    if voltage_pu < 0:
        raise ValueError("voltage magnitude must be non-negative")
    if spec.direction == "under":
        active = voltage_pu < spec.threshold_pu
    else:
        active = voltage_pu > spec.threshold_pu
    state, tripped = _definite_time(state, active, spec.time_s, dt, now)
    if tripped:
        return state, TripCommand(spec.id, spec.target, now, f"{spec.direction}voltage V={voltage_pu:.4g}")
    return state, None


def uf_step(spec: FrequencyRelaySpec, state: RelayState, freq_hz: float, dt: float, now: float = 0.0):
    if not spec.enabled:
        return state, None
    active = freq_hz < spec.threshold_hz if spec.direction == "under" else freq_hz > spec.threshold_hz
    state, tripped = _definite_time(state, active, spec.time_s, dt, now)
    if tripped:
        return state, TripCommand(spec.id, spec.target, now, f"{spec.direction}frequency f={freq_hz:.5g}")
    return state, None


@dataclass(frozen=True)
class BreakerSpec:
    id: str
    operate_delay_s: float = 0.05

    def __post_init__(self):
        if self.operate_delay_s < 0:
            raise ValueError(f"breaker {self.id}: operate delay must be >= 0")


@dataclass(frozen=True)
class BreakerCommand:
    action: str      # "open" | "close"
    issued: float


@dataclass(frozen=True)
class BreakerState:
    closed: bool = True
    pending: str | None = None
    due: float | None = None
    attack_delay_s: float = 0.0

    def __post_init__(self):
        if self.attack_delay_s < 0:
            raise ValueError("attack delay must be >= 0")


def breaker_step(spec: BreakerSpec, state: BreakerState, now: float, command: BreakerCommand | None = None):
    """Advance a breaker to ``now``; returns ``(state, "open" | "close" | None)``.

    A command schedules the operation at ``issued + operate delay + attack
    delay``. Repeating the pending command is a no-op, as is commanding the
    position the breaker already holds; an opposite command supersedes it.
    """
    if command is not None:
        if command.action not in ("open", "close"):
            raise ValueError(f"unknown breaker action {command.action!r}")
        target_closed = command.action == "close"
        if state.pending == command.action:
            pass
        elif state.pending is None and state.closed == target_closed:
            pass
        else:
            due = command.issued + spec.operate_delay_s + state.attack_delay_s
            state = replace(state, pending=command.action, due=due)
    if state.pending is not None and state.due is not None and now >= state.due - EPS:
        action = state.pending
        return replace(state, closed=action == "close", pending=None, due=None), action
    return state, None
