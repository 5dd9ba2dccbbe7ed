"""Time-evolving state of the electrical layer and its integrator.

The genset rotor speed and governor are integrated with fixed-step RK4 while
the electrical power drawn from the machine is held at the value of the
network solution taken at the start of the step (quasi-static coupling).
Inverter P/Q references pass through a first-order lag, discretised exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from gridsurge.errors import UnknownTarget
from gridsurge.grid.model import FaultSpec, GensetSpec, GridModel
from gridsurge.grid.network import NetworkSolution, solve_network

EVENT_KINDS = (
    "fault",
    "clear",
    "breaker_open",
    "breaker_close",
    "load_shed",
    "setpoint_change",
    "source_trip",
)


@dataclass
class DynamicState:
    """Mutable physical state; ``step_dynamics``/``apply_event`` update it in place."""

    time: float
    breakers: dict[str, bool]            # True = closed
    online: dict[str, bool]
    inv_p_set: np.ndarray                # kW, per model.inverters
    inv_q_set: np.ndarray
    inv_p: np.ndarray                    # filtered references actually tracked
    inv_q: np.ndarray
    voltages: np.ndarray
    dw: float = 0.0                      # genset speed deviation, pu
    pm: float = 0.0                      # mechanical power, pu of rated_kw
    pref: float = 0.0
    emf: complex = 1.0 + 0j              # genset internal EMF, pu
    faults: dict[str, FaultSpec] = field(default_factory=dict)
    shed: set[str] = field(default_factory=set)
    solution: NetworkSolution | None = None

    def frequency_hz(self, nominal_hz: float) -> float:
        return nominal_hz * (1.0 + self.dw)

    @property
    def islanded(self) -> bool:
        """True when the genset is the frequency reference of its island."""
        return self.solution is not None and self.solution.genset_mode == "ref"


@dataclass(frozen=True)
class PhysicalEvent:
    """A discrete change applied at a step boundary.

    ``target`` is the id of the element that ``kind`` acts on.
    ``channel`` ("p" or "q") and ``value`` (kW/kvar) qualify setpoint changes.
    """

    time: float
    kind: str
    target: str
    value: float | None = None
    channel: str | None = None
    origin: str = "script"


@dataclass(frozen=True)
class LogEntry:
    time: float
    kind: str
    target: str
    detail: dict[str, Any] = field(default_factory=dict)


def initial_state(model: GridModel, breakers: dict[str, bool] | None = None) -> DynamicState:
    """Steady operating point with all sources online and inverters at setpoint.

    A genset that starts as its island's voltage reference gets the internal
    EMF that puts its terminal at 1.0 pu, and a governor reference equal to its
    initial electrical output (so the initial state is an equilibrium).
    """
    positions = {b: True for b in model.breakers()}
    if breakers:
        for b in breakers:
            if b not in positions:
                raise UnknownTarget(f"unknown breaker {b!r}")
        positions.update(breakers)
    p_set = np.array([inv.p_kw for inv in model.inverters], dtype=float)
    q_set = np.array([inv.q_kvar for inv in model.inverters], dtype=float)
    state = DynamicState(
        time=0.0,
        breakers=positions,
        online={s.id: True for s in model.sources},
        inv_p_set=p_set,
        inv_q_set=q_set,
        inv_p=p_set.copy(),
        inv_q=q_set.copy(),
        voltages=np.ones(model.n_bus, dtype=complex),
    )
    genset = model.genset
    if genset is not None:
        dispatch = genset.dispatch_kw if genset.dispatch_kw is not None else 0.0
        state.pm = state.pref = dispatch / genset.rated_kw
    sol = solve_network(model, state)
    if genset is not None and sol.genset_mode == "ref":
        bus = model.bus_index[genset.bus]
        for _ in range(100):
            vt = abs(sol.voltages[bus])
            if abs(vt - 1.0) < 1e-13:
                break
            state.emf = state.emf / vt
            state.voltages = sol.voltages
            sol = solve_network(model, state)
        state.pm = state.pref = sol.source_p_kw[genset.id] / genset.rated_kw
    state.voltages = sol.voltages
    state.solution = sol
    _track_emf(model, state)
    return state


def _track_emf(model: GridModel, state: DynamicState) -> None:
    # while grid-parallel, keep the EMF consistent with the terminal so the
    # switch to voltage-source operation on islanding is continuous
    sol = state.solution
    genset = model.genset
    if genset is None or sol is None or sol.genset_mode != "pq":
        return
    vt = sol.voltages[model.bus_index[genset.bus]]
    s = complex(sol.source_p_kw[genset.id], sol.source_q_kvar[genset.id]) / model.base_kva
    i = np.conj(s / vt)
    x = genset.xdpp * model.base_kva / genset.rated_kw
    state.emf = complex(vt + 1j * x * i)


def refresh(model: GridModel, state: DynamicState) -> NetworkSolution:
    """Solve the network for ``state`` and store the solution on it."""
    sol = solve_network(model, state)
    state.solution = sol
    state.voltages = sol.voltages
    _track_emf(model, state)
    return sol


def genset_loading(model: GridModel, state: DynamicState) -> float:
    """Genset electrical output as a fraction of its rating."""
    g = model.genset
    if g is None or state.solution is None:
        return 0.0
    return state.solution.source_p_kw[g.id] / g.rated_kw


def _swing_rhs(g: GensetSpec, pe: float, pref: float, locked: bool):
    two_h = 2.0 * g.inertia_h

    def rhs(dw: float, pm: float) -> tuple[float, float]:
        # RK4 stages may step past a limit: saturate the output and stop the
        # governor winding further outward, so the limit binds inside the step
        pm_out = min(max(pm, g.pm_min), g.pm_max)
        ddw = 0.0 if locked else (pm_out - pe - g.damping * dw) / two_h
        dpm = -(pm - pref + dw / g.droop) / g.governor_tc if g.governor else 0.0
        if (pm >= g.pm_max and dpm > 0) or (pm <= g.pm_min and dpm < 0):
            dpm = 0.0
        return ddw, dpm

    return rhs


def step_dynamics(model: GridModel, state: DynamicState, dt: float) -> DynamicState:
    """Advance ``state`` by ``dt`` seconds.

    Swing equation ``2H dw/dt = Pm - Pe - D dw`` and governor
    ``Tg dPm/dt = -(Pm - Pref + dw/R)`` (machine base) are integrated by RK4
    with Pe frozen at the current network solution. While the genset runs in
    parallel with the grid its speed is locked (dw held at 0).
    """
    g = model.genset
    sol = state.solution
    if g is not None and sol is not None and state.online[g.id] and sol.genset_mode != "off":
        locked = sol.genset_mode == "pq"
        pe = sol.source_p_kw[g.id] / g.rated_kw
        rhs = _swing_rhs(g, pe, state.pref, locked)
        w0, p0 = (0.0 if locked else state.dw), state.pm
        k1 = rhs(w0, p0)
        k2 = rhs(w0 + 0.5 * dt * k1[0], p0 + 0.5 * dt * k1[1])
        k3 = rhs(w0 + 0.5 * dt * k2[0], p0 + 0.5 * dt * k2[1])
        k4 = rhs(w0 + dt * k3[0], p0 + dt * k3[1])
        dw = w0 + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        pm = p0 + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        pm = min(max(pm, g.pm_min), g.pm_max)
        if not (math.isfinite(dw) and math.isfinite(pm)):
            raise FloatingPointError(f"non-finite genset state at t={state.time}")
        state.dw, state.pm = dw, pm

    if len(model.inverters):
        taus = np.array([inv.filter_tc for inv in model.inverters])
        alpha = -np.expm1(-dt / taus)
        state.inv_p = state.inv_p + alpha * (state.inv_p_set - state.inv_p)
        state.inv_q = state.inv_q + alpha * (state.inv_q_set - state.inv_q)
    state.time = state.time + dt
    return state


def apply_event(
    model: GridModel,
    state: DynamicState,
    event: PhysicalEvent,
    log: list[LogEntry] | None = None,
    fault: FaultSpec | None = None,
) -> DynamicState:
    """Apply one discrete event to ``state`` and append it to ``log``.

    ``fault`` carries the FaultSpec for ``kind == "fault"``.

    Raises:
        UnknownTarget: the target is not part of the model (or, for ``clear``,
            not an active fault).
    """
    kind, target = event.kind, event.target
    detail: dict[str, Any] = {}
    if kind == "fault":
        if fault is None or fault.bus not in model.bus_index:
            raise UnknownTarget(f"fault {target!r} has no valid bus")
        state.faults[target] = fault
        detail["bus"] = fault.bus
    elif kind == "clear":
        if target not in state.faults:
            raise UnknownTarget(f"no active fault {target!r}")
        del state.faults[target]
    elif kind in ("breaker_open", "breaker_close"):
        if target not in state.breakers:
            raise UnknownTarget(f"unknown breaker {target!r}")
        state.breakers[target] = kind == "breaker_close"
    elif kind == "load_shed":
        if target not in model.load_index:
            raise UnknownTarget(f"unknown load {target!r}")
        state.shed.add(target)
        detail["p_kw"] = model.loads[model.load_index[target]].p_kw
    elif kind == "setpoint_change":
        src = model.source_index.get(target)
        idx = next((i for i, inv in enumerate(model.inverters) if inv.id == target), None)
        if src is None or idx is None:
            raise UnknownTarget(f"no inverter {target!r}")
        if event.channel == "p":
            state.inv_p_set[idx] = event.value
        elif event.channel == "q":
            state.inv_q_set[idx] = event.value
        else:
            raise UnknownTarget(f"setpoint channel must be 'p' or 'q', got {event.channel!r}")
        detail.update(channel=event.channel, value=event.value)
    elif kind == "source_trip":
        if target not in state.online:
            raise UnknownTarget(f"unknown source {target!r}")
        state.online[target] = False
    else:
        raise UnknownTarget(f"unknown event kind {kind!r}")
    if event.origin != "script":
        detail["origin"] = event.origin
    if log is not None:
        log.append(LogEntry(event.time, kind, target, detail))
    return state
