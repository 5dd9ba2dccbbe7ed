"""Electrical topology of the microgrid and the checks that build it.

All impedances are per unit on the system base (``base_mva``); powers are kept
in kW / kvar at the API boundary and converted to per unit internally.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from gridsurge.errors import (
    DanglingReference,
    DisconnectedGraph,
    ModelError,
    NonPositiveImpedance,
)

LOAD_CLASSES = ("residential", "critical", "commercial")


@dataclass(frozen=True)
class Bus:
    id: str
    kv: float


@dataclass(frozen=True)
class Branch:
    """Series R+jX element; ``breaker`` names the breaker that can open it."""

    id: str
    from_bus: str
    to_bus: str
    r_pu: float
    x_pu: float
    breaker: str | None = None


@dataclass(frozen=True)
class GensetSpec:
    """Diesel genset: voltage source behind subtransient reactance.

    ``inertia_h``, ``damping``, ``droop`` and ``xdpp`` are on the machine base
    (``rated_kw``). The governor output is confined to ``[pm_min, pm_max]``.
    ``dispatch_kw`` is the governor reference while the genset runs in parallel
    with the main grid; when it starts islanded the reference is taken from
    the initial operating point instead.
    """

    id: str
    bus: str
    rated_kw: float
    inertia_h: float = 1.5
    damping: float = 1.0
    droop: float = 0.05
    governor_tc: float = 0.5
    xdpp: float = 0.15
    overload_factor: float = 1.0
    overload_duration_s: float = 10.0
    pm_max: float = 1.0
    pm_min: float = 0.0
    dispatch_kw: float | None = None
    q_kvar: float = 0.0
    governor: bool = True


@dataclass(frozen=True)
class InverterSpec:
    """Grid-following inverter (PV or BESS) with a current limit.

    ``current_limit`` is the multiple of rated current the converter may
    deliver. ``relays`` lists the voltage/frequency relays that ride with it.
    """

    id: str
    bus: str
    rated_kva: float
    p_kw: float
    q_kvar: float = 0.0
    current_limit: float = 1.2
    filter_tc: float = 0.02
    relays: tuple[str, ...] = ()
    mode: str = "grid-following"


@dataclass(frozen=True)
class GridSourceSpec:
    """Main grid as a stiff Thevenin source; it pins frequency while connected."""

    id: str
    bus: str
    voltage_pu: float = 1.0
    r_pu: float = 0.0
    x_pu: float = 0.01


@dataclass(frozen=True)
class LoadSpec:
    id: str
    bus: str
    p_kw: float
    q_kvar: float
    load_class: str = "residential"
    sheddable: bool = False


@dataclass(frozen=True)
class FaultSpec:
    """Three-phase shunt fault.

    ``clear_s = None`` means the fault persists until its bus is isolated from
    every source (it is then extinguished).
    """

    id: str
    bus: str
    r_pu: float = 1e-4
    x_pu: float = 0.0
    start_s: float = 0.0
    clear_s: float | None = None
    kind: str = "three-phase"


Source = GensetSpec | InverterSpec | GridSourceSpec


@dataclass(frozen=True)
class NetworkSpec:
    """Unvalidated topology as read from a scenario file."""

    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...] = ()
    sources: tuple[Source, ...] = ()
    loads: tuple[LoadSpec, ...] = ()
    base_mva: float = 1.0
    nominal_hz: float = 60.0


@dataclass(frozen=True, eq=False)
class GridModel:
    """Validated topology with the index maps used by the solver."""

    spec: NetworkSpec
    bus_index: dict[str, int] = field(repr=False)
    branch_index: dict[str, int] = field(repr=False)
    source_index: dict[str, Source] = field(repr=False)
    load_index: dict[str, int] = field(repr=False)
    genset: GensetSpec | None
    grid_sources: tuple[GridSourceSpec, ...]
    inverters: tuple[InverterSpec, ...]
    branch_from: np.ndarray = field(repr=False)
    branch_to: np.ndarray = field(repr=False)
    branch_y: np.ndarray = field(repr=False)

    @property
    def buses(self) -> tuple[Bus, ...]:
        return self.spec.buses

    @property
    def branches(self) -> tuple[Branch, ...]:
        return self.spec.branches

    @property
    def loads(self) -> tuple[LoadSpec, ...]:
        return self.spec.loads

    @property
    def sources(self) -> tuple[Source, ...]:
        return self.spec.sources

    @property
    def base_kva(self) -> float:
        return self.spec.base_mva * 1000.0

    @property
    def nominal_hz(self) -> float:
        return self.spec.nominal_hz

    @property
    def n_bus(self) -> int:
        return len(self.spec.buses)

    def breakers(self) -> tuple[str, ...]:
        """Breaker ids in first-appearance order."""
        seen: dict[str, None] = {}
        for br in self.spec.branches:
            if br.breaker is not None:
                seen.setdefault(br.breaker)
        return tuple(seen)

    def branches_of_breaker(self, breaker: str) -> list[int]:
        return [i for i, br in enumerate(self.spec.branches) if br.breaker == breaker]


def _check_unique(kind: str, ids) -> None:
    seen = set()
    for i in ids:
        if i in seen:
            raise ModelError(f"duplicate {kind} id {i!r}")
        seen.add(i)


def build_network(spec: NetworkSpec) -> GridModel:
    """Validate ``spec`` and index it for the network solver.

    Raises:
        DanglingReference: an element names a bus that does not exist.
        NonPositiveImpedance: a branch or source impedance is not positive.
        DisconnectedGraph: the buses do not form one graph with all breakers
            closed.
    """
    if spec.nominal_hz not in (50.0, 60.0):
        raise ModelError(f"nominal frequency must be 50 or 60 Hz, got {spec.nominal_hz}")
    if spec.base_mva <= 0:
        raise ModelError("base_mva must be positive")
    if not spec.buses:
        raise ModelError("network has no buses")

    _check_unique("bus", [b.id for b in spec.buses])
    _check_unique("branch", [b.id for b in spec.branches])
    _check_unique("source", [s.id for s in spec.sources])
    _check_unique("load", [ld.id for ld in spec.loads])
    bus_index = {b.id: i for i, b in enumerate(spec.buses)}

    def need_bus(owner: str, bus: str) -> int:
        if bus not in bus_index:
            raise DanglingReference(f"{owner} references unknown bus {bus!r}")
        return bus_index[bus]

    n_br = len(spec.branches)
    frm = np.empty(n_br, dtype=np.intp)
    to = np.empty(n_br, dtype=np.intp)
    y = np.empty(n_br, dtype=complex)
    for k, br in enumerate(spec.branches):
        frm[k] = need_bus(f"branch {br.id}", br.from_bus)
        to[k] = need_bus(f"branch {br.id}", br.to_bus)
        if frm[k] == to[k]:
            raise ModelError(f"branch {br.id} is a self-loop")
        if br.r_pu < 0 or br.x_pu < 0 or (br.r_pu == 0 and br.x_pu == 0):
            raise NonPositiveImpedance(f"branch {br.id} impedance must be positive")
        y[k] = 1.0 / complex(br.r_pu, br.x_pu)

    gensets, grids, inverters = [], [], []
    for src in spec.sources:
        need_bus(f"source {src.id}", src.bus)
        if isinstance(src, GensetSpec):
            if src.rated_kw <= 0 or src.inertia_h <= 0 or src.droop <= 0:
                raise ModelError(f"genset {src.id}: rating, inertia and droop must all be > 0")
            if src.xdpp <= 0:
                raise NonPositiveImpedance(f"genset {src.id}: xdpp must be > 0")
            if src.overload_factor < 1.0:
                raise ModelError(f"genset {src.id}: overload_factor must be >= 1")
            if src.governor_tc <= 0 or src.pm_max < src.pm_min:
                raise ModelError(f"genset {src.id}: bad governor settings")
            gensets.append(src)
        elif isinstance(src, InverterSpec):
            if src.rated_kva <= 0 or src.current_limit < 1.0 or src.filter_tc <= 0:
                raise ModelError(f"inverter {src.id}: rated_kva, filter_tc > 0 and current_limit >= 1 required")
            if np.hypot(src.p_kw, src.q_kvar) > src.rated_kva * (1 + 1e-12):
                raise ModelError(f"inverter {src.id}: setpoint exceeds rated kVA")
            inverters.append(src)
        elif isinstance(src, GridSourceSpec):
            if src.r_pu < 0 or src.x_pu < 0 or (src.r_pu == 0 and src.x_pu == 0):
                raise NonPositiveImpedance(f"grid source {src.id} impedance must be positive")
            grids.append(src)
        else:  # pragma: no cover - type guard
            raise ModelError(f"unsupported source type {type(src).__name__}")
    if len(gensets) > 1:
        raise ModelError("at most one genset is supported (single rotor-speed state)")

    for ld in spec.loads:
        need_bus(f"load {ld.id}", ld.bus)
        if ld.load_class not in LOAD_CLASSES:
            raise ModelError(f"load {ld.id}: unknown class {ld.load_class!r}")
        if ld.load_class == "critical" and ld.sheddable:
            raise ModelError(f"load {ld.id}: critical loads are never sheddable")

    # connectivity with every breaker closed
    adj: list[list[int]] = [[] for _ in spec.buses]
    for a, b in zip(frm, to):
        adj[a].append(b)
        adj[b].append(a)
    seen = {0}
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    if len(seen) != len(spec.buses):
        missing = [spec.buses[i].id for i in range(len(spec.buses)) if i not in seen]
        raise DisconnectedGraph(f"buses not connected to {spec.buses[0].id}: {missing}")

    return GridModel(
        spec=spec,
        bus_index=bus_index,
        branch_index={br.id: k for k, br in enumerate(spec.branches)},
        source_index={s.id: s for s in spec.sources},
        load_index={ld.id: k for k, ld in enumerate(spec.loads)},
        genset=gensets[0] if gensets else None,
        grid_sources=tuple(grids),
        inverters=tuple(inverters),
        branch_from=frm,
        branch_to=to,
        branch_y=y,
    )
