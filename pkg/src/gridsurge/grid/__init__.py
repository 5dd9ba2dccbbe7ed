"""Electrical layer: topology, network solution and genset/inverter dynamics."""

from gridsurge.grid.dynamics import (
    EVENT_KINDS,
    DynamicState,
    LogEntry,
    PhysicalEvent,
    apply_event,
    genset_loading,
    initial_state,
    refresh,
    step_dynamics,
)
from gridsurge.grid.model import (
    Branch,
    Bus,
    FaultSpec,
    GensetSpec,
    GridModel,
    GridSourceSpec,
    InverterSpec,
    LoadSpec,
    NetworkSpec,
    build_network,
)
from gridsurge.grid.network import NetworkSolution, solve_network

__all__ = [
    "EVENT_KINDS",
    "Branch",
    "Bus",
    "DynamicState",
    "FaultSpec",
    "GensetSpec",
    "GridModel",
    "GridSourceSpec",
    "InverterSpec",
    "LoadSpec",
    "LogEntry",
    "NetworkSolution",
    "NetworkSpec",
    "PhysicalEvent",
    "apply_event",
    "build_network",
    "genset_loading",
    "initial_state",
    "refresh",
    "solve_network",
    "step_dynamics",
]
