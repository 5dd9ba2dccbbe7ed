"""Shared fixtures: bundled scenarios, cached runs and small hand-built models."""

from __future__ import annotations

from functools import lru_cache
from pathlib import Path

import pytest

from gridsurge.engine import run_scenario
from gridsurge.grid import (
    Branch,
    Bus,
    GensetSpec,
    GridSourceSpec,
    InverterSpec,
    LoadSpec,
    NetworkSpec,
)
from gridsurge.scenario_file import parse_scenario_file

SCENARIO_DIR = Path(__file__).resolve().parents[1] / "src" / "gridsurge" / "scenarios"
SHIPPED = sorted(p.stem for p in SCENARIO_DIR.glob("*.scn"))

# lines reported by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def scenario_path(name: str) -> Path:
    return SCENARIO_DIR / f"{name}.scn"


@lru_cache(maxsize=None)
def load(name: str):
    return parse_scenario_file(scenario_path(name))


@lru_cache(maxsize=None)
def run(name: str):
    """Run a bundled scenario once per session (runs are deterministic)."""
    return run_scenario(load(name))


@pytest.fixture
def shipped():
    return SHIPPED


def genset_island(load_kw=1000.0, inverter_kw=None, **genset_kw) -> NetworkSpec:
    """One bus: genset, constant-power load and optionally a PV inverter."""
    sources = [GensetSpec("g", "B1", rated_kw=1000.0, **genset_kw)]
    if inverter_kw is not None:
        sources.append(InverterSpec("pv", "B1", rated_kva=500.0, p_kw=inverter_kw))
    return NetworkSpec(
        buses=(Bus("B1", 0.48),),
        sources=tuple(sources),
        loads=(LoadSpec("ld", "B1", load_kw, 0.0, "commercial"),),
        base_mva=1.0,
    )


def two_bus(p_kw=500.0, q_kvar=0.0, z=(0.01, 0.1), grid_x=0.01) -> NetworkSpec:
    return NetworkSpec(
        buses=(Bus("S", 13.8), Bus("R", 13.8)),
        branches=(Branch("line", "S", "R", *z),),
        sources=(GridSourceSpec("grid", "S", 1.0, 0.0, grid_x),),
        loads=(LoadSpec("ld", "R", p_kw, q_kvar, "commercial"),),
        base_mva=1.0,
    )


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
