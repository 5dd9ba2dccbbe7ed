"""Quasi-static phasor network solution.

Voltage-reference sources (the main grid, or an islanded genset) enter the
nodal admittance matrix as Norton equivalents. Loads and inverters are
nonlinear current injections resolved by fixed-point iteration on the bus
impedance matrix of the energized part of the network, warm-started from the
previous step's voltages.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from gridsurge.errors import NoConvergence
from gridsurge.grid.model import GridModel

MAX_ITER = 50
VOLTAGE_TOL = 1e-12
# constant-power loads become constant-impedance below this voltage
CONST_Z_BELOW_PU = 0.3


@dataclass(frozen=True)
class NetworkSolution:
    """Result of one network solve. Powers in kW/kvar, voltages in pu."""

    voltages: np.ndarray          # complex, per bus
    branch_currents: np.ndarray   # complex pu, from -> to; 0 when open
    source_p_kw: dict[str, float]
    source_q_kvar: dict[str, float]
    source_current_pu: dict[str, float]
    load_p_kw: np.ndarray
    load_q_kvar: np.ndarray
    dead: np.ndarray              # bool per bus: no voltage reference reachable
    genset_mode: str              # "ref", "pq" or "off"
    residual_pu: float
    iterations: int
    inputs: tuple | None = field(default=None, repr=False, compare=False)

    @property
    def dead_island(self) -> bool:
        return bool(self.dead.any())


@dataclass(frozen=True, eq=False)
class _Topology:
    energized: np.ndarray   # indices of energized buses
    dead: np.ndarray        # bool mask
    z: np.ndarray           # inverse of Y restricted to energized buses
    shunt: np.ndarray       # fault shunt admittance per energized bus
    genset_mode: str
    # bus position (within energized) per element, -1 when dead
    load_pos: np.ndarray
    inv_pos: np.ndarray
    grid_pos: np.ndarray
    grid_y: np.ndarray
    genset_pos: int
    genset_y: complex
    load_inc: np.ndarray    # energized x loads incidence
    inv_inc: np.ndarray
    closed: np.ndarray      # bool per branch


def topology_key(model: GridModel, state) -> tuple:
    closed = tuple(state.breakers.get(br.breaker, True) if br.breaker else True for br in model.branches)
    faults = tuple(sorted((f.bus, f.r_pu, f.x_pu) for f in state.faults.values()))
    online = tuple(state.online[s.id] for s in model.sources)
    return closed, faults, online


def _components(n: int, frm, to, closed) -> np.ndarray:
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b, c in zip(frm, to, closed):
        if c:
            ra, rb = find(int(a)), find(int(b))
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    return np.array([find(i) for i in range(n)])


@lru_cache(maxsize=512)
def _prepare(model: GridModel, key: tuple) -> _Topology:
    closed_t, faults, online_t = key
    closed = np.array(closed_t, dtype=bool)
    online = dict(zip((s.id for s in model.sources), online_t))
    n = model.n_bus
    comp = _components(n, model.branch_from, model.branch_to, closed)

    grid_comps = {comp[model.bus_index[g.bus]] for g in model.grid_sources if online[g.id]}
    genset = model.genset
    genset_mode = "off"
    ref_comps = set(grid_comps)
    if genset is not None and online[genset.id]:
        gc = comp[model.bus_index[genset.bus]]
        if gc in grid_comps:
            genset_mode = "pq"
        else:
            genset_mode = "ref"
            ref_comps.add(gc)
    dead = np.array([comp[i] not in ref_comps for i in range(n)])
    energized = np.flatnonzero(~dead)
    pos = np.full(n, -1, dtype=np.intp)
    pos[energized] = np.arange(len(energized))

    y_full = np.zeros((n, n), dtype=complex)
    for k in np.flatnonzero(closed):
        a, b, yk = model.branch_from[k], model.branch_to[k], model.branch_y[k]
        y_full[a, a] += yk
        y_full[b, b] += yk
        y_full[a, b] -= yk
        y_full[b, a] -= yk
    shunt_full = np.zeros(n, dtype=complex)
    for bus, r, x in faults:
        shunt_full[model.bus_index[bus]] += 1.0 / complex(r, x)
    y_full[np.diag_indices(n)] += shunt_full
    y_net = y_full[np.ix_(energized, energized)].copy()

    y_src = y_net.copy()
    grid_pos, grid_y = [], []
    for g in model.grid_sources:
        p = pos[model.bus_index[g.bus]] if online[g.id] else -1
        yg = 1.0 / complex(g.r_pu, g.x_pu)
        grid_pos.append(p)
        grid_y.append(yg)
        if p >= 0:
            y_src[p, p] += yg
    genset_pos, genset_y = -1, 0j
    if genset_mode != "off":
        genset_pos = int(pos[model.bus_index[genset.bus]])
        genset_y = 1.0 / complex(0.0, genset.xdpp * model.base_kva / genset.rated_kw)
        if genset_mode == "ref":
            y_src[genset_pos, genset_pos] += genset_y

    z = np.linalg.inv(y_src) if len(energized) else np.zeros((0, 0), dtype=complex)

    load_pos = np.array([pos[model.bus_index[ld.bus]] for ld in model.loads], dtype=np.intp)
    inv_pos = np.array(
        [pos[model.bus_index[s.bus]] if online[s.id] else -1 for s in model.inverters], dtype=np.intp
    )
    m = len(energized)
    load_inc = np.zeros((m, len(load_pos)))
    for j, p in enumerate(load_pos):
        if p >= 0:
            load_inc[p, j] = 1.0
    inv_inc = np.zeros((m, len(inv_pos)))
    for j, p in enumerate(inv_pos):
        if p >= 0:
            inv_inc[p, j] = 1.0
    return _Topology(
        energized=energized,
        dead=dead,
        z=z,
        shunt=shunt_full[energized],
        genset_mode=genset_mode,
        load_pos=load_pos,
        inv_pos=inv_pos,
        grid_pos=np.array(grid_pos, dtype=np.intp),
        grid_y=np.array(grid_y, dtype=complex),
        genset_pos=genset_pos,
        genset_y=genset_y,
        load_inc=load_inc,
        inv_inc=inv_inc,
        closed=closed,
    )


def _load_currents(v, s):
    mag = np.abs(v)
    safe = np.where(mag > 0, v, 1.0)
    const_p = np.conj(s / safe)
    const_z = np.conj(s) / CONST_Z_BELOW_PU**2 * v
    return np.where(mag >= CONST_Z_BELOW_PU, const_p, const_z)


def _inverter_currents(v, s, i_max):
    mag = np.abs(v)
    safe = np.where(mag > 0, v, 1.0)
    i = np.conj(s / safe)
    # exactly 1 below the limit, i_max/|i| above it
    return i * (i_max / np.maximum(np.abs(i), i_max))


def solve_network(model: GridModel, state) -> NetworkSolution:
    """Solve bus voltages and branch currents for the present state.

    Islands without a voltage reference are reported through ``dead`` with
    zero voltage. Raises :class:`NoConvergence` when the fixed point does not
    settle within ``MAX_ITER`` iterations.
    """
    tkey = topology_key(model, state)
    topo = _prepare(model, tkey)
    base = model.base_kva
    n = model.n_bus
    m = len(topo.energized)
    genset = model.genset

    # the solution depends only on these inputs; reuse it while they hold
    key = (
        tkey,
        frozenset(state.shed),
        state.inv_p.tobytes(),
        state.inv_q.tobytes(),
        state.emf if topo.genset_mode == "ref" else None,
        state.pm if topo.genset_mode == "pq" else None,
    )
    prev_sol = getattr(state, "solution", None)
    if prev_sol is not None and prev_sol.inputs == key:
        return prev_sol

    load_s = np.array(
        [0j if ld.id in state.shed else complex(ld.p_kw, ld.q_kvar) / base for ld in model.loads],
        dtype=complex,
    )
    load_s = np.where(topo.load_pos >= 0, load_s, 0j)
    inv_s = (state.inv_p + 1j * state.inv_q) / base
    inv_imax = np.array([s.current_limit * s.rated_kva / base for s in model.inverters])
    inv_s = np.where(topo.inv_pos >= 0, inv_s, 0j)

    i_fixed = np.zeros(m, dtype=complex)
    for p, yg, g in zip(topo.grid_pos, topo.grid_y, model.grid_sources):
        if p >= 0:
            i_fixed[p] += g.voltage_pu * yg
    genset_s = 0j
    if topo.genset_mode == "ref":
        i_fixed[topo.genset_pos] += state.emf * topo.genset_y
    elif topo.genset_mode == "pq":
        genset_s = complex(state.pm * genset.rated_kw, genset.q_kvar) / base

    if m:
        prev = state.voltages[topo.energized]
        v = np.where(np.abs(prev) > 1e-6, prev, 1.0 + 0j)
    else:
        v = np.zeros(0, dtype=complex)

    it = 0
    while m:
        it += 1
        i_inj = i_fixed - topo.load_inc @ _load_currents(v[topo.load_pos.clip(0)], load_s) \
            + topo.inv_inc @ _inverter_currents(v[topo.inv_pos.clip(0)], inv_s, inv_imax)
        if topo.genset_mode == "pq":
            vg = v[topo.genset_pos]
            i_inj[topo.genset_pos] += np.conj(genset_s / vg) if vg != 0 else 0j
        v_new = topo.z @ i_inj
        step = np.max(np.abs(v_new - v))
        v = v_new
        if not np.isfinite(step):
            raise NoConvergence(f"non-finite voltages at t={state.time:.6f}s")
        if step < VOLTAGE_TOL:
            break
        if it >= MAX_ITER:
            raise NoConvergence(f"network solve did not converge in {MAX_ITER} iterations at t={state.time:.6f}s")

    voltages = np.zeros(n, dtype=complex)
    voltages[topo.energized] = v

    # element currents at the final voltages
    i_load = np.zeros(len(model.loads), dtype=complex)
    live = topo.load_pos >= 0
    if live.any():
        i_load[live] = _load_currents(v[topo.load_pos[live]], load_s[live])
    i_inv = np.zeros(len(model.inverters), dtype=complex)
    live_inv = topo.inv_pos >= 0
    if live_inv.any():
        i_inv[live_inv] = _inverter_currents(v[topo.inv_pos[live_inv]], inv_s[live_inv], inv_imax[live_inv])
    v_load = voltages[[model.bus_index[ld.bus] for ld in model.loads]] if model.loads else np.zeros(0)
    s_load = v_load * np.conj(i_load)

    src_p, src_q, src_i = {}, {}, {}
    s_sources = 0j

    def put(sid, s, i):
        nonlocal s_sources
        s_sources += s
        src_p[sid] = float(s.real * base)
        src_q[sid] = float(s.imag * base)
        src_i[sid] = float(abs(i))

    for p, yg, g in zip(topo.grid_pos, topo.grid_y, model.grid_sources):
        if p >= 0:
            i = (g.voltage_pu - v[p]) * yg
            put(g.id, v[p] * np.conj(i), i)
        else:
            put(g.id, 0j, 0j)
    if genset is not None:
        if topo.genset_mode == "ref":
            vg = v[topo.genset_pos]
            i = (state.emf - vg) * topo.genset_y
            put(genset.id, vg * np.conj(i), i)
        elif topo.genset_mode == "pq":
            vg = v[topo.genset_pos]
            i = np.conj(genset_s / vg)
            put(genset.id, vg * np.conj(i), i)
        else:
            put(genset.id, 0j, 0j)
    for j, inv in enumerate(model.inverters):
        vb = voltages[model.bus_index[inv.bus]]
        put(inv.id, vb * np.conj(i_inv[j]), i_inv[j])

    vf = voltages[model.branch_from]
    vt = voltages[model.branch_to]
    i_br = np.where(topo.closed, (vf - vt) * model.branch_y, 0j)
    losses = np.sum((vf - vt) * np.conj(i_br))
    if m:
        losses += np.sum(np.abs(v) ** 2 * np.conj(topo.shunt))
    residual = abs(s_sources - np.sum(s_load) - losses)

    sol = NetworkSolution(
        voltages=voltages,
        branch_currents=i_br,
        source_p_kw=src_p,
        source_q_kvar=src_q,
        source_current_pu=src_i,
        load_p_kw=s_load.real * base,
        load_q_kvar=s_load.imag * base,
        dead=topo.dead,
        genset_mode=topo.genset_mode,
        residual_pu=float(residual),
        iterations=it,
        inputs=key,
    )
    return sol
