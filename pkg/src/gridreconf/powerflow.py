"""Backward/forward sweep AC power flow for radial configurations.

Every HV bus is an ideal slack at nominal voltage.  Loads and generators are
PQ injections; a generator with phase ``phi`` injects ``Q = P tan(phi)``.
The TVR is modelled as a lossless in-phase regulator sitting at the upstream
end of its branch: ``|V_out| = |V_in| + n_tap * delta_kv``.  Arithmetic is in
per unit on a common power base with each bus's nominal kV as voltage base.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping

import numpy as np

from .candidate import CandidateSolution
from .errors import PowerFlowError
from .grid_model import NetworkModel
from .topology import ReducedGraph, _bits_of, apply_configuration, branch_states, feeder_trees

S_BASE_KVA = 1000.0


@dataclass
class PowerFlowResult:
    bus_ids: tuple[str, ...]
    branch_ids: tuple[str, ...]
    v_pu: np.ndarray            # |V_i| / V_i^nom
    v_kv: np.ndarray
    i_a: np.ndarray             # branch current magnitude, 0 on open branches
    i_ratio: np.ndarray         # |I_j| / I_j^max
    p_gen: float                # kW, slack supply plus all generators
    p_load: float               # kW
    p_loss: float               # kW, p_gen - p_load
    loss_ir2: float             # kW, sum of |I|^2 R over branches
    converged: bool
    iterations: int
    max_dv: float               # last voltage update, pu
    kcl_residual: float         # pu current
    kvl_residual: float         # pu voltage
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class _Plan:
    order: tuple[int, ...]          # non-slack buses, parents first
    parent: tuple[int, ...]         # per bus, -1 for slack
    branch: tuple[int, ...]         # per bus, branch to parent (-1 for slack)
    z: tuple[complex, ...]          # per bus, pu impedance of the parent branch
    children: tuple[tuple[int, ...], ...]
    slacks: tuple[int, ...]
    tvr_bus: int                    # bus downstream of the TVR, -1 if TVR absent


@lru_cache(maxsize=8192)
def _plan(model: NetworkModel, g: ReducedGraph, bits: str, s_base_kva: float) -> _Plan:
    closed = branch_states(model, apply_configuration(model, g, bits))
    trees = feeder_trees(model, closed)
    n = model.n_buses
    idx = model.bus_index
    parent = [-1] * n
    branch = [-1] * n
    z = [0j] * n
    children: list[list[int]] = [[] for _ in range(n)]
    order: list[int] = []
    slacks = []
    for hv, t in trees.items():
        slacks.append(idx[hv])
        for b in t["order"][1:]:
            pb, br_id = t["parent"][b]
            i = idx[b]
            parent[i] = idx[pb]
            branch[i] = model.branch_index[br_id]
            br = model.branches[branch[i]]
            kv = model.buses[i].nominal_kv
            z_base = kv * kv * 1000.0 / s_base_kva
            z[i] = complex(br.r_ohm, br.x_ohm) / z_base
            children[idx[pb]].append(i)
            order.append(i)
    tvr_bus = -1
    if model.tvr is not None:
        k = model.branch_index[model.tvr.branch]
        for i in range(n):
            if branch[i] == k:
                tvr_bus = i
    return _Plan(tuple(order), tuple(parent), tuple(branch), tuple(z),
                 tuple(tuple(c) for c in children), tuple(slacks), tvr_bus)


def bus_injections(model: NetworkModel, solution: CandidateSolution,
                   profiles: Mapping[str, tuple[float, float]]) -> tuple[np.ndarray, float, float]:
    """Net complex power drawn at each bus (kVA), total load P and total DG P (kW)."""
    s = np.zeros(model.n_buses, dtype=complex)
    p_load = 0.0
    for ld in model.loads:
        p, q = profiles[ld.id]
        s[model.bus_index[ld.bus]] += complex(p, q)
        p_load += p
    gens = model.controllable_generators
    if len(solution.phases) != len(gens):
        raise PowerFlowError(f"solution has {len(solution.phases)} phases, model has {len(gens)} controllable generators")
    phase = {gen.id: ph for gen, ph in zip(gens, solution.phases)}
    p_dg = 0.0
    for gen in model.generators:
        p = profiles[gen.id][0]
        phi = phase.get(gen.id, gen.fixed_phase)
        s[model.bus_index[gen.bus]] -= complex(p, p * math.tan(phi))
        p_dg += p
    return s, p_load, p_dg


def _tvr_ratio(v_in: complex, kv_nom: float, n_tap: int, delta_kv: float) -> float:
    mag = abs(v_in) * kv_nom
    return (mag + n_tap * delta_kv) / mag


def solve(model: NetworkModel, g: ReducedGraph, conf, solution: CandidateSolution,
          profiles: Mapping[str, tuple[float, float]], *, tol: float = 1e-8,
          max_iter: int = 100, s_base_kva: float = S_BASE_KVA) -> PowerFlowResult:
    """Steady-state power flow of ``model`` under configuration ``conf``.

    Raises :class:`~gridreconf.errors.NonRadialError` for non-radial
    configurations.  Non-convergence is reported through ``converged``.
    """
    bits = _bits_of(g, conf)
    if solution.n_tap not in model.tap_set:
        raise PowerFlowError(f"tap {solution.n_tap} not in tap set {model.tap_set}")
    plan = _plan(model, g, bits, float(s_base_kva))
    s_kva, p_load, p_dg = bus_injections(model, solution, profiles)
    s = [complex(x) for x in s_kva / s_base_kva]
    n = model.n_buses
    order, parent, z, children = plan.order, plan.parent, plan.z, plan.children
    tvr_bus = plan.tvr_bus if solution.n_tap != 0 else -1
    if tvr_bus >= 0:
        tvr = model.tvr
        tvr_kv = model.buses[parent[tvr_bus]].nominal_kv

    v = [1 + 0j] * n
    j = [0j] * n        # current through each bus's parent branch impedance
    up = [0j] * n       # same current seen at the parent bus
    rev = order[::-1]

    def backward():
        for i in rev:
            acc = (s[i] / v[i]).conjugate()
            for c in children[i]:
                acc += up[c]
            j[i] = acc
            if i == tvr_bus:
                up[i] = acc * _tvr_ratio(v[parent[i]], tvr_kv, solution.n_tap, tvr.delta_kv)
            else:
                up[i] = acc

    converged = False
    max_dv = math.inf
    it = 0
    try:
        for it in range(1, max_iter + 1):
            backward()
            max_dv = 0.0
            for i in order:
                vp = v[parent[i]]
                if i == tvr_bus:
                    vp = vp * _tvr_ratio(vp, tvr_kv, solution.n_tap, tvr.delta_kv)
                new = vp - z[i] * j[i]
                d = abs(new - v[i])
                if d > max_dv:
                    max_dv = d
                v[i] = new
            if not math.isfinite(max_dv):
                break
            if max_dv < tol:
                converged = True
                break
        # currents consistent with the final voltages
        backward()
    except (ZeroDivisionError, OverflowError):
        converged = False
        v = [complex(math.nan, math.nan)] * n
        j = [complex(math.nan, math.nan)] * n
        up = list(j)

    kcl = 0.0
    kvl = 0.0
    for i in order:
        acc = (s[i] / v[i]).conjugate() + sum(up[c] for c in children[i])
        kcl = max(kcl, abs(acc - j[i]))
        vp = v[parent[i]]
        if i == tvr_bus:
            vp = vp * _tvr_ratio(vp, tvr_kv, solution.n_tap, tvr.delta_kv)
        kvl = max(kvl, abs(vp - z[i] * j[i] - v[i]))

    p_slack = 0.0
    for k in plan.slacks:
        p_slack += (v[k] * sum(up[c] for c in children[k]).conjugate()).real + s[k].real
    p_gen = p_slack * s_base_kva + p_dg
    loss_ir2 = sum(abs(j[i]) ** 2 * z[i].real for i in order) * s_base_kva

    v_abs = np.abs(np.asarray(v))
    nominal = np.array([b.nominal_kv for b in model.buses])
    i_a = np.zeros(model.n_branches)
    for i in order:
        i_a[plan.branch[i]] = abs(j[i]) * s_base_kva / (math.sqrt(3) * model.buses[i].nominal_kv)
    imax = np.array([br.imax_a for br in model.branches])
    finite = bool(np.all(np.isfinite(v_abs)) and math.isfinite(p_gen))
    return PowerFlowResult(
        bus_ids=tuple(b.id for b in model.buses),
        branch_ids=tuple(b.id for b in model.branches),
        v_pu=v_abs,
        v_kv=v_abs * nominal,
        i_a=i_a,
        i_ratio=i_a / imax,
        p_gen=float(p_gen),
        p_load=float(p_load),
        p_loss=float(p_gen - p_load),
        loss_ir2=float(loss_ir2),
        converged=converged and finite,
        iterations=it,
        max_dv=float(max_dv),
        kcl_residual=float(kcl),
        kvl_residual=float(kvl),
        diagnostics={"configuration": bits, "n_tap": solution.n_tap},
    )


def losses_identity_check(result: PowerFlowResult) -> float:
    """``|P_loss - sum I^2 R|`` in kW; the two loss computations must agree."""
    if not result.converged:
        raise PowerFlowError("loss identity is only defined for converged results")
    return abs(result.p_loss - result.loss_ir2)


def write_trace(result: PowerFlowResult, bus_path, branch_path) -> None:
    with open(bus_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bus_id", "v_pu"])
        for b, v in zip(result.bus_ids, result.v_pu):
            w.writerow([b, f"{v:.10f}"])
    with open(branch_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["branch_id", "i_a"])
        for b, i in zip(result.branch_ids, result.i_a):
            w.writerow([b, f"{i:.6f}"])


@dataclass
class BatchResult:
    """Power flows of many parameter settings on one configuration (rows = samples)."""

    v_pu: np.ndarray            # (samples, buses)
    i_a: np.ndarray             # (samples, branches)
    i_ratio: np.ndarray
    p_gen: np.ndarray           # kW
    p_load: float
    p_loss: np.ndarray
    loss_ir2: np.ndarray
    converged: np.ndarray       # bool per sample
    iterations: int


def solve_batch(model: NetworkModel, g: ReducedGraph, conf, phases: np.ndarray, taps: np.ndarray,
                profiles: Mapping[str, tuple[float, float]], *, tol: float = 1e-8,
                max_iter: int = 100, s_base_kva: float = S_BASE_KVA) -> BatchResult:
    """Vectorised twin of :func:`solve` over rows of ``phases`` and ``taps``.

    Iterates until every sample has converged or ``max_iter`` is reached;
    samples that already converged keep being refined.
    """
    bits = _bits_of(g, conf)
    phases = np.atleast_2d(np.asarray(phases, dtype=float))
    taps = np.asarray(taps, dtype=float).reshape(-1)
    m = taps.shape[0]
    if phases.shape != (m, len(model.controllable_generators)):
        if not (phases.size == 0 and len(model.controllable_generators) == 0):
            raise PowerFlowError("phases must have one row per sample and one column per controllable generator")
        phases = np.zeros((m, 0))
    bad = ~np.isin(taps, model.tap_set)
    if bad.any():
        raise PowerFlowError(f"taps outside tap set {model.tap_set}")
    plan = _plan(model, g, bits, float(s_base_kva))
    n = model.n_buses

    s = np.zeros((n, m), dtype=complex)
    p_load = 0.0
    for ld in model.loads:
        p, q = profiles[ld.id]
        s[model.bus_index[ld.bus]] += complex(p, q)
        p_load += p
    col = {gen.id: k for k, gen in enumerate(model.controllable_generators)}
    p_dg = 0.0
    for gen in model.generators:
        p = profiles[gen.id][0]
        phi = phases[:, col[gen.id]] if gen.id in col else np.full(m, gen.fixed_phase)
        s[model.bus_index[gen.bus]] -= p + 1j * p * np.tan(phi)
        p_dg += p
    s /= s_base_kva

    order, parent, z, children = plan.order, plan.parent, plan.z, plan.children
    tvr_bus = plan.tvr_bus if np.any(taps != 0) else -1
    if tvr_bus >= 0:
        tvr_kv = model.buses[parent[tvr_bus]].nominal_kv
        boost = taps * model.tvr.delta_kv

    def ratio(vp):
        mag = np.abs(vp) * tvr_kv
        return (mag + boost) / mag

    v = np.ones((n, m), dtype=complex)
    j = np.zeros((n, m), dtype=complex)
    up = np.zeros((n, m), dtype=complex)
    rev = order[::-1]

    def backward():
        for i in rev:
            acc = np.conj(s[i] / v[i])
            for c in children[i]:
                acc = acc + up[c]
            j[i] = acc
            up[i] = acc * ratio(v[parent[i]]) if i == tvr_bus else acc

    done = np.zeros(m, dtype=bool)
    it = 0
    with np.errstate(all="ignore"):
        for it in range(1, max_iter + 1):
            backward()
            dv = np.zeros(m)
            for i in order:
                vp = v[parent[i]]
                if i == tvr_bus:
                    vp = vp * ratio(vp)
                new = vp - z[i] * j[i]
                dv = np.maximum(dv, np.abs(new - v[i]))
                v[i] = new
            done |= dv < tol
            if done.all():
                break
        backward()
        p_slack = np.zeros(m)
        for k in plan.slacks:
            tot = np.zeros(m, dtype=complex)
            for c in children[k]:
                tot = tot + up[c]
            p_slack += (v[k] * np.conj(tot)).real + s[k].real
        p_gen = p_slack * s_base_kva + p_dg
        loss = np.zeros(m)
        i_a = np.zeros((m, model.n_branches))
        for i in order:
            loss += np.abs(j[i]) ** 2 * z[i].real
            i_a[:, plan.branch[i]] = np.abs(j[i]) * s_base_kva / (math.sqrt(3) * model.buses[i].nominal_kv)
        v_abs = np.abs(v).T
    imax = np.array([br.imax_a for br in model.branches])
    finite = np.all(np.isfinite(v_abs), axis=1) & np.isfinite(p_gen)
    return BatchResult(
        v_pu=v_abs, i_a=i_a, i_ratio=i_a / imax, p_gen=p_gen, p_load=float(p_load),
        p_loss=p_gen - p_load, loss_ir2=loss * s_base_kva, converged=done & finite, iterations=it)
