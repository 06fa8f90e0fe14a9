"""Electrical network data model, JSON network files and hourly CSV profiles.

Network files carry units in their field names (``nominal_kv``, ``r_ohm``,
``imax_a`` ...).  LV detail is collapsed: loads and generator sets attach
directly to MV buses.  A loaded :class:`NetworkModel` is immutable.
"""
from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Mapping

from .errors import (
    DisconnectedNetworkError,
    MissingHourError,
    NetworkParseError,
    NetworkValidationError,
    ProfileError,
    UnknownElementError,
)

HV = "HV"
MV = "MV"

PROFILE_COLUMNS = ("timestamp", "element_id", "p_kw", "q_kvar")


@dataclass(frozen=True)
class Bus:
    id: str
    kind: str
    nominal_kv: float
    v_min_frac: float = 0.9
    v_max_frac: float = 1.1


@dataclass(frozen=True)
class Branch:
    id: str
    from_bus: str
    to_bus: str
    r_ohm: float
    x_ohm: float
    imax_a: float
    # id of the virtual breaker (series switch pair) installed on this branch
    breaker: str | None = None


@dataclass(frozen=True)
class Generator:
    id: str
    bus: str
    phase_controllable: bool = False
    phase_min: float = 0.0
    phase_max: float = 0.0
    fixed_phase: float = 0.0


@dataclass(frozen=True)
class Load:
    id: str
    bus: str


@dataclass(frozen=True)
class Tvr:
    """Series voltage regulator: output = input + n_tap * delta_kv."""

    branch: str
    delta_kv: float = 0.1
    taps: tuple[int, ...] = (-3, -2, -1, 0, 1, 2, 3)
    nominal_kv_in: float = 8.4


@dataclass(frozen=True)
class VirtualBreaker:
    id: str
    switches: tuple[str, str]


@dataclass(frozen=True, eq=False)
class NetworkModel:
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...] = ()
    loads: tuple[Load, ...] = ()
    tvr: Tvr | None = None
    virtual_breakers: tuple[VirtualBreaker, ...] = ()
    bus_index: dict = field(init=False, repr=False)
    branch_index: dict = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "bus_index", {b.id: i for i, b in enumerate(self.buses)})
        object.__setattr__(self, "branch_index", {b.id: i for i, b in enumerate(self.branches)})

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def n_branches(self) -> int:
        return len(self.branches)

    @property
    def controllable_generators(self) -> tuple[Generator, ...]:
        return tuple(g for g in self.generators if g.phase_controllable)

    @property
    def tap_set(self) -> tuple[int, ...]:
        return self.tvr.taps if self.tvr is not None else (0,)

    def bus(self, bus_id: str) -> Bus:
        return self.buses[self.bus_index[bus_id]]

    def branch(self, branch_id: str) -> Branch:
        return self.branches[self.branch_index[branch_id]]

    def breaker(self, breaker_id: str) -> VirtualBreaker:
        for vb in self.virtual_breakers:
            if vb.id == breaker_id:
                return vb
        raise KeyError(breaker_id)


# -- validation ---------------------------------------------------------------

def _unique(ids, what):
    seen = set()
    for i in ids:
        if i in seen:
            raise NetworkValidationError(f"duplicate {what} id {i!r}")
        seen.add(i)


def validate(model: NetworkModel) -> NetworkModel:
    """Check every model invariant, raising :class:`NetworkValidationError`."""
    _unique((b.id for b in model.buses), "bus")
    _unique((b.id for b in model.branches), "branch")
    _unique((g.id for g in model.generators), "generator")
    _unique((ld.id for ld in model.loads), "load")
    _unique((vb.id for vb in model.virtual_breakers), "virtual breaker")
    element_ids = [g.id for g in model.generators] + [ld.id for ld in model.loads]
    _unique(element_ids, "profiled element")

    for b in model.buses:
        if b.kind not in (HV, MV):
            raise NetworkValidationError(f"bus {b.id!r}: kind must be HV or MV, got {b.kind!r}")
        if not (b.nominal_kv > 0):
            raise NetworkValidationError(f"bus {b.id!r}: nominal_kv must be positive")
        if not (0 < b.v_min_frac < 1 < b.v_max_frac):
            raise NetworkValidationError(f"bus {b.id!r}: need 0 < vmin_frac < 1 < vmax_frac")
    if not any(b.kind == HV for b in model.buses):
        raise NetworkValidationError("network has no HV bus")

    vb_ids = {vb.id for vb in model.virtual_breakers}
    used_breakers: dict[str, str] = {}
    for br in model.branches:
        for end in (br.from_bus, br.to_bus):
            if end not in model.bus_index:
                raise NetworkValidationError(f"branch {br.id!r} references unknown bus {end!r}")
        if br.from_bus == br.to_bus:
            raise NetworkValidationError(f"branch {br.id!r} is a self loop")
        if not (br.r_ohm >= 0) or not math.isfinite(br.x_ohm):
            raise NetworkValidationError(f"branch {br.id!r}: invalid impedance")
        if not (br.imax_a > 0):
            raise NetworkValidationError(f"branch {br.id!r}: imax_a must be positive")
        kv_from = model.bus(br.from_bus).nominal_kv
        kv_to = model.bus(br.to_bus).nominal_kv
        if not math.isclose(kv_from, kv_to, rel_tol=1e-12):
            raise NetworkValidationError(
                f"branch {br.id!r} joins buses of different nominal voltage (no transformer model)")
        if br.breaker is not None:
            if br.breaker not in vb_ids:
                raise NetworkValidationError(f"branch {br.id!r} references unknown breaker {br.breaker!r}")
            if br.breaker in used_breakers:
                raise NetworkValidationError(
                    f"breaker {br.breaker!r} installed on both {used_breakers[br.breaker]!r} and {br.id!r}")
            used_breakers[br.breaker] = br.id
    for vb in model.virtual_breakers:
        if vb.id not in used_breakers:
            raise NetworkValidationError(f"virtual breaker {vb.id!r} is not installed on any branch")
        if len(vb.switches) != 2 or vb.switches[0] == vb.switches[1]:
            raise NetworkValidationError(f"virtual breaker {vb.id!r} needs two distinct switches")
    _unique((s for vb in model.virtual_breakers for s in vb.switches), "physical switch")

    for g in model.generators:
        if g.bus not in model.bus_index:
            raise NetworkValidationError(f"generator {g.id!r} references unknown bus {g.bus!r}")
        if g.phase_controllable and not (g.phase_min <= g.phase_max):
            raise NetworkValidationError(f"generator {g.id!r}: phase_min > phase_max")
    for ld in model.loads:
        if ld.bus not in model.bus_index:
            raise NetworkValidationError(f"load {ld.id!r} references unknown bus {ld.bus!r}")

    if model.tvr is not None:
        t = model.tvr
        if t.branch not in model.branch_index:
            raise NetworkValidationError(f"TVR references unknown branch {t.branch!r}")
        if not (t.delta_kv > 0):
            raise NetworkValidationError("TVR delta_kv must be positive")
        if 0 not in t.taps:
            raise NetworkValidationError("TVR tap set must contain 0")
        if len(set(t.taps)) != len(t.taps):
            raise NetworkValidationError("TVR tap set has duplicates")
        if model.branch(t.branch).breaker is not None:
            raise NetworkValidationError("TVR must sit on a branch without breaker")

    # connectivity with everything closed
    adj = defaultdict(set)
    for br in model.branches:
        adj[br.from_bus].add(br.to_bus)
        adj[br.to_bus].add(br.from_bus)
    start = model.buses[0].id
    seen = {start}
    stack = [start]
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    if len(seen) != len(model.buses):
        missing = sorted(set(model.bus_index) - seen)
        raise DisconnectedNetworkError(f"network is disconnected with all breakers closed: {missing}")
    return model


# -- JSON ---------------------------------------------------------------------

def _req(d: Mapping, key: str, where: str):
    try:
        return d[key]
    except (KeyError, TypeError):
        raise NetworkParseError(f"{where}: missing field {key!r}") from None


def model_from_dict(data: Mapping) -> NetworkModel:
    """Build and validate a model from the parsed ``network.json`` structure."""
    if not isinstance(data, Mapping):
        raise NetworkParseError("network file must hold a JSON object")
    try:
        buses = tuple(
            Bus(
                id=str(_req(b, "id", "bus")),
                kind=str(_req(b, "kind", "bus")),
                nominal_kv=float(_req(b, "nominal_kv", "bus")),
                v_min_frac=float(b.get("vmin_frac", 0.9)),
                v_max_frac=float(b.get("vmax_frac", 1.1)),
            )
            for b in data.get("buses", [])
        )
        branches = tuple(
            Branch(
                id=str(_req(b, "id", "branch")),
                from_bus=str(_req(b, "from", "branch")),
                to_bus=str(_req(b, "to", "branch")),
                r_ohm=float(_req(b, "r_ohm", "branch")),
                x_ohm=float(b.get("x_ohm", 0.0)),
                imax_a=float(_req(b, "imax_a", "branch")),
                breaker=b.get("breaker"),
            )
            for b in data.get("branches", [])
        )
        generators = tuple(
            Generator(
                id=str(_req(g, "id", "generator")),
                bus=str(_req(g, "bus", "generator")),
                phase_controllable=bool(g.get("phase_controllable", False)),
                phase_min=float(g.get("phase_min_rad", 0.0)),
                phase_max=float(g.get("phase_max_rad", 0.0)),
                fixed_phase=float(g.get("fixed_phase_rad", 0.0)),
            )
            for g in data.get("generators", [])
        )
        loads = tuple(
            Load(id=str(_req(ld, "id", "load")), bus=str(_req(ld, "bus", "load")))
            for ld in data.get("loads", [])
        )
        tvr = None
        if data.get("tvr"):
            t = data["tvr"]
            tvr = Tvr(
                branch=str(_req(t, "branch", "tvr")),
                delta_kv=float(t.get("delta_kv", 0.1)),
                taps=tuple(int(x) for x in t.get("taps", (-3, -2, -1, 0, 1, 2, 3))),
                nominal_kv_in=float(t.get("nominal_kv_in", 8.4)),
            )
        vbs = tuple(
            VirtualBreaker(id=str(_req(v, "id", "virtual_breaker")),
                           switches=tuple(str(s) for s in _req(v, "switches", "virtual_breaker")))
            for v in data.get("virtual_breakers", [])
        )
    except (TypeError, ValueError, AttributeError) as exc:
        raise NetworkParseError(f"malformed network description: {exc}") from exc
    return validate(NetworkModel(buses, branches, generators, loads, tvr, vbs))


def model_to_dict(model: NetworkModel) -> dict:
    out = {
        "buses": [
            {"id": b.id, "kind": b.kind, "nominal_kv": b.nominal_kv,
             "vmin_frac": b.v_min_frac, "vmax_frac": b.v_max_frac}
            for b in model.buses
        ],
        "branches": [
            {"id": b.id, "from": b.from_bus, "to": b.to_bus, "r_ohm": b.r_ohm,
             "x_ohm": b.x_ohm, "imax_a": b.imax_a, "breaker": b.breaker}
            for b in model.branches
        ],
        "generators": [
            {"id": g.id, "bus": g.bus, "phase_controllable": g.phase_controllable,
             "phase_min_rad": g.phase_min, "phase_max_rad": g.phase_max,
             "fixed_phase_rad": g.fixed_phase}
            for g in model.generators
        ],
        "loads": [{"id": ld.id, "bus": ld.bus} for ld in model.loads],
        "tvr": None,
        "virtual_breakers": [{"id": v.id, "switches": list(v.switches)} for v in model.virtual_breakers],
    }
    if model.tvr is not None:
        t = model.tvr
        out["tvr"] = {"branch": t.branch, "delta_kv": t.delta_kv, "taps": list(t.taps),
                      "nominal_kv_in": t.nominal_kv_in}
    return out


def load_network(path) -> NetworkModel:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise NetworkParseError(f"{path}: {exc}") from exc
    return model_from_dict(data)


def save_network(model: NetworkModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2) + "\n", encoding="utf-8")


# -- profiles -----------------------------------------------------------------

def _parse_time(value) -> datetime:
    if isinstance(value, datetime):
        return value
    try:
        return datetime.fromisoformat(str(value).strip())
    except ValueError as exc:
        raise ProfileError(f"bad timestamp {value!r}") from exc


def load_profiles(path, hour, model: NetworkModel | None = None) -> dict[str, tuple[float, float]]:
    """Read the ``(p_kw, q_kvar)`` pair of every element at ``hour``.

    When ``model`` is given, elements unknown to the model are rejected and
    every load and generator must have a row for the requested hour.
    """
    when = _parse_time(hour)
    out: dict[str, tuple[float, float]] = {}
    hours_seen = False
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or tuple(reader.fieldnames[:4]) != PROFILE_COLUMNS:
                raise NetworkParseError(f"{path}: header must be {','.join(PROFILE_COLUMNS)}")
            for row in reader:
                if _parse_time(row["timestamp"]) != when:
                    continue
                hours_seen = True
                out[row["element_id"]] = (float(row["p_kw"]), float(row["q_kvar"]))
    except ValueError as exc:
        raise NetworkParseError(f"{path}: {exc}") from exc
    if not hours_seen:
        raise MissingHourError(f"no profile rows for hour {when.isoformat()}")
    if model is not None:
        known = {g.id for g in model.generators} | {ld.id for ld in model.loads}
        unknown = sorted(set(out) - known)
        if unknown:
            raise UnknownElementError(f"profile rows for unknown elements: {unknown}")
        check_profiles(model, out)
    for ld in (model.loads if model is not None else ()):
        if out[ld.id][0] < 0:
            raise ProfileError(f"load {ld.id!r} has negative active power")
    return out


def check_profiles(model: NetworkModel, profiles: Mapping[str, tuple[float, float]]) -> None:
    missing = [e.id for e in (*model.loads, *model.generators) if e.id not in profiles]
    if missing:
        raise MissingHourError(f"no profile values for {missing}")


def write_profiles(path, rows) -> None:
    """Write ``(timestamp, element_id, p_kw, q_kvar)`` rows with the mandatory header."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PROFILE_COLUMNS)
        for ts, eid, p, q in rows:
            ts = ts.isoformat(timespec="minutes") if isinstance(ts, datetime) else ts
            w.writerow([ts, eid, repr(float(p)), repr(float(q))])


def total_load(model: NetworkModel, profiles: Mapping[str, tuple[float, float]]) -> float:
    """Total active power absorbed by the loads, kW."""
    return float(sum(profiles[ld.id][0] for ld in model.loads))
