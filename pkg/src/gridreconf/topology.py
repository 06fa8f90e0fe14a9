"""Reduced graph, radial-configuration enumeration and configuration ordering.

Configurations are bitstrings over the reduced-graph edges (one character per
virtual breaker, ``'1'`` = closed).  Strings are used directly so that
lexicographic order and hashing come for free.
"""
from __future__ import annotations

import itertools
import json
from collections import defaultdict, deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import EnumerationCapError, NonRadialError, TopologyError
from .grid_model import HV, MV, NetworkModel

BRUTE_FORCE_CAP = 24


@dataclass(frozen=True)
class ReducedNode:
    id: str
    kind: str
    members: tuple[str, ...]


@dataclass(frozen=True)
class ReducedEdge:
    id: str                     # virtual breaker id
    u: int
    v: int
    switches: tuple[str, str]
    branch: str


@dataclass(frozen=True, eq=False)
class ReducedGraph:
    nodes: tuple[ReducedNode, ...]
    edges: tuple[ReducedEdge, ...]
    # switch-free links touching an HV node; always closed
    fixed_links: tuple[tuple[int, int], ...]
    bus_node: Mapping[str, int]

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def hv_nodes(self) -> list[int]:
        return [i for i, n in enumerate(self.nodes) if n.kind == HV]

    @property
    def mv_nodes(self) -> list[int]:
        return [i for i, n in enumerate(self.nodes) if n.kind == MV]


@dataclass(frozen=True)
class Configuration:
    index: int
    bits: str


@dataclass(frozen=True)
class ConfigurationList:
    configs: tuple[Configuration, ...]
    ordering: str = "lexicographic"

    def __len__(self):
        return len(self.configs)

    def __iter__(self):
        return iter(self.configs)

    def __getitem__(self, index: int) -> Configuration:
        """1-based lookup by configuration index."""
        if not 1 <= index <= len(self.configs):
            raise IndexError(f"configuration index {index} outside 1..{len(self.configs)}")
        conf = self.configs[index - 1]
        assert conf.index == index
        return conf

    @property
    def indices(self) -> list[int]:
        return [c.index for c in self.configs]

    @property
    def bits(self) -> list[str]:
        return [c.bits for c in self.configs]


class _DSU:
    __slots__ = ("parent", "hv")

    def __init__(self, n, hv_flags):
        self.parent = list(range(n))
        self.hv = list(hv_flags)

    def copy(self):
        d = _DSU.__new__(_DSU)
        d.parent = self.parent[:]
        d.hv = self.hv[:]
        return d

    def find(self, x):
        p = self.parent
        while p[x] != x:
            p[x] = p[p[x]]
            x = p[x]
        return x

    def union_radial(self, a, b) -> bool:
        """Join two components; False if that closes a loop or links two HV sources."""
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.hv[ra] and self.hv[rb]:
            return False
        self.parent[rb] = ra
        self.hv[ra] = self.hv[ra] + self.hv[rb]
        return True


def reduce_graph(model: NetworkModel) -> ReducedGraph:
    """Collapse switch-free groups of MV buses into single nodes.

    HV buses stay individual nodes.  Every virtual breaker becomes one edge
    between the nodes holding its branch endpoints.
    """
    idx = model.bus_index
    parent = list(range(model.n_buses))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for br in model.branches:
        if br.breaker is None and model.bus(br.from_bus).kind == MV and model.bus(br.to_bus).kind == MV:
            a, b = find(idx[br.from_bus]), find(idx[br.to_bus])
            if a != b:
                parent[max(a, b)] = min(a, b)

    nodes: list[ReducedNode] = []
    bus_node: dict[str, int] = {}
    for b in model.buses:
        if b.kind == HV:
            bus_node[b.id] = len(nodes)
            nodes.append(ReducedNode(b.id, HV, (b.id,)))
    groups = defaultdict(list)
    for b in model.buses:
        if b.kind == MV:
            groups[find(idx[b.id])].append(b.id)
    for root in sorted(groups):
        members = tuple(groups[root])
        for m in members:
            bus_node[m] = len(nodes)
        nodes.append(ReducedNode("+".join(members), MV, members))

    vb_by_id = {vb.id: vb for vb in model.virtual_breakers}
    branch_of = {br.breaker: br for br in model.branches if br.breaker is not None}
    edges = []
    for vb in model.virtual_breakers:
        br = branch_of[vb.id]
        edges.append(ReducedEdge(vb.id, bus_node[br.from_bus], bus_node[br.to_bus], vb_by_id[vb.id].switches, br.id))

    fixed = []
    for br in model.branches:
        if br.breaker is None:
            u, v = bus_node[br.from_bus], bus_node[br.to_bus]
            if u != v:
                fixed.append((u, v))
    return ReducedGraph(tuple(nodes), tuple(edges), tuple(fixed), bus_node)


def _check_len(g: ReducedGraph, bits: str):
    if len(bits) != g.n_edges:
        raise TopologyError(f"bitstring length {len(bits)} != number of reduced edges {g.n_edges}")


def is_radial(g: ReducedGraph, bits: str) -> bool:
    """True iff every MV node is fed by exactly one HV node through exactly one path."""
    _check_len(g, bits)
    dsu = _DSU(len(g.nodes), [1 if n.kind == HV else 0 for n in g.nodes])
    for u, v in g.fixed_links:
        if not dsu.union_radial(u, v):
            return False
    for e, bit in zip(g.edges, bits):
        if bit == "1" and not dsu.union_radial(e.u, e.v):
            return False
    return all(dsu.hv[dsu.find(m)] == 1 for m in g.mv_nodes)


def enumerate_bruteforce(g: ReducedGraph, cap: int = BRUTE_FORCE_CAP) -> list[str]:
    """Filter all ``2**|E|`` bitstrings through :func:`is_radial`."""
    if g.n_edges > cap:
        raise EnumerationCapError(
            f"{g.n_edges} reduced edges exceed the brute-force cap {cap}; raise the cap to proceed")
    return [
        "".join(bits)
        for bits in itertools.product("01", repeat=g.n_edges)
        if is_radial(g, "".join(bits))
    ]


def _forest_enumeration(g: ReducedGraph) -> list[str]:
    n_edges = g.n_edges
    base = _DSU(len(g.nodes), [1 if n.kind == HV else 0 for n in g.nodes])
    for u, v in g.fixed_links:
        if not base.union_radial(u, v):
            return []
    last_touch = [-1] * len(g.nodes)
    for k, e in enumerate(g.edges):
        last_touch[e.u] = k
        last_touch[e.v] = k
    mv = g.mv_nodes
    out: list[str] = []
    bits = ["0"] * n_edges

    def stranded(dsu: _DSU, k: int) -> bool:
        # unfed component that no later edge can reach
        reach = {}
        for m in mv:
            r = dsu.find(m)
            if not dsu.hv[r]:
                reach[r] = max(reach.get(r, -1), last_touch[m])
        return any(t <= k for t in reach.values())

    def grow(k: int, dsu: _DSU):
        if k == n_edges:
            if all(dsu.hv[dsu.find(m)] == 1 for m in mv):
                out.append("".join(bits))
            return
        e = g.edges[k]
        # open first keeps the output lexicographically sorted
        bits[k] = "0"
        if not stranded(dsu, k):
            grow(k + 1, dsu)
        trial = dsu.copy()
        if trial.union_radial(e.u, e.v):
            bits[k] = "1"
            if not stranded(trial, k):
                grow(k + 1, trial)
        bits[k] = "0"

    if not stranded(base, -1):
        grow(0, base)
    return out


def enumerate_admissible(g: ReducedGraph, mode: str = "forest", cap: int = BRUTE_FORCE_CAP) -> ConfigurationList:
    """All radial bitstrings of ``g`` in lexicographic order, indexed from 1.

    ``mode="forest"`` grows HV-rooted forests edge by edge, rejecting any edge
    that closes a loop or joins two HV trees.  ``mode="bruteforce"`` filters
    every bitstring and is limited to ``cap`` edges.
    """
    if mode == "forest":
        found = _forest_enumeration(g)
    elif mode == "bruteforce":
        found = enumerate_bruteforce(g, cap)
    else:
        raise ValueError(f"unknown enumeration mode {mode!r}")
    found = sorted(found)
    return ConfigurationList(tuple(Configuration(i + 1, b) for i, b in enumerate(found)), "lexicographic")


def hamming(a: str | Sequence, b: str | Sequence) -> int:
    if len(a) != len(b):
        raise ValueError("hamming distance needs equal-length inputs")
    return sum(x != y for x, y in zip(a, b))


def bits_matrix(bits: Iterable[str]) -> np.ndarray:
    rows = [np.frombuffer(b.encode("ascii"), dtype=np.uint8) - ord("0") for b in bits]
    if not rows:
        return np.zeros((0, 0), dtype=np.uint8)
    return np.vstack(rows).astype(np.uint8)


def order_by_hamming(configs: ConfigurationList) -> ConfigurationList:
    """Greedy nearest-neighbour chain under Hamming distance.

    Starts from the lexicographically smallest bitstring and repeatedly
    appends the closest unvisited one (ties: lexicographically smallest).
    """
    if len(configs) == 0:
        raise TopologyError("cannot order an empty configuration list")
    ordered_bits = sorted(c.bits for c in configs)
    if len(set(ordered_bits)) != len(ordered_bits):
        raise TopologyError("duplicate configurations")
    n = len(ordered_bits)
    if n == 1 or len(ordered_bits[0]) == 0:
        chain = list(range(n))
    else:
        mat = bits_matrix(ordered_bits)
        visited = np.zeros(n, dtype=bool)
        cur = 0
        visited[0] = True
        chain = [0]
        big = mat.shape[1] + 1
        for _ in range(n - 1):
            d = np.count_nonzero(mat != mat[cur], axis=1)
            d[visited] = big
            cur = int(np.argmin(d))     # first minimum == lexicographic tie-break
            visited[cur] = True
            chain.append(cur)
    return ConfigurationList(
        tuple(Configuration(i + 1, ordered_bits[j]) for i, j in enumerate(chain)), "hamming-greedy")


def admissible_configurations(g: ReducedGraph) -> ConfigurationList:
    """Enumerate and Hamming-order in one step."""
    return order_by_hamming(enumerate_admissible(g))


def save_configurations(configs: ConfigurationList, path) -> None:
    rows = [{"index": c.index, "bits": c.bits} for c in configs]
    Path(path).write_text(json.dumps(rows, indent=1) + "\n", encoding="utf-8")


def load_configurations(path) -> ConfigurationList:
    rows = json.loads(Path(path).read_text(encoding="utf-8"))
    configs = tuple(Configuration(int(r["index"]), str(r["bits"])) for r in rows)
    if [c.index for c in configs] != list(range(1, len(configs) + 1)):
        raise TopologyError(f"{path}: indices must run 1..n in order")
    return ConfigurationList(configs, "loaded")


# -- physical mapping ---------------------------------------------------------

def _bits_of(g: ReducedGraph, conf) -> str:
    if isinstance(conf, Configuration):
        conf = conf.bits
    if isinstance(conf, Mapping):
        ids = [e.id for e in g.edges]
        unknown = sorted(set(conf) - set(ids))
        if unknown:
            raise TopologyError(f"unknown reduced edge ids {unknown}")
        conf = "".join("1" if conf.get(i, True) else "0" for i in ids)
    _check_len(g, conf)
    return conf


def apply_configuration(model: NetworkModel, g: ReducedGraph, conf) -> dict[str, bool]:
    """Physical switch states (``True`` = closed) for a configuration.

    ``conf`` may be a :class:`Configuration`, a bitstring, or a mapping of
    edge id to closed-state (missing edges default to closed).
    """
    bits = _bits_of(g, conf)
    states = {}
    for e, bit in zip(g.edges, bits):
        for s in e.switches:
            states[s] = bit == "1"
    return states


def branch_states(model: NetworkModel, switch_states: Mapping[str, bool]) -> dict[str, bool]:
    """Closed-state of every branch; a breaker branch conducts only if both switches are closed."""
    out = {}
    for br in model.branches:
        if br.breaker is None:
            out[br.id] = True
        else:
            vb = model.breaker(br.breaker)
            out[br.id] = all(switch_states[s] for s in vb.switches)
    return out


def physical_is_radial(model: NetworkModel, closed: Mapping[str, bool]) -> bool:
    """Radiality of the full bus/branch graph given per-branch closed states."""
    dsu = _DSU(model.n_buses, [1 if b.kind == HV else 0 for b in model.buses])
    idx = model.bus_index
    for br in model.branches:
        if closed[br.id] and not dsu.union_radial(idx[br.from_bus], idx[br.to_bus]):
            return False
    return all(dsu.hv[dsu.find(i)] == 1 for i in range(model.n_buses))


def feeder_trees(model: NetworkModel, closed: Mapping[str, bool]) -> dict[str, dict]:
    """Walk every HV-rooted tree of a radial physical state.

    Returns, per HV bus, ``parent`` (bus -> (parent bus, branch id)), the BFS
    ``order`` and per-bus ``depth`` counted in switched branches.
    """
    adj = defaultdict(list)
    for br in model.branches:
        if closed[br.id]:
            adj[br.from_bus].append((br.to_bus, br))
            adj[br.to_bus].append((br.from_bus, br))
    owner = {}
    trees = {}
    for hv in (b.id for b in model.buses if b.kind == HV):
        parent = {hv: (None, None)}
        depth = {hv: 0}
        order = [hv]
        owner[hv] = hv
        q = deque([hv])
        while q:
            u = q.popleft()
            for v, br in adj[u]:
                if v == parent[u][0] and br.id == parent[u][1]:
                    continue
                if v in parent or v in owner:
                    raise NonRadialError(f"loop or multiple feeding detected at bus {v!r}")
                parent[v] = (u, br.id)
                depth[v] = depth[u] + (1 if br.breaker is not None else 0)
                owner[v] = hv
                order.append(v)
                q.append(v)
        trees[hv] = {"parent": parent, "order": order, "depth": depth}
    if len(owner) != model.n_buses:
        raise NonRadialError(f"unfed buses: {sorted(set(model.bus_index) - set(owner))}")
    return trees


def feeder_stats(model: NetworkModel, g: ReducedGraph, bits: str) -> dict:
    """Per-feeder statistics from the reduced graph and bitstring alone."""
    _check_len(g, bits)
    if not is_radial(g, bits):
        raise NonRadialError(f"configuration {bits} is not radial")
    adj = defaultdict(list)
    for e, bit in zip(g.edges, bits):
        if bit == "1":
            adj[e.u].append((e.v, 1))
            adj[e.v].append((e.u, 1))
    for u, v in g.fixed_links:
        adj[u].append((v, 0))
        adj[v].append((u, 0))
    loads_at = defaultdict(int)
    for ld in model.loads:
        loads_at[g.bus_node[ld.bus]] += 1
    feeders = []
    for hv in g.hv_nodes:
        depth = {hv: 0}
        q = deque([hv])
        while q:
            u = q.popleft()
            for v, w in adj[u]:
                if v not in depth:
                    depth[v] = depth[u] + w
                    q.append(v)
        feeders.append({
            "hv": g.nodes[hv].id,
            "mv_nodes": sum(1 for n in depth if g.nodes[n].kind == MV),
            "depth": max(depth.values()),
            "loads": sum(loads_at[n] for n in depth),
        })
    return _summarise(feeders)


def physical_feeder_stats(model: NetworkModel, switch_states: Mapping[str, bool]) -> dict:
    """Same statistics as :func:`feeder_stats`, measured on the bus/branch graph."""
    trees = feeder_trees(model, branch_states(model, switch_states))
    loads_at = defaultdict(int)
    for ld in model.loads:
        loads_at[ld.bus] += 1
    feeders = []
    for hv, t in trees.items():
        buses = t["order"]
        feeders.append({
            "hv": hv,
            "mv_buses": sum(1 for b in buses if model.bus(b).kind == MV),
            "depth": max(t["depth"].values()),
            "loads": sum(loads_at[b] for b in buses),
        })
    return _summarise(feeders)


def _summarise(feeders: list[dict]) -> dict:
    active = [f for f in feeders if f["loads"] > 0 or f.get("mv_nodes", f.get("mv_buses", 0)) > 0]
    return {
        "n_feeders": len(active),
        "max_depth": max((f["depth"] for f in feeders), default=0),
        "loads_per_feeder": {f["hv"]: f["loads"] for f in feeders},
        "depth_per_feeder": {f["hv"]: f["depth"] for f in feeders},
    }
