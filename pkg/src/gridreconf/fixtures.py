"""Synthetic test networks.

The 16-bus feeder mimics a small two-substation MV network at 8.4 kV with
five controllable generator sets, one PV plant, and a TVR.  Its reduced
graph is a two-row ladder between the HV nodes with 777 radial
configurations.  Lowering the ampacity of the HV2 feeder head makes every
configuration that feeds the whole network through HV2 infeasible.
"""
from __future__ import annotations

import math
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .grid_model import model_from_dict, save_network, write_profiles

DEFAULT_HOUR = datetime(2014, 1, 1, 13, 0)

# phase boxes of the five generator sets (rad)
GENSET_PHASE_RANGES = (
    (-0.2, 0.45),
    (-0.2, 0.45),
    (-0.2, 0.55),
    (0.0, 0.64),
    (-0.32, 0.45),
)


def _bus(i, kind="MV", kv=8.4):
    return {"id": i, "kind": kind, "nominal_kv": kv, "vmin_frac": 0.9, "vmax_frac": 1.1}


def _line(i, a, b, r, x, imax, breaker=None):
    return {"id": i, "from": a, "to": b, "r_ohm": r, "x_ohm": x, "imax_a": imax, "breaker": breaker}


def _daily(peak: float, hour: int, shape: str) -> float:
    if shape == "load":
        return peak * (0.55 + 0.45 * math.sin(math.pi * max(hour - 5, 0) / 19) ** 2)
    if shape == "pv":
        return peak * max(math.sin(math.pi * (hour - 6) / 12), 0.0)
    return peak


def profile_rows(loads: dict, gens: dict, day: datetime = DEFAULT_HOUR.replace(hour=0), hours: int = 24):
    """24 hourly rows per element; values at :data:`DEFAULT_HOUR` equal the given peaks."""
    rows = []
    for h in range(hours):
        ts = day + timedelta(hours=h)
        for lid, (p, q) in loads.items():
            k = _daily(1.0, h, "load") / _daily(1.0, 13, "load")
            rows.append((ts, lid, p * k, q * k))
        for gid, (p, shape) in gens.items():
            k = _daily(1.0, h, shape) / max(_daily(1.0, 13, shape), 1e-12)
            rows.append((ts, gid, p * k, 0.0))
    return rows


# -- chain HV1 - a - b - c - HV2 ------------------------------------------------

def chain_network(hv2_imax: float = 400.0, imax: float = 400.0) -> dict:
    buses = [_bus("HV1", "HV"), _bus("a"), _bus("b"), _bus("c"), _bus("HV2", "HV")]
    names = ["HV1", "a", "b", "c", "HV2"]
    branches, vbs = [], []
    for k in range(4):
        lim = hv2_imax if k == 3 else imax
        branches.append(_line(f"L{k + 1}", names[k], names[k + 1], 1.2, 0.8, lim, f"VB{k + 1}"))
        vbs.append({"id": f"VB{k + 1}", "switches": [f"S{k + 1}a", f"S{k + 1}b"]})
    return {
        "buses": buses,
        "branches": branches,
        "generators": [{"id": "G1", "bus": "b", "phase_controllable": True,
                        "phase_min_rad": -0.2, "phase_max_rad": 0.45, "fixed_phase_rad": 0.0}],
        "loads": [{"id": f"load_{n}", "bus": n} for n in ("a", "b", "c")],
        "tvr": None,
        "virtual_breakers": vbs,
    }


CHAIN_LOADS = {"load_a": (300.0, 120.0), "load_b": (250.0, 100.0), "load_c": (350.0, 140.0)}
CHAIN_GENS = {"G1": (200.0, "flat")}


# -- 16-bus two-substation feeder ------------------------------------------------

# switch-free MV groups; the TVR sits inside the last one
FEEDER16_GROUPS = tuple((f"M{k}",) for k in range(1, 13)) + (("M13", "M14"),)

# (virtual breaker, from bus, to bus): two rows of substations between the
# HV nodes, two cross ties and a lateral through the TVR
FEEDER16_TIES = (
    ("VB1", "HV1", "M1"),
    ("VB2", "M1", "M2"),
    ("VB3", "M2", "M3"),
    ("VB4", "M3", "M4"),
    ("VB5", "M4", "M5"),
    ("VB6", "M5", "M6"),
    ("VB7", "M6", "HV2"),
    ("VB8", "HV1", "M7"),
    ("VB9", "M7", "M8"),
    ("VB10", "M8", "M9"),
    ("VB11", "M9", "M10"),
    ("VB12", "M10", "M11"),
    ("VB13", "M11", "M12"),
    ("VB14", "M4", "M10"),
    ("VB15", "M6", "M12"),
    ("VB16", "M9", "M13"),
    ("VB17", "M14", "M11"),
)

FEEDER16_LOADS = {
    "load_M1": (120.0, 50.0), "load_M2": (180.0, 75.0), "load_M3": (220.0, 90.0),
    "load_M4": (150.0, 60.0), "load_M5": (200.0, 85.0), "load_M6": (260.0, 110.0),
    "load_M7": (140.0, 60.0), "load_M8": (190.0, 80.0), "load_M9": (230.0, 95.0),
    "load_M10": (170.0, 70.0), "load_M11": (150.0, 65.0), "load_M12": (210.0, 90.0),
    "load_M13": (160.0, 70.0), "load_M14": (140.0, 60.0),
}
FEEDER16_GENSETS = (("G1", "M2"), ("G2", "M5"), ("G3", "M8"), ("G4", "M11"), ("G5", "M14"))
FEEDER16_GENS = {"G1": (180.0, "flat"), "G2": (220.0, "flat"), "G3": (160.0, "flat"),
                 "G4": (200.0, "flat"), "G5": (190.0, "flat"), "PV1": (250.0, "pv")}

FEEDER16_TIE_R, FEEDER16_TIE_X = 1.1, 0.7
FEEDER16_INNER_R, FEEDER16_INNER_X = 0.25, 0.15


def feeder16_network(hv2_imax: float = 400.0, imax: float = 400.0) -> dict:
    """16-bus fixture; ``hv2_imax`` is the ampacity of the HV2 feeder head (VB7)."""
    buses = [_bus("HV1", "HV"), _bus("HV2", "HV")] + [_bus(f"M{k}") for k in range(1, 15)]
    branches = []
    for grp in FEEDER16_GROUPS:
        for a, b in zip(grp, grp[1:]):
            branches.append(_line(f"{a}-{b}", a, b, FEEDER16_INNER_R, FEEDER16_INNER_X, imax))
    vbs = []
    for vb, a, b in FEEDER16_TIES:
        lim = hv2_imax if vb == "VB7" else imax
        branches.append(_line(f"{a}-{b}", a, b, FEEDER16_TIE_R, FEEDER16_TIE_X, lim, vb))
        vbs.append({"id": vb, "switches": [f"{vb}.{a}", f"{vb}.{b}"]})
    gens = [{"id": gid, "bus": bus, "phase_controllable": True,
             "phase_min_rad": lo, "phase_max_rad": hi, "fixed_phase_rad": 0.0}
            for (gid, bus), (lo, hi) in zip(FEEDER16_GENSETS, GENSET_PHASE_RANGES)]
    gens.append({"id": "PV1", "bus": "M9", "phase_controllable": False,
                 "phase_min_rad": 0.0, "phase_max_rad": 0.0, "fixed_phase_rad": 0.0})
    return {
        "buses": buses,
        "branches": branches,
        "generators": gens,
        "loads": [{"id": lid, "bus": lid.split("_", 1)[1]} for lid in FEEDER16_LOADS],
        "tvr": {"branch": "M13-M14", "delta_kv": 0.1, "taps": [-3, -2, -1, 0, 1, 2, 3], "nominal_kv_in": 8.4},
        "virtual_breakers": vbs,
    }


FEEDER16_STRANGLED_IMAX = 60.0


def write_fixture(directory, name: str = "feeder16", **kwargs) -> tuple[Path, Path]:
    """Write ``network.json`` and ``profiles.csv`` for a named fixture."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if name == "feeder16":
        data, loads, gens = feeder16_network(**kwargs), FEEDER16_LOADS, FEEDER16_GENS
    elif name == "chain":
        data, loads, gens = chain_network(**kwargs), CHAIN_LOADS, CHAIN_GENS
    else:
        raise ValueError(f"unknown fixture {name!r}")
    net, prof = directory / "network.json", directory / "profiles.csv"
    save_network(model_from_dict(data), net)
    write_profiles(prof, profile_rows(loads, gens))
    return net, prof


# -- random networks for oracle tests -----------------------------------------

def random_switched_network(rng: np.random.Generator, n_hv: int, n_mv: int, n_edges: int) -> dict:
    """Random connected graph where every branch carries a virtual breaker."""
    names = [f"H{i}" for i in range(n_hv)] + [f"N{i}" for i in range(n_mv)]
    buses = [_bus(n, "HV" if n.startswith("H") else "MV", 20.0) for n in names]
    pairs = []
    # random spanning tree first, then extra edges (parallel pairs allowed)
    perm = list(rng.permutation(len(names)))
    for k in range(1, len(perm)):
        pairs.append((names[perm[k]], names[perm[int(rng.integers(0, k))]]))
    while len(pairs) < n_edges:
        a, b = rng.choice(len(names), size=2, replace=False)
        pairs.append((names[a], names[b]))
    branches, vbs = [], []
    for k, (a, b) in enumerate(pairs):
        branches.append(_line(f"L{k}", a, b, 1.0, 0.5, 300.0, f"VB{k}"))
        vbs.append({"id": f"VB{k}", "switches": [f"S{k}a", f"S{k}b"]})
    return {"buses": buses, "branches": branches, "generators": [], "loads": [],
            "tvr": None, "virtual_breakers": vbs}


def random_radial_feeder(rng: np.random.Generator, n_buses: int = 12, n_gens: int = 2,
                         kv: float = 20.0) -> tuple[dict, dict]:
    """Random single-HV tree with loads and controllable generators, plus profiles at one hour."""
    names = ["HV"] + [f"B{i}" for i in range(1, n_buses)]
    buses = [_bus("HV", "HV", kv)] + [_bus(n, "MV", kv) for n in names[1:]]
    branches = []
    for k in range(1, n_buses):
        p = names[int(rng.integers(0, k))]
        branches.append(_line(f"L{k}", p, names[k], float(rng.uniform(0.2, 2.0)),
                              float(rng.uniform(0.0, 1.5)), 500.0))
    loads, profiles = [], {}
    for n in names[1:]:
        loads.append({"id": f"ld_{n}", "bus": n})
        profiles[f"ld_{n}"] = (float(rng.uniform(20, 400)), float(rng.uniform(0, 150)))
    gens = []
    for k in range(n_gens):
        bus = names[int(rng.integers(1, n_buses))]
        gens.append({"id": f"G{k}", "bus": bus, "phase_controllable": True,
                     "phase_min_rad": -0.3, "phase_max_rad": 0.5, "fixed_phase_rad": 0.0})
        profiles[f"G{k}"] = (float(rng.uniform(50, 300)), 0.0)
    data = {"buses": buses, "branches": branches, "generators": gens, "loads": loads,
            "tvr": None, "virtual_breakers": []}
    return data, profiles
