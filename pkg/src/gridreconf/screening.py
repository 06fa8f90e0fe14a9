"""Monte-Carlo screening of admissible configurations and MinSOD prototypes.

A configuration is held fixed while the generator phases and the TVR tap are
drawn uniformly from their box.  If no draw satisfies every voltage and
current limit the configuration is *not constraint compliant* (NCCC).
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .candidate import Domain
from .grid_model import NetworkModel
from .objective import ObjectiveParams, penalty_i, penalty_v
from .powerflow import solve_batch
from .topology import (
    ConfigurationList,
    ReducedGraph,
    apply_configuration,
    bits_matrix,
    feeder_stats,
    physical_feeder_stats,
)

CCC, NCCC, AMBIGUOUS = "CCC", "NCCC", "AMBIGUOUS"
SCREENING_COLUMNS = ("n_conf", "class", "mean_f", "std_f", "eta", "j_max", "gamma_max",
                     "feasible_fraction", "excluded")


@dataclass
class SamplingReport:
    n_conf: int
    samples: int
    phases: np.ndarray
    taps: np.ndarray
    f_values: np.ndarray        # NaN where the power flow diverged
    j_values: np.ndarray
    gamma_values: np.ndarray
    gamma_v: np.ndarray
    gamma_i: np.ndarray
    p_loss: np.ndarray          # kW
    excluded: int
    mean: float
    std: float
    eta: float
    j_max: float
    gamma_max: float
    feasible_fraction: float
    klass: str = ""
    by_tap: dict = field(default_factory=dict)

    def row(self) -> dict:
        return {
            "n_conf": self.n_conf, "class": self.klass, "mean_f": self.mean, "std_f": self.std,
            "eta": self.eta, "j_max": self.j_max, "gamma_max": self.gamma_max,
            "feasible_fraction": self.feasible_fraction, "excluded": self.excluded,
        }


@dataclass(frozen=True)
class ClassPartition:
    ccc: frozenset
    nccc: frozenset
    ambiguous: frozenset

    def of(self, n_conf: int) -> str:
        if n_conf in self.ccc:
            return CCC
        if n_conf in self.nccc:
            return NCCC
        if n_conf in self.ambiguous:
            return AMBIGUOUS
        raise KeyError(n_conf)


def coefficient_of_variation(values: np.ndarray) -> tuple[float, float, float]:
    """``(mean, std, std/mean)`` over finite values; a constant sample has eta 0."""
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return float("nan"), float("nan"), float("nan")
    if np.all(v == v[0]):
        return float(v[0]), 0.0, 0.0
    mean, std = float(np.mean(v)), float(np.std(v))
    return mean, std, std / mean if mean > 0 else float("nan")


def evaluate_batch(model: NetworkModel, result, params: ObjectiveParams):
    """Objective terms for every row of a :class:`~gridreconf.powerflow.BatchResult`."""
    lo = np.array([b.v_min_frac for b in model.buses])
    hi = np.array([b.v_max_frac for b in model.buses])
    gv = np.max(penalty_v(result.v_pu, params.kappa_v, lo, hi), axis=1) if model.n_buses else 0.0
    gi = (np.max(penalty_i(result.i_ratio, params.kappa_i), axis=1)
          if model.n_branches else np.zeros(len(result.p_gen)))
    with np.errstate(invalid="ignore", divide="ignore"):
        j = np.where(result.p_gen > 0, (result.p_gen - result.p_load) / result.p_gen, 0.0)
    gamma = (1.0 - params.beta) * gi + params.beta * gv
    f = params.alpha * j + (1.0 - params.alpha) * gamma
    bad = ~result.converged
    for arr in (j, gv, gi, gamma, f):
        arr[bad] = np.nan
    return j, gv, gi, gamma, f


def sample_configuration(model: NetworkModel, g: ReducedGraph, configs: ConfigurationList, n_conf: int,
                         profiles: Mapping, params: ObjectiveParams = ObjectiveParams(),
                         samples: int = 2000, seed: int = 0) -> SamplingReport:
    """Random sampling of phases and tap with the configuration fixed.

    The random stream is keyed on ``(seed, n_conf)`` so results do not
    depend on the order in which configurations are screened.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    domain = Domain.from_model(model, len(configs))
    rng = np.random.default_rng([seed, n_conf])
    if domain.n_phases:
        phases = rng.uniform(domain.phase_lo, domain.phase_hi, size=(samples, domain.n_phases))
    else:
        phases = np.zeros((samples, 0))
    taps = rng.choice(np.asarray(domain.taps), size=samples)
    res = solve_batch(model, g, configs[n_conf], phases, taps, profiles)
    j, gv, gi, gamma, f = evaluate_batch(model, res, params)
    ok = res.converged
    mean, std, eta = coefficient_of_variation(f)
    by_tap = {}
    for t in domain.taps:
        sel = (taps == t) & ok
        if sel.any():
            m_, s_, _ = coefficient_of_variation(f[sel])
            by_tap[int(t)] = {"mean_f": m_, "std_f": s_, "count": int(sel.sum())}
    p_loss = np.where(ok, res.p_loss, np.nan)
    report = SamplingReport(
        n_conf=n_conf, samples=samples, phases=phases, taps=taps,
        f_values=f, j_values=j, gamma_values=gamma, gamma_v=gv, gamma_i=gi, p_loss=p_loss,
        excluded=int((~ok).sum()), mean=mean, std=std, eta=eta,
        j_max=float(np.nanmax(j)) if ok.any() else float("nan"),
        gamma_max=float(np.nanmax(gamma)) if ok.any() else float("nan"),
        feasible_fraction=float(np.mean(gamma[ok] <= 1e-9)) if ok.any() else 0.0,
        by_tap=by_tap,
    )
    return report


def classify(report: SamplingReport, gamma_tol: float = 1e-9, ccc_fraction: float = 0.05) -> str:
    gam = report.gamma_values[np.isfinite(report.gamma_values)]
    if gam.size == 0:
        return NCCC
    n_ok = int(np.count_nonzero(gam <= gamma_tol))
    if n_ok == 0:
        return NCCC
    return CCC if n_ok / gam.size >= ccc_fraction else AMBIGUOUS


def screen_all(model: NetworkModel, g: ReducedGraph, configs: ConfigurationList, profiles: Mapping,
               params: ObjectiveParams = ObjectiveParams(), samples: int = 2000, seed: int = 0,
               gamma_tol: float = 1e-9, ccc_fraction: float = 0.05,
               indices: Iterable[int] | None = None) -> tuple[ClassPartition, dict[int, SamplingReport]]:
    reports = {}
    groups = {CCC: set(), NCCC: set(), AMBIGUOUS: set()}
    for n in (configs.indices if indices is None else indices):
        rep = sample_configuration(model, g, configs, n, profiles, params, samples, seed)
        rep.feasible_fraction = float(np.mean(rep.gamma_values[np.isfinite(rep.gamma_values)] <= gamma_tol)) \
            if np.isfinite(rep.gamma_values).any() else 0.0
        rep.klass = classify(rep, gamma_tol, ccc_fraction)
        groups[rep.klass].add(n)
        reports[n] = rep
    part = ClassPartition(frozenset(groups[CCC]), frozenset(groups[NCCC]), frozenset(groups[AMBIGUOUS]))
    return part, reports


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return repr(float(x))


def write_screening_csv(reports: Mapping[int, SamplingReport], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCREENING_COLUMNS)
        for n in sorted(reports):
            row = reports[n].row()
            w.writerow([_fmt(row[c]) for c in SCREENING_COLUMNS])


def read_screening_csv(path) -> tuple[ClassPartition, list[dict]]:
    groups = {CCC: set(), NCCC: set(), AMBIGUOUS: set()}
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            groups[row["class"]].add(int(row["n_conf"]))
            rows.append(row)
    return ClassPartition(*(frozenset(groups[k]) for k in (CCC, NCCC, AMBIGUOUS))), rows


def sum_of_distances(configs: Iterable[str]) -> tuple[list[str], np.ndarray]:
    members = sorted(set(configs))
    mat = bits_matrix(members).astype(np.int32)
    # pairwise Hamming distance as the count of disagreeing positions
    ones = mat.sum(axis=1)
    dist = ones[:, None] + ones[None, :] - 2 * (mat @ mat.T)
    return members, dist.sum(axis=1)


def minsod(configs: Iterable[str]) -> str:
    """Member minimising the summed Hamming distance to all members.

    Ties go to the lexicographically smallest bitstring.
    """
    members, sod = sum_of_distances(configs)
    if not members:
        raise ValueError("minsod of an empty set")
    return members[int(np.argmin(sod))]


def prototype_report(partition: ClassPartition, configs: ConfigurationList, model: NetworkModel,
                     g: ReducedGraph) -> list[dict]:
    """MinSOD prototype and feeder statistics for the CCC and NCCC classes."""
    out = []
    for name, members in ((CCC, partition.ccc), (NCCC, partition.nccc)):
        if not members:
            continue
        bits = [configs[i].bits for i in sorted(members)]
        proto = minsod(bits)
        ms, sod = sum_of_distances(bits)
        index = next(c.index for c in configs if c.bits == proto)
        stats = feeder_stats(model, g, proto)
        phys = physical_feeder_stats(model, apply_configuration(model, g, proto))
        out.append({
            "class": name,
            "index": index,
            "bits": proto,
            "sod": int(sod[ms.index(proto)]),
            "size": len(bits),
            "feeder_stats": stats,
            "physical_check": phys == stats,
        })
    return out


def write_prototypes(protos: list[dict], path) -> None:
    Path(path).write_text(json.dumps(protos, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_samples_csv(report: SamplingReport, path) -> None:
    n_ph = report.phases.shape[1]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample", *[f"phi_{k + 1}" for k in range(n_ph)], "n_tap",
                    "f", "j", "gamma", "gamma_v", "gamma_i", "p_loss_kw"])
        for s in range(report.samples):
            w.writerow([s, *[_fmt(x) for x in report.phases[s]], int(report.taps[s]),
                        _fmt(report.f_values[s]), _fmt(report.j_values[s]), _fmt(report.gamma_values[s]),
                        _fmt(report.gamma_v[s]), _fmt(report.gamma_i[s]), _fmt(report.p_loss[s])])
