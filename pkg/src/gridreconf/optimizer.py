"""Real-coded genetic algorithm over ``[phi_1..phi_n, n_tap, n_conf]``.

Selection is binary tournament, real genes recombine by blend crossover
(BLX-0.5) and mutate by Gaussian steps of 10 % of their range, integer genes
recombine uniformly and mutate by one ordinal step.  ``n_conf`` indexes the
Hamming-ordered configuration list, so a one-step move lands on a similar
topology.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .candidate import CandidateSolution, Domain
from .errors import EvaluationError, OptimizerError
from .grid_model import NetworkModel
from .objective import ObjectiveBreakdown, ObjectiveParams, evaluate, worst
from .powerflow import solve
from .topology import ConfigurationList, ReducedGraph

log = logging.getLogger(__name__)

BLX_ALPHA = 0.5
MUTATION_SIGMA = 0.1


@dataclass(frozen=True)
class GaSettings:
    population: int = 20
    elites: int = 2
    crossover_fraction: float = 0.8
    mutation_rate: float = 0.1
    max_generations: int = 100
    stall_generations: int = 50
    stall_tol: float = 1e-9
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.elites < self.population:
            raise ValueError("need 0 <= elites < population")
        if not (0 <= self.crossover_fraction <= 1 and 0 <= self.mutation_rate <= 1):
            raise ValueError("fractions must lie in [0, 1]")
        if self.max_generations < 1:
            raise ValueError("max_generations must be >= 1")


@dataclass
class GaResult:
    best: CandidateSolution
    best_f: float
    best_breakdown: ObjectiveBreakdown
    generations_run: int
    history: list[dict]
    initial_best: CandidateSolution
    initial_best_f: float
    initial_best_p_loss: float       # kW
    delta_f_pct: float
    delta_p_loss_w: float
    evaluated: list[CandidateSolution] = field(default_factory=list, repr=False)

    @property
    def best_p_loss(self) -> float:
        return self.best_breakdown.p_loss

    def report(self, settings: GaSettings, experiment: int | None = None) -> dict:
        return {
            "experiment": experiment,
            "seed": settings.seed,
            "settings": asdict(settings),
            "best": self.best.to_dict(),
            "best_f": self.best_f,
            "best_breakdown": self.best_breakdown.row(),
            "best_p_loss_w": self.best_p_loss * 1000.0,
            "initial_best": self.initial_best.to_dict(),
            "initial_best_f": self.initial_best_f,
            "initial_best_p_loss_w": self.initial_best_p_loss * 1000.0,
            "generations": self.generations_run,
            "delta_f_pct": self.delta_f_pct,
            "delta_p_loss_w": self.delta_p_loss_w,
            "history": self.history,
        }


Evaluator = Callable[[CandidateSolution], ObjectiveBreakdown]


def power_flow_evaluator(model: NetworkModel, g: ReducedGraph, configs: ConfigurationList,
                         profiles, params: ObjectiveParams) -> Evaluator:
    """Fitness of a genome: one power-flow solve, diverged solves get the sentinel."""
    def fitness(sol: CandidateSolution) -> ObjectiveBreakdown:
        result = solve(model, g, configs[sol.n_conf], sol, profiles)
        try:
            return evaluate(result, model, params)
        except EvaluationError:
            return worst(params)
    return fitness


def project_to_allowed(n_conf: int, allowed: np.ndarray) -> int:
    """Nearest allowed index by ordinal distance; ties go to the lower index."""
    pos = int(np.searchsorted(allowed, n_conf))
    if pos < len(allowed) and allowed[pos] == n_conf:
        return n_conf
    cands = []
    if pos > 0:
        cands.append(int(allowed[pos - 1]))
    if pos < len(allowed):
        cands.append(int(allowed[pos]))
    return min(cands, key=lambda c: (abs(c - n_conf), c))


def _allowed(domain: Domain, restrict_to: Iterable[int] | None) -> np.ndarray:
    if restrict_to is None:
        return np.arange(1, domain.n_configs + 1)
    allowed = np.array(sorted(set(int(i) for i in restrict_to)), dtype=int)
    if allowed.size == 0:
        raise OptimizerError("restriction set is empty")
    if allowed[0] < 1 or allowed[-1] > domain.n_configs:
        raise OptimizerError("restriction set contains indices outside the configuration list")
    return allowed


def random_individual(rng: np.random.Generator, domain: Domain, allowed: np.ndarray) -> CandidateSolution:
    phases = domain.sample_phases(rng)
    tap = int(domain.taps[int(rng.integers(len(domain.taps)))])
    conf = int(allowed[int(rng.integers(len(allowed)))])
    return CandidateSolution(phases, tap, conf)


def build_initial_population(rng: np.random.Generator, size: int, domain: Domain,
                             restrict_to: Iterable[int] | None = None,
                             paired_with: Sequence[CandidateSolution] | None = None) -> list[CandidateSolution]:
    """Uniform sample of the domain.

    With ``paired_with``, individuals of that population whose configuration
    is allowed are copied unchanged; the others are replaced by fresh random
    individuals whose configuration is drawn from ``restrict_to``.
    """
    allowed = _allowed(domain, restrict_to)
    if paired_with is None:
        return [random_individual(rng, domain, allowed) for _ in range(size)]
    if len(paired_with) != size:
        raise OptimizerError("paired population has a different size")
    allowed_set = set(allowed.tolist())
    return [ind if ind.n_conf in allowed_set else random_individual(rng, domain, allowed)
            for ind in paired_with]


class _Operators:
    def __init__(self, rng: np.random.Generator, domain: Domain, allowed: np.ndarray, settings: GaSettings):
        self.rng = rng
        self.domain = domain
        self.allowed = allowed
        self.settings = settings
        self.lo = np.asarray(domain.phase_lo, dtype=float)
        self.hi = np.asarray(domain.phase_hi, dtype=float)
        self.taps = list(domain.taps)

    def tournament(self, f: np.ndarray) -> int:
        a, b = self.rng.integers(len(f), size=2)
        return int(a) if (f[a], a) <= (f[b], b) else int(b)

    def crossover(self, p1: CandidateSolution, p2: CandidateSolution) -> CandidateSolution:
        rng = self.rng
        x1, x2 = np.asarray(p1.phases, dtype=float), np.asarray(p2.phases, dtype=float)
        gamma = rng.uniform(-BLX_ALPHA, 1.0 + BLX_ALPHA, size=x1.shape)
        child = np.clip(x1 + gamma * (x2 - x1), self.lo, self.hi)
        tap = p1.n_tap if rng.random() < 0.5 else p2.n_tap
        conf = p1.n_conf if rng.random() < 0.5 else p2.n_conf
        return self._make(child, tap, conf)

    def mutate(self, p: CandidateSolution) -> CandidateSolution:
        rng = self.rng
        n = self.domain.n_phases
        hit = rng.random(n + 2) < self.settings.mutation_rate
        if not hit.any():
            hit[int(rng.integers(n + 2))] = True
        x = np.asarray(p.phases, dtype=float).copy()
        noise = rng.normal(0.0, MUTATION_SIGMA * (self.hi - self.lo)) if n else np.zeros(0)
        x = np.where(hit[:n], x + noise, x)
        x = np.clip(x, self.lo, self.hi)
        steps = rng.choice((-1, 1), size=2)
        tap, conf = p.n_tap, p.n_conf
        if hit[n]:
            k = min(max(self.taps.index(tap) + int(steps[0]), 0), len(self.taps) - 1)
            tap = self.taps[k]
        if hit[n + 1]:
            conf = min(max(conf + int(steps[1]), 1), self.domain.n_configs)
        return self._make(x, tap, conf)

    def _make(self, phases: np.ndarray, tap: int, conf: int) -> CandidateSolution:
        conf = project_to_allowed(int(conf), self.allowed)
        return CandidateSolution(tuple(float(v) for v in phases), int(tap), conf)


def _stalled(best: list[float], window: int, tol: float) -> bool:
    if len(best) <= window:
        return False
    old, new = best[-1 - window], best[-1]
    scale = max(abs(old), np.finfo(float).tiny)
    return (old - new) / scale <= tol


def run_ga(domain: Domain, evaluator: Evaluator, settings: GaSettings = GaSettings(),
           restrict_to: Iterable[int] | None = None,
           initial_population: Sequence[CandidateSolution] | None = None) -> GaResult:
    """Minimise ``evaluator(candidate).f`` over ``domain``.

    Generation 1 is the initial population.  The run stops after
    ``max_generations`` or when the best fitness improved by a relative
    amount ``<= stall_tol`` over the last ``stall_generations`` generations.
    """
    allowed = _allowed(domain, restrict_to)
    rng = np.random.default_rng(settings.seed)
    if initial_population is None:
        pop = build_initial_population(rng, settings.population, domain, allowed)
    else:
        pop = [CandidateSolution(p.phases, p.n_tap, project_to_allowed(p.n_conf, allowed))
               for p in initial_population]
        if len(pop) != settings.population:
            raise OptimizerError("initial population size differs from settings.population")
    ops = _Operators(rng, domain, allowed, settings)

    cache: dict[tuple, ObjectiveBreakdown] = {}
    evaluated: list[CandidateSolution] = []

    def score(population):
        out = []
        for ind in population:
            key = ind.genes()
            if key not in cache:
                cache[key] = evaluator(ind)
                evaluated.append(ind)
            out.append(cache[key])
        return out

    history: list[dict] = []
    best_so_far: list[float] = []
    scores = score(pop)
    f = np.array([s.f for s in scores])
    sentinel = np.array([not np.isfinite(s.j) for s in scores])
    if sentinel.all():
        raise OptimizerError("every individual of the initial population failed to converge")
    init_i = int(np.argmin(f))
    initial_best, initial_bd = pop[init_i], scores[init_i]

    def record(gen, pop, scores, f):
        i = int(np.argmin(f))
        history.append({"generation": gen, "best_f": float(f[i]), "mean_f": float(np.mean(f)),
                        "best_ploss_w": float(scores[i].p_loss * 1000.0)})
        best_so_far.append(float(f[i]))

    record(1, pop, scores, f)
    gen = 1
    while gen < settings.max_generations and not _stalled(best_so_far, settings.stall_generations, settings.stall_tol):
        order = np.argsort(f, kind="stable")
        nxt = [pop[i] for i in order[:settings.elites]]
        n_rest = settings.population - settings.elites
        n_cross = int(round(settings.crossover_fraction * n_rest))
        for _ in range(n_cross):
            a, b = ops.tournament(f), ops.tournament(f)
            nxt.append(ops.crossover(pop[a], pop[b]))
        for _ in range(n_rest - n_cross):
            nxt.append(ops.mutate(pop[ops.tournament(f)]))
        pop = nxt
        scores = score(pop)
        f = np.array([s.f for s in scores])
        gen += 1
        record(gen, pop, scores, f)

    i = int(np.argmin(f))
    best, best_bd = pop[i], scores[i]
    d_f = (initial_bd.f - best_bd.f) / initial_bd.f * 100.0 if initial_bd.f != 0 else 0.0
    return GaResult(
        best=best,
        best_f=float(best_bd.f),
        best_breakdown=best_bd,
        generations_run=gen,
        history=history,
        initial_best=initial_best,
        initial_best_f=float(initial_bd.f),
        initial_best_p_loss=float(initial_bd.p_loss),
        delta_f_pct=float(d_f),
        delta_p_loss_w=float((initial_bd.p_loss - best_bd.p_loss) * 1000.0),
        evaluated=evaluated,
    )


def paired_populations(seed: int, size: int, domain: Domain, ccc: Iterable[int]):
    """Initial populations of Experiment 1 (all configurations) and Experiment 2 (CCC only).

    Both come from the same seed; CCC individuals are shared verbatim.
    """
    pop1 = build_initial_population(np.random.default_rng([seed, 1]), size, domain)
    pop2 = build_initial_population(np.random.default_rng([seed, 2]), size, domain, ccc, paired_with=pop1)
    return pop1, pop2


def run_experiment(model: NetworkModel, g: ReducedGraph, configs: ConfigurationList, profiles,
                   params: ObjectiveParams, settings: GaSettings, experiment: int,
                   ccc: Iterable[int] | None = None) -> tuple[GaResult, list[CandidateSolution]]:
    """One seeded run of Experiment 1 (all configurations) or 2 (CCC only)."""
    domain = Domain.from_model(model, len(configs))
    if experiment == 2 and ccc is None:
        raise OptimizerError("experiment 2 needs the CCC index set")
    ccc_list = sorted(ccc) if ccc is not None else list(range(1, len(configs) + 1))
    pop1, pop2 = paired_populations(settings.seed, settings.population, domain, ccc_list)
    evaluator = power_flow_evaluator(model, g, configs, profiles, params)
    if experiment == 1:
        return run_ga(domain, evaluator, settings, None, pop1), pop1
    if experiment == 2:
        return run_ga(domain, evaluator, settings, ccc_list, pop2), pop2
    raise OptimizerError(f"unknown experiment {experiment!r}")
