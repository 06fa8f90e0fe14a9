import copy

import numpy as np
import pytest

from gridreconf.candidate import CandidateSolution, Domain
from gridreconf.errors import OptimizerError
from gridreconf.fixtures import CHAIN_GENS, CHAIN_LOADS, GENSET_PHASE_RANGES, chain_network
from gridreconf.grid_model import model_from_dict
from gridreconf.objective import ObjectiveBreakdown, ObjectiveParams
from gridreconf.optimizer import (
    GaSettings,
    build_initial_population,
    paired_populations,
    power_flow_evaluator,
    project_to_allowed,
    run_experiment,
    run_ga,
)
from gridreconf.topology import admissible_configurations, reduce_graph

from conftest import at_hour

SPHERE_DOMAIN = Domain(tuple(lo for lo, _ in GENSET_PHASE_RANGES), tuple(hi for _, hi in GENSET_PHASE_RANGES),
                       (0,), 1)


def sphere(sol):
    s = float(np.sum(np.square(sol.phases)))
    return ObjectiveBreakdown(s, 0.0, 0.0, 0.0, s, 0.0)


def test_settings_defaults():
    s = GaSettings()
    assert (s.population, s.elites, s.crossover_fraction, s.max_generations, s.stall_generations, s.stall_tol) \
        == (20, 2, 0.8, 100, 50, 1e-9)
    with pytest.raises(ValueError):
        GaSettings(population=2, elites=2)


def test_sphere_converges():
    hits = 0
    for seed in range(10):
        res = run_ga(SPHERE_DOMAIN, sphere, GaSettings(seed=seed))
        hits += res.best_f < 1e-3
        assert res.generations_run <= 100
    assert hits >= 9


def test_history_invariants():
    res = run_ga(SPHERE_DOMAIN, sphere, GaSettings(seed=3))
    bests = [h["best_f"] for h in res.history]
    assert len(res.history) == res.generations_run
    assert all(b >= res.best_f for b in bests)
    assert np.all(np.diff(bests) <= 0)
    assert [h["generation"] for h in res.history] == list(range(1, res.generations_run + 1))


def test_stall_stops_early():
    flat = lambda sol: ObjectiveBreakdown(0.5, 0.0, 0.0, 0.0, 0.5, 0.0)
    res = run_ga(SPHERE_DOMAIN, flat, GaSettings(seed=0, max_generations=500))
    assert res.generations_run == 51


def test_determinism(chain):
    ev = power_flow_evaluator(chain.model, chain.g, chain.configs, chain.profiles, ObjectiveParams())
    dom = Domain.from_model(chain.model, len(chain.configs))
    a = run_ga(dom, ev, GaSettings(seed=42, max_generations=30))
    b = run_ga(dom, ev, GaSettings(seed=42, max_generations=30))
    assert a.report(GaSettings(seed=42)) == b.report(GaSettings(seed=42))
    assert a.evaluated == b.evaluated


def test_lossless_single_configuration():
    data = copy.deepcopy(chain_network())
    for br in data["branches"]:
        br["r_ohm"] = 0.0
        br["x_ohm"] = 0.0
    m = model_from_dict(data)
    g = reduce_graph(m)
    configs = admissible_configurations(g)
    ev = power_flow_evaluator(m, g, configs, at_hour(CHAIN_LOADS, CHAIN_GENS), ObjectiveParams())
    res = run_ga(Domain.from_model(m, len(configs)), ev, GaSettings(seed=1), restrict_to={2})
    assert res.history[0]["best_f"] == 0.0 and res.best_f == 0.0
    assert {s.n_conf for s in res.evaluated} == {2}


def test_every_evaluated_individual_in_domain(feeder16):
    c = feeder16
    dom = Domain.from_model(c.model, len(c.configs))
    ev = power_flow_evaluator(c.model, c.g, c.configs, c.profiles, ObjectiveParams())
    allowed = set(range(100, 200))
    res = run_ga(dom, ev, GaSettings(seed=5, max_generations=40), restrict_to=allowed)
    assert res.evaluated
    assert all(dom.contains(s) and s.n_conf in allowed for s in res.evaluated)


def test_empty_restriction(chain):
    dom = Domain.from_model(chain.model, len(chain.configs))
    with pytest.raises(OptimizerError):
        run_ga(dom, sphere, GaSettings(), restrict_to=set())
    with pytest.raises(OptimizerError):
        run_ga(dom, sphere, GaSettings(), restrict_to={9})


def test_all_diverged_aborts(chain):
    dom = Domain.from_model(chain.model, len(chain.configs))
    dead = lambda sol: ObjectiveBreakdown(float("nan"), 1e6, 1e6, 1e6, 1e6)
    with pytest.raises(OptimizerError, match="converge"):
        run_ga(dom, dead, GaSettings())


def test_projection():
    allowed = np.array([2, 5, 9])
    assert project_to_allowed(5, allowed) == 5
    assert project_to_allowed(1, allowed) == 2
    assert project_to_allowed(7, allowed) == 5     # tie between 5 and 9 goes lower
    assert project_to_allowed(8, allowed) == 9
    assert project_to_allowed(40, allowed) == 9


def test_initial_population_in_box(feeder16):
    dom = Domain.from_model(feeder16.model, len(feeder16.configs))
    pop = build_initial_population(np.random.default_rng(0), 20, dom)
    assert len(pop) == 20 and all(dom.contains(p) for p in pop)
    for p in pop:
        for x, (lo, hi) in zip(p.phases, GENSET_PHASE_RANGES):
            assert lo <= x <= hi


def test_paired_population_contract(feeder16):
    dom = Domain.from_model(feeder16.model, len(feeder16.configs))
    full = range(1, len(feeder16.configs) + 1)
    p1, p2 = paired_populations(3, 20, dom, full)
    assert p1 == p2
    ccc = set(range(1, 778, 3))
    p1, p2 = paired_populations(3, 20, dom, ccc)
    assert any(a.n_conf not in ccc for a in p1)
    for a, b in zip(p1, p2):
        if a.n_conf in ccc:
            assert a == b
        else:
            assert b.n_conf in ccc and b.phases != a.phases
        assert dom.contains(b)


def test_paired_population_size_mismatch(feeder16):
    dom = Domain.from_model(feeder16.model, 777)
    with pytest.raises(OptimizerError):
        build_initial_population(np.random.default_rng(0), 5, dom, {1}, paired_with=[CandidateSolution((0.0,) * 5)])


def test_run_experiment_reports(chain):
    s = GaSettings(seed=0, max_generations=20)
    res, pop = run_experiment(chain.model, chain.g, chain.configs, chain.profiles, ObjectiveParams(), s, 2, ccc=[1, 2])
    rep = res.report(s, 2)
    assert rep["best"]["n_conf"] in (1, 2)
    assert rep["delta_p_loss_w"] == pytest.approx((res.initial_best_p_loss - res.best_p_loss) * 1000.0)
    assert rep["best_f"] <= rep["initial_best_f"]
    with pytest.raises(OptimizerError):
        run_experiment(chain.model, chain.g, chain.configs, chain.profiles, ObjectiveParams(), s, 2)
