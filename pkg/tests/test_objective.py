import numpy as np
import pytest
from hypothesis import given, strategies as st

from gridreconf.errors import EvaluationError
from gridreconf.objective import (
    ObjectiveParams,
    alpha_eq,
    combine,
    evaluate,
    gamma_terms,
    normalization_diagnostics,
    penalty_i,
    penalty_v,
    worst,
)
from gridreconf.powerflow import PowerFlowResult

unit = st.floats(0.0, 1.0)


def fake_result(model, v_pu, i_ratio, p_gen=1000.0, p_load=990.0, converged=True):
    v_pu, i_ratio = np.asarray(v_pu, float), np.asarray(i_ratio, float)
    return PowerFlowResult(
        bus_ids=tuple(b.id for b in model.buses), branch_ids=tuple(b.id for b in model.branches),
        v_pu=v_pu, v_kv=v_pu * 8.4, i_a=i_ratio * 400.0, i_ratio=i_ratio,
        p_gen=p_gen, p_load=p_load, p_loss=p_gen - p_load, loss_ir2=p_gen - p_load,
        converged=converged, iterations=3, max_dv=0.0, kcl_residual=0.0, kvl_residual=0.0)


def test_penalty_v_examples():
    assert penalty_v(1.0) == 0.0
    assert penalty_v(0.9) == 0.0 and penalty_v(1.1) == 0.0
    assert penalty_v(1.2, 100.0) == pytest.approx(1.0)
    assert penalty_v(0.8, 100.0) == pytest.approx(1.0)


def test_penalty_i_examples():
    assert penalty_i(0.5) == 0.0
    assert penalty_i(1.0) == 0.0
    assert penalty_i(1.3, 100.0) == pytest.approx(9.0)


def test_penalties_continuous_and_monotone():
    eps = 1e-9
    assert penalty_v(1.1 + eps) < 1e-12 and penalty_v(0.9 - eps) < 1e-12
    assert penalty_i(1.0 + eps) < 1e-12
    up = penalty_v(np.linspace(1.1, 2.0, 200))
    down = penalty_v(np.linspace(0.9, 0.0, 200))
    cur = penalty_i(np.linspace(1.0, 3.0, 200))
    assert np.all(np.diff(up) >= 0) and np.all(np.diff(down) >= 0) and np.all(np.diff(cur) >= 0)


def test_gamma_terms_max_aggregation(chain):
    m = chain.model
    assert gamma_terms(fake_result(m, [1.0] * 5, [0.5] * 4), m) == (0.0, 0.0)
    gv, _ = gamma_terms(fake_result(m, [1.0, 1.2, 1.0, 1.0, 1.0], [0.5] * 4), m)
    assert gv == penalty_v(1.2)
    _, gi = gamma_terms(fake_result(m, [1.0] * 5, [1.1, 0.2, 1.4, 0.3]), m)
    assert gi == pytest.approx(max(penalty_i(1.1), penalty_i(1.4)))
    assert gi == pytest.approx(16.0)


def test_evaluate_examples(chain):
    m = chain.model
    lossless = evaluate(fake_result(m, [1.0] * 5, [0.5] * 4, 1000.0, 1000.0), m)
    assert lossless.j == 0.0 and lossless.f == 0.0 and lossless.feasible
    bd = evaluate(fake_result(m, [1.0] * 5, [0.5] * 4, 1000.0, 990.0), m, ObjectiveParams(alpha=0.9))
    assert bd.f == pytest.approx(0.009)
    assert combine(0.0, 2.0, 0.5, ObjectiveParams(beta=0.2)).gamma == pytest.approx(0.8)


def test_evaluate_rejects_diverged(chain):
    m = chain.model
    with pytest.raises(EvaluationError):
        evaluate(fake_result(m, [np.nan] * 5, [np.nan] * 4, converged=False), m)
    w = worst(ObjectiveParams())
    assert w.f == 1e6 and not w.feasible


@given(j=unit, gv=st.floats(0, 1e3), gi=st.floats(0, 1e3), alpha=unit, beta=unit)
def test_f_is_exact_convex_combination(j, gv, gi, alpha, beta):
    p = ObjectiveParams(alpha=alpha, beta=beta)
    bd = combine(j, gv, gi, p)
    assert bd.f - (alpha * j + (1 - alpha) * bd.gamma) == 0.0
    assert bd.gamma >= 0


def test_feasibility_equivalence_random(chain, rng):
    m = chain.model
    edges_v = np.array([0.9, 1.1])
    for _ in range(500):
        v = rng.uniform(0.85, 1.15, 5)
        v[rng.random(5) < 0.2] = rng.choice(edges_v)
        i = rng.uniform(0.0, 1.1, 4)
        i[rng.random(4) < 0.2] = 1.0
        gv, gi = gamma_terms(fake_result(m, v, i), m)
        bd = combine(0.01, gv, gi, ObjectiveParams())
        ok = bool(np.all((v >= 0.9) & (v <= 1.1)) and np.all(i <= 1.0))
        assert bd.feasible == ok


def test_params_validation():
    for bad in (dict(alpha=1.5), dict(beta=-0.1), dict(kappa_v=0.0), dict(kappa_i=-1.0)):
        with pytest.raises(ValueError):
            ObjectiveParams(**bad)


def test_alpha_eq_examples():
    assert alpha_eq(0.9, 0.0265, 40.38) == pytest.approx(0.0059, abs=1e-4)
    assert alpha_eq(0.37, 2.5, 2.5) == pytest.approx(0.37)
    assert alpha_eq(1.0, 0.1, 10.0) == 1.0
    assert alpha_eq(0.0, 0.1, 10.0) == 0.0
    with pytest.raises(ValueError):
        alpha_eq(0.9, 0.0, 1.0)


def test_alpha_eq_monotone():
    a = np.linspace(0.01, 0.99, 30)
    vals = [alpha_eq(x, 0.03, 40.0) for x in a]
    assert np.all(np.diff(vals) > 0)
    js = np.linspace(0.001, 1.0, 30)
    assert np.all(np.diff([alpha_eq(0.9, x, 40.0) for x in js]) > 0)
    gs = np.linspace(0.01, 100.0, 30)
    assert np.all(np.diff([alpha_eq(0.9, 0.03, x) for x in gs]) < 0)


def test_normalization_diagnostics():
    p = ObjectiveParams()
    bds = [combine(0.01, 0.0, 0.0, p), combine(0.0265, 0.0, 50.475, p)]
    d = normalization_diagnostics(bds, 0.9)
    assert d.j_max == 0.0265 and d.gamma_max == pytest.approx(40.38)
    assert 0.0 <= d.alpha_eq <= 1.0
