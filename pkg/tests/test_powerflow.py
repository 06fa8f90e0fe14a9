import copy
import math

import numpy as np
import pytest

from gridreconf.candidate import CandidateSolution
from gridreconf.errors import NonRadialError, PowerFlowError
from gridreconf.fixtures import FEEDER16_GENS, FEEDER16_LOADS, feeder16_network, random_radial_feeder
from gridreconf.grid_model import model_from_dict
from gridreconf.powerflow import losses_identity_check, solve, solve_batch, write_trace
from gridreconf.topology import reduce_graph

from conftest import at_hour, two_bus

TVR = {"branch": "L1", "delta_kv": 0.1, "taps": [-3, -2, -1, 0, 1, 2, 3], "nominal_kv_in": 8.4}


def solve_two_bus(model, p_kw, q_kvar=0.0, n_tap=0):
    return solve(model, reduce_graph(model), "", CandidateSolution((), n_tap, 1), {"load1": (p_kw, q_kvar)})


def test_zero_flow_fixed_point():
    res = solve_two_bus(two_bus(1.0, 0.5), 0.0)
    assert res.converged
    assert np.all(res.v_pu == 1.0) and np.all(res.i_a == 0.0)
    assert res.p_loss == 0.0 and losses_identity_check(res) == 0.0


def test_two_bus_closed_form():
    z_base = 8.4 ** 2 * 1000.0 / 1000.0
    res = solve_two_bus(two_bus(0.01 * z_base), 1000.0)
    expected = (1 + math.sqrt(1 - 0.04)) / 2
    assert res.converged
    assert res.v_pu[1] == pytest.approx(expected, abs=1e-9)
    assert res.v_pu[1] == pytest.approx(0.98990, abs=1e-5)
    # loss identity in pu of the 1000 kVA base
    assert losses_identity_check(res) / 1000.0 < 1e-8
    assert res.p_loss == pytest.approx(res.p_gen - res.p_load)


@pytest.mark.parametrize("n_tap", [-3, -2, -1, 0, 1, 2, 3])
def test_tvr_law_no_load(n_tap):
    m = two_bus(0.5, 0.3, tvr=TVR)
    res = solve_two_bus(m, 0.0, n_tap=n_tap)
    assert res.v_kv[0] == 8.4
    assert res.v_kv[1] == pytest.approx(8.4 + n_tap * 0.1, abs=1e-12)


def test_tvr_three_taps_gives_8_7_kv():
    res = solve_two_bus(two_bus(0.5, 0.3, tvr=TVR), 0.0, n_tap=3)
    assert res.v_kv[1] == pytest.approx(8.7, abs=1e-12)


def test_tvr_raises_voltage_under_load():
    m = two_bus(2.0, 1.0, tvr=TVR)
    v = [solve_two_bus(m, 800.0, 300.0, n_tap=t).v_pu[1] for t in (-3, 0, 3)]
    assert v[0] < v[1] < v[2]


def test_zero_tap_is_bit_identical_to_no_tvr(feeder16_generous):
    c = feeder16_generous
    data = copy.deepcopy(c.data)
    data["tvr"] = None
    plain = model_from_dict(data)
    sol = CandidateSolution((0.1, -0.1, 0.2, 0.3, 0.0), 0, 1)
    for conf in list(c.configs)[::97]:
        a = solve(c.model, c.g, conf, sol, c.profiles)
        b = solve(plain, reduce_graph(plain), conf.bits, sol, c.profiles)
        assert np.array_equal(a.v_pu, b.v_pu) and np.array_equal(a.i_a, b.i_a)
        assert a.p_loss == b.p_loss


def test_non_radial_rejected(feeder16):
    with pytest.raises(NonRadialError):
        solve(feeder16.model, feeder16.g, "1" * 17, CandidateSolution((0.0,) * 5), feeder16.profiles)


def test_tap_outside_set(feeder16):
    with pytest.raises(PowerFlowError):
        solve(feeder16.model, feeder16.g, feeder16.configs[1], CandidateSolution((0.0,) * 5, 4), feeder16.profiles)


def test_open_branches_carry_no_current(feeder16):
    c = feeder16
    conf = c.configs[5]
    res = solve(c.model, c.g, conf, CandidateSolution((0.0,) * 5), c.profiles)
    open_edges = {e.branch for e, b in zip(c.g.edges, conf.bits) if b == "0"}
    for bid, i in zip(res.branch_ids, res.i_a):
        if bid in open_edges:
            assert i == 0.0


def test_random_radial_fixtures_kirchhoff_and_losses():
    rng = np.random.default_rng(7)
    for _ in range(50):
        data, profiles = random_radial_feeder(rng, n_buses=int(rng.integers(3, 20)), n_gens=2)
        m = model_from_dict(data)
        phases = tuple(float(x) for x in rng.uniform(-0.3, 0.5, 2))
        res = solve(m, reduce_graph(m), "", CandidateSolution(phases), profiles)
        assert res.converged
        assert res.kcl_residual < 1e-8 and res.kvl_residual < 1e-8
        assert losses_identity_check(res) <= 1e-6 * max(res.p_loss, 1e-12)
        assert res.p_loss >= 0
        assert np.all(np.isfinite(res.v_pu)) and np.all(np.isfinite(res.i_a))


def test_doubling_load_increases_losses(feeder16_generous):
    c = feeder16_generous
    sol = CandidateSolution((0.0,) * 5, 0, 3)
    base = solve(c.model, c.g, c.configs[3], sol, c.profiles)
    doubled = {k: ((2 * p, q) if k.startswith("load_") else (p, q)) for k, (p, q) in c.profiles.items()}
    heavy = solve(c.model, c.g, c.configs[3], sol, doubled)
    assert heavy.p_loss > base.p_loss
    assert heavy.p_load == pytest.approx(2 * base.p_load)


def test_load_is_independent_of_parameters(feeder16_generous):
    c = feeder16_generous
    loads = {solve(c.model, c.g, c.configs[n], CandidateSolution(tuple(ph), t, n), c.profiles).p_load
             for n, ph, t in [(1, [0] * 5, 0), (50, [0.3] * 5, 3), (700, [-0.2] * 5, -2)]}
    assert len(loads) == 1


def test_batch_matches_scalar(feeder16):
    c = feeder16
    rng = np.random.default_rng(3)
    lo = np.array([g.phase_min for g in c.model.controllable_generators])
    hi = np.array([g.phase_max for g in c.model.controllable_generators])
    phases = rng.uniform(lo, hi, size=(25, 5))
    taps = rng.choice(np.array(c.model.tap_set), size=25)
    for n in (1, 200, 777):
        batch = solve_batch(c.model, c.g, c.configs[n], phases, taps, c.profiles)
        for k in range(25):
            one = solve(c.model, c.g, c.configs[n], CandidateSolution(tuple(phases[k]), int(taps[k]), n), c.profiles)
            assert batch.converged[k] and one.converged
            np.testing.assert_allclose(batch.v_pu[k], one.v_pu, atol=1e-8)
            np.testing.assert_allclose(batch.i_a[k], one.i_a, rtol=1e-6, atol=1e-6)
            assert batch.p_loss[k] == pytest.approx(one.p_loss, abs=1e-5)


def test_trace_files(tmp_path, chain):
    res = solve(chain.model, chain.g, chain.configs[1], CandidateSolution((0.1,)), chain.profiles)
    write_trace(res, tmp_path / "bus.csv", tmp_path / "branch.csv")
    bus = (tmp_path / "bus.csv").read_text(encoding="utf-8").splitlines()
    assert bus[0] == "bus_id,v_pu" and len(bus) == 6
    assert (tmp_path / "branch.csv").read_text(encoding="utf-8").splitlines()[0] == "branch_id,i_a"


def test_generator_reactive_power_follows_phase():
    # more reactive injection from the gensets lifts the lowest voltage
    m = model_from_dict(feeder16_network())
    g = reduce_graph(m)
    prof = at_hour(FEEDER16_LOADS, FEEDER16_GENS)
    bits = "111111" + "0" + "111111" + "00" + "1" + "0"
    lo = solve(m, g, bits, CandidateSolution((-0.2,) * 5), prof)
    hi = solve(m, g, bits, CandidateSolution((0.45, 0.45, 0.55, 0.64, 0.45)), prof)
    assert hi.v_pu.min() > lo.v_pu.min()
