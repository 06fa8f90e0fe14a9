import numpy as np
import pytest

from gridreconf.fixtures import (
    CHAIN_GENS,
    CHAIN_LOADS,
    DEFAULT_HOUR,
    FEEDER16_GENS,
    FEEDER16_LOADS,
    FEEDER16_STRANGLED_IMAX,
    chain_network,
    feeder16_network,
    profile_rows,
)
from gridreconf.grid_model import model_from_dict
from gridreconf.topology import admissible_configurations, reduce_graph


def at_hour(loads, gens, hour=DEFAULT_HOUR):
    return {eid: (p, q) for ts, eid, p, q in profile_rows(loads, gens) if ts == hour}


class Case:
    def __init__(self, data, loads, gens):
        self.data = data
        self.model = model_from_dict(data)
        self.g = reduce_graph(self.model)
        self.configs = admissible_configurations(self.g)
        self.profiles = at_hour(loads, gens)


@pytest.fixture(scope="session")
def chain():
    return Case(chain_network(), CHAIN_LOADS, CHAIN_GENS)


@pytest.fixture(scope="session")
def feeder16():
    return Case(feeder16_network(hv2_imax=FEEDER16_STRANGLED_IMAX), FEEDER16_LOADS, FEEDER16_GENS)


@pytest.fixture(scope="session")
def feeder16_generous():
    return Case(feeder16_network(), FEEDER16_LOADS, FEEDER16_GENS)


def two_bus(r_ohm=0.0, x_ohm=0.0, kv=8.4, tvr=None, breaker=False):
    data = {
        "buses": [{"id": "HV", "kind": "HV", "nominal_kv": kv},
                  {"id": "MV", "kind": "MV", "nominal_kv": kv}],
        "branches": [{"id": "L1", "from": "HV", "to": "MV", "r_ohm": r_ohm, "x_ohm": x_ohm,
                      "imax_a": 500.0, "breaker": "VB1" if breaker else None}],
        "generators": [],
        "loads": [{"id": "load1", "bus": "MV"}],
        "tvr": tvr,
        "virtual_breakers": [{"id": "VB1", "switches": ["S1", "S2"]}] if breaker else [],
    }
    return model_from_dict(data)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
