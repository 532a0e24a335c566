import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dtlsduty.analytic import EngsetQuery, engset_call_congestion, engset_time_congestion
from dtlsduty.sessions import (ClientPopulation, SlotServer, engset_curve, max_sessions,
                               simulate_blocking)

Q = EngsetQuery(5, 3, 0.5)
CALL, TIME = engset_call_congestion(Q), engset_time_congestion(Q)
POP = ClientPopulation.from_rho(5, 0.5)


def test_max_sessions():
    assert max_sessions(1200, 400) == 3
    assert max_sessions(0, 400) == 0
    assert max_sessions(2000, 400) == 5
    with pytest.raises(ValueError):
        max_sessions(100, 0)


def test_slot_server_rejects_when_full():
    srv = SlotServer(2)
    assert srv.try_admit("a", 0.0, 5.0)
    assert srv.try_admit("b", 1.0, 3.0)
    before = list(srv.occupied)
    assert not srv.try_admit("c", 2.0, 9.0)
    assert srv.occupied == before                     # a blocked arrival changes nothing
    assert srv.try_admit("c", 3.0, 9.0)               # b released at t = 3


@given(st.integers(0, 4), st.lists(st.tuples(st.floats(0, 10), st.floats(0.01, 5)), max_size=40))
def test_slot_server_never_exceeds_capacity(r, arrivals):
    srv = SlotServer(r)
    for i, (t, hold) in enumerate(sorted(arrivals)):
        srv.try_admit(i, t, t + hold)
        assert len(srv.occupied) <= r


def test_population_validation():
    with pytest.raises(ValueError):
        ClientPopulation(0, 1.0)
    with pytest.raises(ValueError):
        ClientPopulation(3, -1.0)
    assert ClientPopulation.from_rho(5, 0.5, 2.0).lam == 1.0


def test_blocking_example():
    est = simulate_blocking(POP, 3, 20_000, seed=1)
    assert est.arrivals >= 10_000
    assert abs(est.call - CALL) < 4 * est.call_ci95
    assert abs(est.time - TIME) < 4 * est.time_ci95
    assert est.time > est.call                         # no PASTA for finite sources


@pytest.mark.filterwarnings("ignore:only .* arrivals")
def test_no_blocking_when_slots_cover_clients():
    est = simulate_blocking(ClientPopulation.from_rho(3, 2.0), 3, 2000, seed=4)
    assert est.blocked == 0 and est.call == 0.0


def test_saturation():
    est = simulate_blocking(ClientPopulation.from_rho(5, 50.0), 3, 2000, seed=2)
    assert est.time == pytest.approx(engset_time_congestion(EngsetQuery(5, 3, 50.0)), abs=0.01)
    assert est.time > 0.9


def test_short_horizon_warns():
    with pytest.warns(RuntimeWarning):
        simulate_blocking(POP, 3, 10.0, seed=0)


def test_argument_validation():
    with pytest.raises(ValueError):
        simulate_blocking(POP, -1, 10.0)
    with pytest.raises(ValueError):
        simulate_blocking(POP, 3, 0.0)


def test_coverage_over_100_seeds():
    hits_call = hits_time = 0
    for seed in range(100):
        c, t = simulate_blocking(POP, 3, 20_000, seed=seed).covers(CALL, TIME)
        hits_call += c
        hits_time += t
    assert hits_call >= 95
    assert hits_time >= 95


@pytest.mark.filterwarnings("ignore:only .* arrivals")
def test_seeded_runs_are_reproducible():
    a = simulate_blocking(POP, 3, 5000, seed=(3, 1))
    b = simulate_blocking(POP, 3, 5000, seed=(3, 1))
    assert a == b


def test_engset_curve_rows():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rows = engset_curve(5, 3, [0.25, 0.5], horizon=500.0, seed=1)
    assert [r["rho"] for r in rows] == [0.25, 0.5]
    assert rows[1]["time_congestion"] == pytest.approx(TIME)
    assert {"time_sim", "call_sim", "arrivals"} <= set(rows[0])
