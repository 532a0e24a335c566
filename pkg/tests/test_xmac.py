import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dtlsduty.dtls import RetransmitPolicy
from dtlsduty.mac.base import EngineParams
from dtlsduty.mac.xmac import (PreambleConfig, XmacEngine, expected_unicast_latency,
                               simulate_unicast, unicast_latency_mc)
from dtlsduty.mac.xmac import _attempt_moments
from dtlsduty.simcore import to_us

CFG = PreambleConfig()


def test_config_validation():
    with pytest.raises(ValueError):
        PreambleConfig(check_interval_ci=0)
    with pytest.raises(ValueError):
        PreambleConfig(strobe_duration=-1e-3)
    with pytest.raises(ValueError):
        PreambleConfig(early_ack_airtime=1e-3)          # longer than the strobe gap
    with pytest.raises(ValueError):
        PreambleConfig(check_duration=1e-3)             # too short to catch a strobe
    assert CFG.period == pytest.approx(1e-3)
    assert CFG.n_strobes * CFG.period == pytest.approx(CFG.check_interval_ci + CFG.period)


def test_expected_latency_examples():
    # early ack: mean half a CI plus strobe, ack and data airtime
    e = expected_unicast_latency(CFG, 1.0)
    assert e == pytest.approx(0.25 + CFG.strobe_duration + CFG.early_ack_airtime
                              + CFG.data_frame_airtime, abs=2e-3)
    # no early ack: the whole train always precedes the data
    full = PreambleConfig(early_ack=False)
    assert expected_unicast_latency(full, 1.0) == pytest.approx(
        0.5 + full.period + full.data_frame_airtime, rel=1e-9)
    assert expected_unicast_latency(CFG, 0.0) == math.inf
    with pytest.raises(ValueError):
        expected_unicast_latency(CFG, 1.5)


def test_loss_adds_geometric_timeout_term():
    q, ok = _attempt_moments(CFG, 0.9)
    p = RetransmitPolicy()
    # independent evaluation of sum_j (1-q)^j T(j-1) with capped doubling timeouts
    tail = sum((1 - q) ** j * p.timeout(j - 1) for j in range(1, 400))
    assert expected_unicast_latency(CFG, 0.9) == pytest.approx(ok + tail, rel=1e-9)
    # dominant term is (1-q)/q x 2 s when retries are rare
    assert expected_unicast_latency(CFG, 0.9) > ok + (1 - q) * 2.0


@pytest.mark.parametrize("pdr,n", [(1.0, 10_000), (0.9, 200_000), (0.7, 200_000)])
def test_monte_carlo_matches_closed_form(pdr, n):
    policy = RetransmitPolicy(max_retransmissions=60)     # make truncation negligible
    x = unicast_latency_mc(CFG, pdr, n, seed=5, policy=policy)
    assert np.isnan(x).sum() == 0
    assert np.mean(x) == pytest.approx(expected_unicast_latency(CFG, pdr, policy), rel=0.02)


def test_monte_carlo_without_early_ack():
    cfg = PreambleConfig(early_ack=False, check_interval_ci=0.25)
    x = unicast_latency_mc(cfg, 1.0, 10_000, seed=2)
    assert np.mean(x) == pytest.approx(expected_unicast_latency(cfg, 1.0), rel=0.02)


def test_event_driven_unicast_matches_closed_form():
    x = simulate_unicast(CFG, 1.0, 4000, seed=1)
    assert not np.isnan(x).any()
    assert x.mean() == pytest.approx(expected_unicast_latency(CFG, 1.0), rel=0.02)


def test_event_driven_single_attempt_success_probability():
    q, ok = _attempt_moments(CFG, 0.8)
    x = simulate_unicast(CFG, 0.8, 4000, seed=3)
    delivered = ~np.isnan(x)
    assert delivered.mean() == pytest.approx(q, abs=0.025)
    assert x[delivered].mean() == pytest.approx(ok, rel=0.04)


@pytest.mark.parametrize("ci", [0.125, 0.25, 0.5, 1.0])
def test_handshake_duration_oracle(ci):
    """Six flights each open with a uniform receiver phase; the four frames that
    queue behind another in the same flight wait one check interval; the crypto
    model adds 10 ms x 20 message-handlings = 0.2 s."""
    cfg = PreambleConfig(check_interval_ci=ci)
    oracle = 6 * expected_unicast_latency(cfg, 1.0) + 4 * ci + 0.2
    d = [XmacEngine(EngineParams(), cfg, (9, i)).run() for i in range(200)]
    assert all(r.completed for r in d)
    if ci <= 0.5:
        # every flight fits inside the 2 s initial timeout
        assert all(r.timer_fires == 0 and r.frames_originated == 10 for r in d)
    assert np.mean([r.duration_s for r in d]) == pytest.approx(oracle, rel=0.03)


def test_idle_duty_cycle_is_check_over_ci():
    eng = XmacEngine(EngineParams(hops=2), CFG, 4)
    eng.mac_setup()
    t_end = to_us(100.0)
    eng.mac_finalize(t_end)
    for n in eng.nodes:
        part = eng.logs[n].partition(t_end)
        assert part["listen"] / t_end == pytest.approx(CFG.check_duration / CFG.check_interval_ci,
                                                       rel=0.01)


@settings(max_examples=8)
@given(st.integers(0, 10_000), st.sampled_from([0.7, 0.9, 1.0]), st.integers(1, 3))
def test_timeline_invariants(seed, pdr, hops):
    cfg = PreambleConfig(check_interval_ci=0.25)
    eng = XmacEngine(EngineParams(hops=hops, pdr=(pdr,) * hops), cfg, seed)
    r = eng.run()
    bound = to_us(cfg.check_interval_ci + cfg.period)
    cw = to_us(cfg.check_duration)
    t_end = to_us(r.end_time_s)
    for n, log in eng.logs.items():
        # a strobe train never exceeds one check interval plus one strobe period
        assert all(b - a <= bound for a, b in log.radio["strobe"])
        # a node that is not addressed never stays up past its channel check
        assert all(b - a == cw for a, b in log.radio["listen"])
        part = log.partition(t_end)
        assert sum(part[s] for s in ("transmit", "receive", "listen", "sleep")) == t_end
    # a node receives only while a neighbour's train (strobes then data) is on air
    for n, log in eng.logs.items():
        trains = {}
        for m in eng.neighbors(n):
            ends = {a: b for a, b in eng.logs[m].radio["transmit"]}
            for a, b in eng.logs[m].radio["strobe"]:
                trains[(m, a)] = ends.get(b, b)
        for a, b in log.radio["receive"]:
            assert any(lo <= a and b <= hi for (_, lo), hi in trains.items())


def test_pdr1_no_timer_and_exact_frame_count():
    for i in range(20):
        r = XmacEngine(EngineParams(), CFG, (1, i)).run()
        assert r.completed and r.timer_fires == 0 and r.retransmissions == 0
        assert r.frames_originated == 10 and r.hop_transmissions == 10


def test_lost_data_is_recovered_only_by_the_dtls_timer():
    engines = [XmacEngine(EngineParams(pdr=(0.8,)), CFG, (2, i)) for i in range(60)]
    rs = [e.run() for e in engines]
    assert any(r.timer_fires > 0 for r in rs)
    for e, r in zip(engines, rs):
        # no link-layer retries: every originated frame goes on air exactly once,
        # unless it is still queued or mid-train when the run stops
        left = sum(len(q) for q in e.queues.values()) + sum(m.in_train for m in e.mac.values())
        assert r.hop_transmissions + left == r.frames_originated
        assert (r.frames_originated > 10) == (r.retransmissions > 0)
