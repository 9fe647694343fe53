from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sparsetime.engine import Simulator
from sparsetime.network import FaultInjection, LinkModel, Network
from sparsetime.simclock import ClockEnsemble, LocalClock, ScenarioConfigError, measure_precision
from sparsetime.sync import (DegradedRound, ExternalSync, InternalSync, SyncConfig, TimeServer,
                             apply_external_sync, apply_internal_round, ft_midpoint,
                             internal_precision_bound, offset_estimate)


def world(offsets, drifts=None, link=LinkModel(5000, 5100), seed=0, g=1):
    drifts = drifts or [0] * len(offsets)
    ids = [chr(ord("A") + i) for i in range(len(offsets))]
    e = ClockEnsemble(LocalClock(i, d, g, o) for i, d, o in zip(ids, drifts, offsets))
    sim = Simulator(seed, e)
    return sim, Network(sim, {"sync": link, "server": link}), ids


# -- ft_midpoint -------------------------------------------------------------

def test_midpoint_example():
    assert ft_midpoint([-4, -1, 0, 2, 100], 1) == 0


def test_midpoint_rounds_toward_zero():
    assert ft_midpoint([-3, 0], 0) == -1
    assert ft_midpoint([3, 0], 0) == 1


@given(c=st.integers(-10**9, 10**9), n=st.integers(1, 12))
def test_midpoint_of_constant(c, n):
    f = (n - 1) // 2
    assert ft_midpoint([c] * n, f) == c


def test_midpoint_needs_quorum():
    with pytest.raises(DegradedRound):
        ft_midpoint([1, 2], 1)


def test_containment_brute_force_adversary():
    """7 estimates, 2 adversarial: every placement of extreme values keeps the
    result inside the correct range."""
    rng = np.random.default_rng(11)
    extremes = [-10**12, -1, 0, 1, 10**12]
    for _ in range(200):
        correct = [int(x) for x in rng.integers(-10**6, 10**6, size=5)]
        lo, hi = min(correct), max(correct)
        for bad in itertools.product(extremes + correct[:2], repeat=2):
            assert lo <= ft_midpoint(correct + list(bad), 2) <= hi


# -- offset estimation -----------------------------------------------------------

def test_perfect_clocks_zero_estimate():
    assert offset_estimate(1000, LinkModel(300, 300), 1300) == 0


def test_estimate_within_eps():
    link = LinkModel(900, 1100)               # eps = 100
    for d in range(900, 1101):
        est = offset_estimate(10_000 + 500, link, 10_000 + d)   # peer ahead by 500
        assert 400 <= est <= 600


def test_estimates_match_link_delay_trace():
    sim, net, ids = world([0, 7000, -3000, 12000], link=LinkModel(5000, 6000), seed=4)
    sync = InternalSync(sim, net, ids, SyncConfig(1_000_000, 1, 500, "internal", 100_000))
    captured = []
    orig = sync.exchange_readings

    def spy(cs, k):
        out = orig(cs, k)
        captured.append((cs, k, sim.now, out))
        return out

    sync.exchange_readings = spy
    sync.start()
    sim.run(1_700_000)
    delays = {(r.detail["src"], r.cs): r.detail["delay_ns"] for r in sim.trace.select("deliver")
              if r.detail["kind"] == "sync"}
    sends = {r.cs: (r.t, r.detail["local_ns"]) for r in sim.trace.select("sync_send")}
    assert len(captured) == 4
    for cs, k, now, ests in captured:
        assert k == 1 and len(ests) == 3
        for peer, est in ests:
            t_send, ts = sends[peer]
            d = delays[(peer, cs)]
            arrival = t_send + d
            true = sim.clocks[peer].read(arrival) - sim.clocks[cs].read(arrival)
            assert est == (2 * true + 5000 + 6000 - 2 * d) // 2          # midpoint compensation error
            assert abs(est - true) <= 500


# -- internal rounds ---------------------------------------------------------------

def test_apply_round_steps_clocks():
    clocks = {"A": LocalClock("A"), "B": LocalClock("B", offset=100), "C": LocalClock("C", offset=40)}
    out = apply_internal_round(clocks, {"A": [0, 100, 40], "B": [0, -100, -60], "C": [0, -40, 60], }, 0, 10)
    assert out == {"A": 50, "B": -50, "C": 10}
    assert {c.read(10) for c in clocks.values()} == {60}
    assert apply_internal_round(clocks, {"A": [1]}, 1, 20) == {"A": None}


def test_perfect_clocks_zero_corrections():
    sim, net, ids = world([0, 0, 0, 0], link=LinkModel(1000, 1000))
    sync = InternalSync(sim, net, ids, SyncConfig(1_000_000, 1, 0, "internal"))
    sync.start()
    sim.run(10_000_000)
    assert sync.rounds and all(r["correction"] == 0 for r in sync.rounds)
    assert measure_precision(sim.clocks, ids, (0, 10_000_000)).pi_big == 0


def test_steady_state_bound_example():
    R = 100_000_000
    sim, net, ids = world([0, 9000, 3000, 15000], ["1e-4", "1e-4", "-1e-4", "-1e-4"],
                          LinkModel(50_000, 51_998), seed=2)
    sync = InternalSync(sim, net, ids, SyncConfig(R, 1, 1000, "internal", 100_000))
    sync.start()
    sim.run(20 * R)
    bound = internal_precision_bound(1000, "1e-4", R, 1)
    assert bound == 22_001
    assert measure_precision(sim.clocks, ids, (2 * R, 20 * R)).pi_big <= bound


def test_crashed_member_others_still_converge():
    R = 1_000_000
    sim, net, ids = world([0, 4000, 9000, 2000], ["1e-5", "-1e-5", "5e-6", "0"], seed=5)
    net.inject(FaultInjection("D", "crash", 0, 10**12))
    sync = InternalSync(sim, net, ids, SyncConfig(R, 1, 50, "internal", 20_000))
    sync.start()
    sim.run(30 * R)
    assert not sim.trace.select("sync_degraded")
    bound = internal_precision_bound(Fraction(50) + 1, "1e-5", R, 1)
    assert measure_precision(sim.clocks, ["A", "B", "C"], (2 * R, 30 * R)).pi_big <= bound


def test_lossy_round_is_skipped_and_flagged():
    sim, net, ids = world([0, 100, 200, 300], link=LinkModel(1000, 1000, loss_prob=1.0))
    sync = InternalSync(sim, net, ids, SyncConfig(1_000_000, 1, 0, "internal"))
    sync.start()
    sim.run(3_000_000)
    degraded = sim.trace.select("sync_degraded")
    assert degraded and all(r.detail["readings"] == 1 for r in degraded)
    assert all(sim.clocks[c].corrections == [] for c in ids)


def test_ensemble_size_rule():
    with pytest.raises(ScenarioConfigError):
        SyncConfig(10, 1, 0, "internal").check_ensemble(3)
    SyncConfig(10, 1, 0, "external").check_ensemble(1)
    with pytest.raises(ScenarioConfigError):
        SyncConfig(10, 0, 0, "bogus")


# -- external synchronization ------------------------------------------------------

def test_exact_server_perfect_link():
    c = LocalClock("A", offset=12_345)
    apply_external_sync(c, TimeServer(0).served_time(1000), LinkModel(200, 200), 1200)
    assert abs(c.read(1200) - 1200) <= 1


@given(d=st.integers(950, 1050), e=st.integers(-100, 100), off=st.integers(-10**6, 10**6))
def test_residual_within_accuracy_plus_jitter(d, e, off):
    c = LocalClock("A", offset=off)
    t_send = 10**6
    apply_external_sync(c, t_send + e, LinkModel(950, 1050), t_send + d)
    assert abs(c.read(t_send + d) - (t_send + d)) <= 150


@given(seed=st.integers(0, 2**32), t=st.integers(0, 10**11))
def test_server_error_within_bound(seed, t):
    s = TimeServer(100, rng=np.random.default_rng(seed), knot_ns=10**9)
    assert abs(s.served_time(t) - t) <= 100


def test_server_availability_windows():
    s = TimeServer(100, availability=[(0, 10), (50, 60)])
    assert s.is_up(0) and not s.is_up(10) and s.is_up(55) and not s.is_up(60)


def test_combined_mode_intermittent_server():
    """Server up 100 ms, down 500 ms (a scaled-down 10 s / 50 s duty cycle)."""
    R, P = 1_000_000, 10_000_000
    rng = np.random.default_rng(8)
    drifts = [Fraction(int(x), 10**11) for x in rng.integers(-10**6, 10**6, size=4)]
    sim, net, ids = world([0, 8000, 15000, 3000], drifts, LinkModel(5000, 5100), seed=8)
    net.channels["server"] = LinkModel(20_000, 20_100)
    up = [(0, 100_000_000), (600_000_000, 700_000_000)]
    server = TimeServer(100, up, sim.rng("server:error"))
    internal = InternalSync(sim, net, ids, SyncConfig(R, 1, 51, "combined", 20_000))
    external = ExternalSync(sim, net, server, ids, P, phase=100_000, slew=True)
    internal.start()
    external.start()
    sim.run(800_000_000)
    bound = internal_precision_bound(Fraction(50) + 1, "1e-5", R, 1)
    assert measure_precision(sim.clocks, ids, (2 * R, 800_000_000)).pi_big <= bound
    assert sim.trace.select("server_down")
    # accuracy while the server is up: served error + reading error + granule, plus the
    # drift a clock can accumulate over one external period and one slew
    acc_bound = 100 + 50 + 1 + 2 * Fraction(1, 10**5) * P
    for lo, hi in up:
        for t in range(lo + 2 * P, hi, 250_000):
            assert all(abs(sim.clocks[c].read(t) - t) <= acc_bound for c in ids), t
    assert all(abs(r) <= acc_bound for _, _, r in external.residuals)
