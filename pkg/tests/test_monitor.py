from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsetime.engine import Simulator
from sparsetime.monitor import (Failed, Healthy, IntegrityError, LifesignConfig, LifesignEmitter,
                                LifesignMonitor, LogRecord, Observation, Replica, ReplayFilter,
                                ReplayVerdict, TimeoutMonitor, Transaction, Validity, check_validity,
                                lifesign_detect, merge_logs, order_transactions, order_violations,
                                sequential_oracle, stamp)
from sparsetime.network import FaultInjection, LinkModel, Network
from sparsetime.scenarios.workloads import random_op
from sparsetime.simclock import ClockEnsemble, LocalClock, ScenarioConfigError
from sparsetime.sparse import SparseTimeBase

# -- life signs ------------------------------------------------------------------------

CFG = LifesignConfig(period=10_000, timeout_margin=3_000)


def test_lifesign_config_check():
    CFG.check(design_precision=1000, d_max=2000)
    with pytest.raises(ScenarioConfigError):
        CFG.check(design_precision=1001, d_max=2000)
    with pytest.raises(ScenarioConfigError):
        LifesignConfig(1000, 1000).check(0, 0)


def test_lifesign_detect_pure():
    assert lifesign_detect({1, 2, 3}, 33_000, CFG) == Healthy()
    assert lifesign_detect({1, 3}, 33_000, CFG) == Failed(23_000, 2)
    assert lifesign_detect({1, 2}, 32_999, CFG) == Healthy()                  # deadline of 3 not reached
    assert lifesign_detect({1}, 40_000, LifesignConfig(10_000, 3_000, 2)) == Failed(33_000, 3)


def lifesign_world(offsets, crash=None, seed=0, link=LinkModel(1000, 2000)):
    ids = ["M"] + [f"N{i}" for i in range(len(offsets) - 1)]
    sim = Simulator(seed, ClockEnsemble(LocalClock(c, offset=o) for c, o in zip(ids, offsets)))
    net = Network(sim, {"data": link})
    mon = LifesignMonitor(sim, "M", ids[1:], CFG, last=40)
    to = TimeoutMonitor(sim, "M", ids[1:], CFG.period + CFG.timeout_margin, start_at=CFG.period)

    def on_ls(msg, transit):
        mon.on_lifesign(msg)
        to.on_lifesign(msg)

    net.attach("M", on_ls, kind="lifesign")
    for n in ids[1:]:
        LifesignEmitter(sim, net, n, "M", CFG.period, last=40).start()
    if crash:
        net.inject(FaultInjection(crash[0], "crash", crash[1], 10**12))
    mon.start()
    sim.schedule(CFG.period, to.start)
    return sim, mon, to


def test_healthy_nodes_never_flagged():
    sim, mon, to = lifesign_world([0, 300, -200, 500])
    sim.run(400_000)
    assert mon.detections == {}


@given(t0=st.integers(15_000, 300_000))
@settings(max_examples=40, deadline=None)
def test_crash_detected_within_bound(t0):
    sim, mon, _ = lifesign_world([0, 300, -200, 500], crash=("N1", t0))
    sim.run(400_000)
    assert set(mon.detections) == {"N1"}
    ref_detect, _ = mon.detections["N1"]
    assert 0 < ref_detect - t0 <= CFG.period + CFG.timeout_margin


def test_restart_timeout_is_slower_on_average():
    worst_global = worst_timeout = 0
    for t0 in range(15_000, 300_000, 9_973):
        sim, mon, to = lifesign_world([0, 300, -200, 500], crash=("N2", t0))
        sim.run(400_000)
        worst_global = max(worst_global, mon.detections["N2"][0] - t0)
        worst_timeout = max(worst_timeout, to.detections["N2"] - t0)
    assert worst_timeout > worst_global


# -- temporal validity ------------------------------------------------------------------

def test_validity_boundary():
    obs = Observation("temp", 21.5, 1000, 500)
    assert check_validity(obs, 1000) is Validity.VALID
    assert check_validity(obs, 1499) is Validity.VALID
    assert check_validity(obs, 1500) is Validity.STALE


def test_cross_cs_disagreement_confined_to_band():
    """Producer and two consumers with clocks at most PI apart: verdicts only
    differ for true ages within PI + g of the validity length."""
    PI, g, L = 400, 10, 5000
    clocks = [LocalClock("P", granularity=g), LocalClock("C1", offset=PI, granularity=g),
              LocalClock("C2", offset=-PI // 2, granularity=g)]
    for t_obs in range(10_000, 10_100, 7):
        obs = Observation("x", 0, clocks[0].read(t_obs), L)
        for age in range(0, 2 * L, 13):
            verdicts = {check_validity(obs, c.read(t_obs + age)) for c in clocks}
            if not (L - PI - g <= age <= L + PI + g):
                assert len(verdicts) == 1, age


# -- transactions -----------------------------------------------------------------------

def test_order_examples():
    a, b, c = Transaction(9, "A", 0), Transaction(3, "B", 0), Transaction(3, "A", 4)
    assert order_transactions([a, b, c]) == [c, b, a]


def test_duplicate_is_noop_and_conflict_is_integrity_error():
    t = Transaction(3, "A", 1, ("deposit", "x", 5))
    assert order_transactions([t, t]) == [t]
    with pytest.raises(IntegrityError):
        order_transactions([t, Transaction(3, "A", 1, ("deposit", "x", 6))])
    r = Replica("R")
    assert r.receive(t) and not r.receive(t) and r.duplicates == 1


@given(seed=st.integers(0, 2**32), data=st.data())
def test_replicas_agree_with_sequential_oracle(seed, data):
    rng = np.random.default_rng(seed)
    accounts = ["a", "b"]
    txns = [Transaction(int(rng.integers(0, 20)), str(rng.choice(["O1", "O2", "O3"])), i,
                        random_op(rng, accounts)) for i in range(30)]
    stream1 = txns + txns[:10]
    stream2 = data.draw(st.permutations(txns + txns[5:]))
    r1, r2 = Replica("R1", {"a": 100, "b": 100}), Replica("R2", {"a": 100, "b": 100})
    for t in stream1:
        r1.receive(t)
    for t in stream2:
        r2.receive(t)
    assert r1.ordered() == r2.ordered()
    assert r1.state() == r2.state() == sequential_oracle(txns, {"a": 100, "b": 100})


# -- replay filter ------------------------------------------------------------------------

def test_replay_examples():
    f = ReplayFilter(1000, 100)
    assert f.check(1, 5000, 5010) is ReplayVerdict.ACCEPT
    assert f.check(1, 5000, 5020) is ReplayVerdict.REPLAY
    assert f.check(2, 5000, 6100) is ReplayVerdict.ACCEPT                # exactly W + PI old
    assert f.check(3, 5000, 6101) is ReplayVerdict.STALE
    assert f.check(1, 5000, 7000) is ReplayVerdict.STALE                 # evicted, stale rule covers it


def test_replay_after_window_rejected_on_every_cs():
    W, PI = 1000, 100
    offsets = [0, PI, -PI // 2 + 1, PI // 2]
    for delay in range(0, 3 * W, 7):
        verdicts = []
        for off in offsets:
            f = ReplayFilter(W, PI)
            assert f.check(42, 10_000, 10_000 + 500 + off) is ReplayVerdict.ACCEPT
            verdicts.append(f.check(42, 10_000, 10_000 + 500 + delay + off))
        assert all(v is not ReplayVerdict.ACCEPT for v in verdicts)
        if 500 + delay > W + 2 * PI:
            assert all(v is ReplayVerdict.STALE for v in verdicts)


# -- log merge ----------------------------------------------------------------------------

def test_merge_two_logs():
    base = SparseTimeBase(100, 200)
    a = stamp(base, "A", 0, 9 * base.cycle)
    b = stamp(base, "B", 0, 3 * base.cycle)
    assert [r.interval_index for r in merge_logs({"A": [a], "B": [b]})] == [3, 9]


def cascade(offsets, base, seed, n=100):
    rng = np.random.default_rng(seed)
    clocks = {f"S{i}": LocalClock(f"S{i}", offset=o) for i, o in enumerate(offsets)}
    logs = {s: [] for s in clocks}
    t = 1_000_000
    for i in range(n):
        t += int(rng.integers(0, 2 * base.cycle))
        src = f"S{int(rng.integers(0, len(offsets)))}"
        logs[src].append(stamp(base, src, len(logs[src]), clocks[src].read(t), f"e{i}", ref_time=t))
    return merge_logs(logs)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32), offs=st.lists(st.integers(0, 400), min_size=5, max_size=5))
def test_synced_cascade_never_inverted_beyond_cycle(seed, offs):
    base = SparseTimeBase(400, 800)                    # precision 400
    merged = cascade(offs, base, seed)
    assert order_violations(merged, base.cycle) == []


def test_free_running_cascade_has_violations():
    base = SparseTimeBase(400, 800)
    merged = cascade([0, 50_000, -30_000, 12_000, 90_000], base, 1)
    assert order_violations(merged, base.cycle)


def test_order_violations_oracle():
    def brute(merged, sep):
        return sum(1 for i in range(len(merged)) for j in range(i + 1, len(merged))
                   if merged[j].ref_time < merged[i].ref_time - sep)
    base = SparseTimeBase(400, 800)
    merged = cascade([0, 5_000, -3_000, 1_200, 9_000], base, 3)
    assert (len(order_violations(merged, base.cycle)) > 0) == (brute(merged, base.cycle) > 0)
    assert all(isinstance(r, LogRecord) for r in merged)


def test_merge_breaks_intra_interval_ties_by_timestamp():
    """Two events in one interval but more than one cycle apart in true time:
    ordering by source name alone would invert them."""
    base = SparseTimeBase(400, 800)
    x = stamp(base, "S9", 0, 50, ref_time=50)                       # clock exact
    y = stamp(base, "S0", 0, 1150, ref_time=1300)                   # clock 150 behind
    assert x.interval_index == y.interval_index == 0
    assert sorted([x, y], key=lambda r: (r.interval_index, r.source)) == [y, x]
    merged = merge_logs([[y], [x]])
    assert merged == [x, y] and order_violations(merged, base.cycle) == []
