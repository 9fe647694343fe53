from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsetime.engine import Simulator
from sparsetime.network import FaultInjection, LinkModel, Message, Network, SharedMedium
from sparsetime.simclock import ClockEnsemble, LocalClock, ScenarioConfigError, measure_precision
from sparsetime.sync import InternalSync, SyncConfig, internal_precision_bound


def setup(link, ids=("A", "B"), seed=0):
    sim = Simulator(seed, ClockEnsemble(LocalClock(i) for i in ids))
    return sim, Network(sim, {"data": link})


def test_zero_jitter_delivery_instant():
    sim, net = setup(LinkModel(1000, 1000))
    got = []
    net.attach("B", lambda m, d: got.append(sim.now))
    sim.schedule(500, lambda: net.send(Message("A", "B", "data", 500)))
    sim.run(10_000)
    assert got == [1500]


def test_total_loss_never_delivers():
    sim, net = setup(LinkModel(10, 20, loss_prob=1.0))
    net.attach("B", lambda m, d: pytest.fail("delivered"))
    for t in range(0, 1000, 100):
        sim.schedule(t, lambda: net.send(Message("A", "B", "data", 0)))
    sim.run(10_000)
    assert len(sim.trace.select("loss")) == 10 and net.delivered == 0


def _deliveries(seed):
    sim, net = setup(LinkModel(100, 5000, loss_prob=0.3), seed=seed)
    got = []
    net.attach("B", lambda m, d: got.append((sim.now, m.id)))
    for t in range(0, 100_000, 1000):
        sim.schedule(t, lambda: net.send(Message("A", "B", "data", 0)))
    sim.run(10**6)
    return got


def test_seeded_rerun_identical():
    assert _deliveries(7) == _deliveries(7)
    assert _deliveries(7) != _deliveries(8)


@settings(max_examples=30, deadline=None)
@given(lo=st.integers(0, 10**6), span=st.integers(0, 10**6), seed=st.integers(0, 2**31))
def test_transit_within_bounds(lo, span, seed):
    sim, net = setup(LinkModel(lo, lo + span), seed=seed)
    transits = []
    net.attach("B", lambda m, d: transits.append(d))
    for t in range(0, 50):
        sim.schedule(t * 10, lambda: net.send(Message("A", "B", "data", 0)))
    sim.run(10**8)
    assert len(transits) == 50 and all(lo <= d <= lo + span for d in transits)


def test_link_streams_are_independent():
    """Extra traffic on one link never changes another link's draws."""
    def run(extra):
        sim, net = setup(LinkModel(100, 9000), ids=("A", "B", "C"), seed=3)
        got = []
        net.attach("B", lambda m, d: got.append(d))
        for t in range(0, 10_000, 100):
            sim.schedule(t, lambda: net.send(Message("A", "B", "data", 0)))
            if extra:
                sim.schedule(t, lambda: net.send(Message("A", "C", "data", 0)))
        sim.run(10**6)
        return got
    assert run(False) == run(True)


def test_link_model_validation():
    with pytest.raises(ScenarioConfigError):
        LinkModel(10, 5)
    with pytest.raises(ScenarioConfigError):
        LinkModel(0, 5, 1.5)
    assert LinkModel(900, 1100).eps == 100


# -- fault injection -------------------------------------------------------------

def test_crash_suppresses_sends_only_in_window():
    sim, net = setup(LinkModel(10, 10))
    got = []
    net.attach("B", lambda m, d: got.append(m.send_ts_global))
    net.inject(FaultInjection("A", "crash", 1000, 2000))
    for t in (500, 1500, 2500):
        sim.schedule(t, lambda t=t: net.send(Message("A", "B", "data", t)))
    sim.run(10_000)
    assert got == [500, 2500]
    assert len(sim.trace.select("send_suppressed")) == 1


def test_contradictory_faults_rejected():
    sim, net = setup(LinkModel(10, 10))
    net.inject(FaultInjection("A", "crash", 100, 200))
    with pytest.raises(ScenarioConfigError):
        net.inject(FaultInjection("A", "babbling", 150, 300))
    net.inject(FaultInjection("A", "babbling", 200, 300))       # adjacent is fine
    net.inject(FaultInjection("A", "clock_freeze", 100, 200))
    with pytest.raises(ScenarioConfigError):
        net.inject(FaultInjection("A", "clock_drift_step", 199, 300, {"drift": "1e-3"}))


def test_fault_window_in_past_rejected():
    sim, net = setup(LinkModel(10, 10))
    sim.run(500)
    with pytest.raises(ScenarioConfigError):
        net.inject(FaultInjection("A", "crash", 100, 1000))


def test_clock_faults_mutate_and_restore():
    sim, net = setup(LinkModel(10, 10))
    net.inject(FaultInjection("A", "clock_drift_step", 1000, 2000, {"drift": "1e-3"}))
    net.inject(FaultInjection("B", "clock_freeze", 1000, 2000))
    sim.run(3000)
    a, b = sim.clocks["A"], sim.clocks["B"]
    assert a.read(1000) == 1000 and a.read(2000) == 2001 and a.read(3000) == 3001
    assert b.read(1500) == 1000 and b.read(3000) == 2000


def test_babbling_attempts_at_configured_rate():
    sim, net = setup(LinkModel(10, 10))
    attempts = []
    net.babble_handlers["A"] = lambda: attempts.append(sim.now)
    net.inject(FaultInjection("A", "babbling", 1000, 2000, {"interval_ns": 100}))
    sim.run(5000)
    assert attempts == list(range(1000, 2000, 100))


def test_babbling_on_shared_medium_collides():
    sim, net = setup(LinkModel(10, 10), ids=("A", "B"))
    bus = SharedMedium(sim, LinkModel(5, 5))
    net.babble_handlers["B"] = lambda: bus.transmit(Message("B", None, "babble", 0), 300)
    net.inject(FaultInjection("B", "babbling", 0, 10_000, {"interval_ns": 1000}))
    for t in range(500, 10_000, 2000):
        sim.schedule(t, lambda: bus.transmit(Message("A", None, "data", 0), 600))
    sim.run(20_000)
    assert bus.collisions and all(set(s) == {"A", "B"} for _, s in bus.collisions)


def test_medium_delivers_only_clean_frames():
    sim, net = setup(LinkModel(10, 10), ids=("A", "B", "C"))
    bus = SharedMedium(sim, LinkModel(5, 5))
    got = []
    bus.attach("C", lambda f, tx: got.append(f.src))
    sim.schedule(0, lambda: bus.transmit(Message("A", None, "x", 0), 100))
    sim.schedule(50, lambda: bus.transmit(Message("B", None, "x", 0), 100))
    sim.schedule(1000, lambda: bus.transmit(Message("B", None, "x", 0), 100))
    sim.run(5000)
    assert got == ["B"] and len(bus.collisions) == 1


def test_frozen_clock_contained_by_midpoint():
    R = 1_000_000
    ids = "ABCD"
    sim = Simulator(2, ClockEnsemble(LocalClock(i, d, 1, o) for i, d, o in
                                     zip(ids, ["1e-5", "-1e-5", "5e-6", "0"], [0, 3000, 8000, 1000])))
    net = Network(sim, {"sync": LinkModel(5000, 5100)})
    net.inject(FaultInjection("D", "clock_freeze", 5 * R, 25 * R))
    InternalSync(sim, net, list(ids), SyncConfig(R, 1, 51, "internal", 20_000)).start()
    sim.run(30 * R)
    bound = internal_precision_bound(51, "1e-5", R, 1)
    assert measure_precision(sim.clocks, "ABC", (2 * R, 30 * R)).pi_big <= bound
    # the frozen clock itself is far away
    assert measure_precision(sim.clocks, "ABCD", (2 * R, 30 * R)).pi_big > 10 * bound
