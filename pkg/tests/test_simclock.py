from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsetime.engine import Simulator
from sparsetime.simclock import (ClockEnsemble, LocalClock, ScenarioConfigError, UnknownClockError,
                                 drift_precision_oracle, measure_precision, read_local)


def ens(*clocks):
    return ClockEnsemble(clocks)


# -- read_local ------------------------------------------------------------

def test_identity_clock():
    assert read_local(ens(LocalClock("A")), "A", 1000) == 1000


def test_linear_drift():
    e = ens(LocalClock("A", drift_rho="1e-4"))
    assert read_local(e, "A", 1_000_000_000) == 1_000_100_000


def test_floor_to_granule():
    e = ens(LocalClock("A", offset=250, granularity=100))
    assert read_local(e, "A", 430) == 600


def test_unknown_clock_is_config_error():
    with pytest.raises(UnknownClockError):
        read_local(ens(LocalClock("A")), "B", 0)
    assert issubclass(UnknownClockError, ScenarioConfigError)


def test_negative_instant_rejected():
    with pytest.raises(ValueError):
        LocalClock("A").read(-1)


def test_float_drift_is_exact_decimal():
    assert LocalClock("A", drift_rho=1e-4).drift_rho == Fraction(1, 10_000)


@given(rho=st.integers(-1000, 1000), off=st.integers(-10**6, 10**6), g=st.integers(1, 5000),
       rc=st.integers(-100, 100), t=st.integers(0, 10**12))
def test_reading_is_pure_function(rho, off, g, rc, t):
    drift, rate = Fraction(rho, 10**7), Fraction(rc, 10**8)
    c = LocalClock("A", drift, g, off, rate)
    expected = (((1 + drift + rate) * t + off) // g) * g
    assert c.read(t) == expected == c.read(t)
    assert c.read(t) % g == 0


@given(steps=st.lists(st.tuples(st.integers(0, 10**6), st.integers(-5000, 5000)), max_size=6),
       probes=st.lists(st.integers(0, 2 * 10**6), min_size=1, max_size=10))
def test_history_survives_later_corrections(steps, probes):
    """Reading at t is unaffected by corrections applied after t."""
    c = LocalClock("A", "1e-5", 1)
    t_prev = 0
    for dt, delta in steps:
        t = t_prev + dt
        before = {p: c.read(p) for p in probes if p < t}
        c.step(t, delta)
        assert all(c.read(p) == v for p, v in before.items())
        t_prev = t


def test_step_and_rate_correction_segments():
    c = LocalClock("A")
    c.step(100, 50)
    assert c.read(99) == 99 and c.read(100) == 150
    c.set_rate_correction(200, Fraction(1, 2))
    assert c.read(200) == 250 and c.read(202) == 253
    assert c.read_oscillator(300) == 300          # oscillator ignores synchronization
    with pytest.raises(ValueError):
        c.step(150, 1)                           # history is immutable


def test_freeze_and_first_reaching():
    c = LocalClock("A")
    c.freeze(100)
    assert c.read(10_000) == 100
    assert c.first_reaching(200, 100) is None
    c.unfreeze(500)
    assert c.read(600) == 200
    assert c.first_reaching(250, 600) == 650


@given(rho=st.integers(-100, 100), off=st.integers(0, 1000), g=st.integers(1, 100),
       value=st.integers(0, 10**7))
def test_first_reaching_is_minimal(rho, off, g, value):
    c = LocalClock("A", Fraction(rho, 10**4), g, off)
    t = c.first_reaching(value, 0)
    assert c.read(t) >= value
    assert t == 0 or c.read(t - 1) < value


# -- measure_precision ---------------------------------------------------------

def test_identical_perfect_clocks():
    assert measure_precision(ens(LocalClock("A"), LocalClock("B")), ["A", "B"], (0, 10**9)).pi_big == 0


def test_constant_offsets():
    e = ens(LocalClock("A"), LocalClock("B", offset=3000), LocalClock("C", offset=-2000))
    assert measure_precision(e, "ABC", (0, 10**6)).pi_big == 5000


def test_drift_only_matches_closed_form():
    drifts = ["1e-4", "-1e-4", "5e-5", "-2e-5"]
    e = ens(*(LocalClock(c, d) for c, d in zip("ABCD", drifts)))
    p = measure_precision(e, "ABCD", (0, 10**9))
    assert drift_precision_oracle(drifts, [0] * 4, (0, 10**9)) == 200_000
    assert p.pi_big == 200_000
    assert set(p.pair) == {"A", "B"} and p.at == 10**9


def test_precision_needs_two_clocks():
    with pytest.raises(ValueError):
        measure_precision(ens(LocalClock("A")), ["A"], (0, 1))


def test_samples_both_sides_of_a_step():
    a, b = LocalClock("A"), LocalClock("B")
    b.step(500, 40)
    b.step(501, -40)                             # a 1 ns spike only visible at the boundary
    assert measure_precision(ens(a, b), "AB", (0, 1000)).pi_big == 40


@settings(max_examples=200)
@given(rhos=st.lists(st.integers(-1000, 1000), min_size=2, max_size=5),
       offs=st.lists(st.integers(-10**5, 10**5), min_size=5, max_size=5),
       g=st.integers(1, 1000), w=st.integers(1, 10**10))
def test_uncorrected_precision_within_one_granule_of_oracle(rhos, offs, g, w):
    drifts = [Fraction(r, 10**7) for r in rhos]
    offs = offs[:len(drifts)]
    e = ens(*(LocalClock(f"C{i}", d, g, o) for i, (d, o) in enumerate(zip(drifts, offs))))
    measured = measure_precision(e, e.ids(), (0, w)).pi_big
    exact = drift_precision_oracle(drifts, offs, (0, w))
    assert abs(measured - exact) <= g


def test_reads_do_not_perturb_the_simulation():
    def run(extra_reads: bool):
        e = ens(LocalClock("A", "1e-4"), LocalClock("B", "-1e-4", 7))
        sim = Simulator(3, e)
        for t in range(0, 10_000, 997):
            sim.schedule(t, lambda: sim.record("A", "tick", a=sim.read("A"), b=sim.read("B")))
            if extra_reads:
                sim.schedule(t, lambda: [sim.read("B") for _ in range(3)])
        sim.run(20_000)
        return sim.trace.to_csv()
    assert run(False) == run(True)
