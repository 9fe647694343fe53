"""Reference timeline, drifting local clocks and precision measurement.

All times are integer nanoseconds on the omniscient reference timeline.  A
local clock is a piecewise-linear function of reference time; every change
(state step, rate change, injected fault) opens a new segment, so the full
reading history stays available and :func:`read_local` is a pure lookup.
"""

from __future__ import annotations

import bisect
import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence

RefNs = int


class ScenarioConfigError(ValueError):
    """Raised for inconsistent or unresolvable scenario parameters."""


class UnknownClockError(ScenarioConfigError, KeyError):
    pass


def as_fraction(x) -> Fraction:
    """Exact rational from int, Fraction, decimal string or float literal."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(str(x))


@dataclass(frozen=True)
class _Segment:
    start: int
    raw0: Fraction       # unfloored corrected reading at ``start``
    rate: Fraction       # d(reading)/d(t_ref)
    osc0: Fraction       # unfloored free-running oscillator count at ``start``
    osc_rate: Fraction


class LocalClock:
    """Drifting clock of one constituent system.

    At construction the reading is
    ``floor(((1 + drift_rho + rate_correction) * t_ref + state_offset) / g) * g``.
    Later corrections append segments that keep the reading a function of
    reference time only.
    """

    def __init__(self, owner: str, drift_rho=0, granularity: int = 1,
                 offset: int = 0, rate_correction=0):
        if granularity < 1:
            raise ScenarioConfigError(f"clock {owner}: granularity must be >= 1")
        self.owner = owner
        self.granularity = int(granularity)
        self._drift = as_fraction(drift_rho)
        self._rate_correction = as_fraction(rate_correction)
        self.state_offset = int(offset)
        self.frozen = False
        self.corrections: list[tuple[int, str, int]] = []
        self._segments = [_Segment(0, Fraction(self.state_offset),
                                   1 + self._drift + self._rate_correction,
                                   Fraction(0), 1 + self._drift)]
        self._starts = [0]
        self._listeners: list[Callable[[str], None]] = []

    # -- parameters ------------------------------------------------------
    @property
    def drift_rho(self) -> Fraction:
        return self._drift

    @property
    def rate_correction(self) -> Fraction:
        return self._rate_correction

    @property
    def boundaries(self) -> list[int]:
        """Reference instants at which the reading function changes."""
        return list(self._starts)

    # -- readings --------------------------------------------------------
    def _segment(self, at: int) -> _Segment:
        i = bisect.bisect_right(self._starts, at) - 1
        return self._segments[max(i, 0)]

    def raw(self, at: RefNs) -> Fraction:
        s = self._segment(at)
        return s.raw0 + s.rate * (at - s.start)

    def read(self, at: RefNs) -> int:
        if at < 0:
            raise ValueError("reference instant must be non-negative")
        g = self.granularity
        return (self.raw(at) // g) * g

    def read_oscillator(self, at: RefNs) -> int:
        """Free-running count, never touched by synchronization."""
        s = self._segment(at)
        g = self.granularity
        return ((s.osc0 + s.osc_rate * (at - s.start)) // g) * g

    def first_reaching(self, value: int, not_before: RefNs, oscillator: bool = False) -> int | None:
        """Smallest t >= not_before whose reading is >= value, assuming no
        further changes.  ``None`` when the clock is frozen below ``value``."""
        g = self.granularity
        target = -((-value) // g) * g
        s = self._segments[-1]
        if not_before < s.start:
            s = self._segment(not_before)
        if oscillator:
            v0, rate = s.osc0, s.osc_rate
        else:
            v0, rate = s.raw0, s.rate
        now_val = v0 + rate * (not_before - s.start)
        if now_val >= target:
            return not_before
        if rate <= 0:
            return None
        t = s.start + (target - v0) / rate
        ti = -((-t.numerator) // t.denominator)
        return max(ti, not_before)

    # -- mutation ----------------------------------------------------------
    def add_listener(self, fn: Callable[[str], None]) -> None:
        self._listeners.append(fn)

    def _append(self, at: int, raw0: Fraction, rate: Fraction, osc0: Fraction, osc_rate: Fraction) -> None:
        if at < self._starts[-1]:
            raise ValueError(f"clock {self.owner}: history is immutable (change at {at} "
                             f"before last change at {self._starts[-1]})")
        seg = _Segment(at, raw0, rate, osc0, osc_rate)
        if at == self._starts[-1]:
            self._segments[-1] = seg
        else:
            self._segments.append(seg)
            self._starts.append(at)
        for fn in self._listeners:
            fn(self.owner)

    def _state_at(self, at: int) -> tuple[Fraction, Fraction]:
        s = self._segments[-1]
        return s.raw0 + s.rate * (at - s.start), s.osc0 + s.osc_rate * (at - s.start)

    def _reopen(self, at: int, raw: Fraction, osc: Fraction) -> None:
        if self.frozen:
            rate = osc_rate = Fraction(0)
        else:
            rate, osc_rate = 1 + self._drift + self._rate_correction, 1 + self._drift
        self._append(at, raw, rate, osc, osc_rate)

    def step(self, at: RefNs, delta: int) -> None:
        """State correction: jump the reading by ``delta`` ns at ``at``."""
        raw, osc = self._state_at(at)
        self.state_offset += int(delta)
        self.corrections.append((at, "step", int(delta)))
        self._reopen(at, raw + int(delta), osc)

    def set_rate_correction(self, at: RefNs, rate_correction) -> None:
        raw, osc = self._state_at(at)
        self._rate_correction = as_fraction(rate_correction)
        self.corrections.append((at, "rate", 0))
        self._reopen(at, raw, osc)

    def set_drift(self, at: RefNs, drift_rho) -> None:
        """Change the oscillator drift (fault injection only)."""
        raw, osc = self._state_at(at)
        self._drift = as_fraction(drift_rho)
        self._reopen(at, raw, osc)

    def freeze(self, at: RefNs) -> None:
        raw, osc = self._state_at(at)
        self.frozen = True
        self._reopen(at, raw, osc)

    def unfreeze(self, at: RefNs) -> None:
        raw, osc = self._state_at(at)
        self.frozen = False
        self._reopen(at, raw, osc)


class ClockEnsemble:
    """Registry of the local clocks of one simulation."""

    def __init__(self, clocks: Iterable[LocalClock] = ()):
        self._clocks: dict[str, LocalClock] = {}
        self._listeners: list[Callable[[str], None]] = []
        for c in clocks:
            self.add(c)

    def add(self, clock: LocalClock) -> LocalClock:
        if clock.owner in self._clocks:
            raise ScenarioConfigError(f"duplicate clock id {clock.owner!r}")
        self._clocks[clock.owner] = clock
        clock.add_listener(self._notify)
        return clock

    def add_listener(self, fn: Callable[[str], None]) -> None:
        self._listeners.append(fn)

    def _notify(self, cs: str) -> None:
        for fn in self._listeners:
            fn(cs)

    def __getitem__(self, cs: str) -> LocalClock:
        try:
            return self._clocks[cs]
        except KeyError:
            raise UnknownClockError(f"unknown CS id {cs!r}") from None

    def __contains__(self, cs: str) -> bool:
        return cs in self._clocks

    def __iter__(self):
        return iter(self._clocks)

    def __len__(self) -> int:
        return len(self._clocks)

    def ids(self) -> list[str]:
        return list(self._clocks)

    def read_local(self, cs: str, at: RefNs) -> int:
        return self[cs].read(at)


def read_local(ensemble: ClockEnsemble, cs: str, at: RefNs) -> int:
    """Reading of ``cs`` at reference instant ``at`` (multiple of its granule)."""
    return ensemble.read_local(cs, at)


@dataclass(frozen=True)
class Precision:
    pi_big: int
    interval: tuple[int, int]
    at: int | None = None
    pair: tuple[str, str] | None = None


def sample_instants(clocks: Sequence[LocalClock], window: tuple[int, int]) -> list[int]:
    """Window endpoints plus both sides of every change inside the window."""
    start, end = window
    pts = {start, end}
    for c in clocks:
        lo = bisect.bisect_left(c._starts, start)
        hi = bisect.bisect_right(c._starts, end)
        for b in c._starts[lo:hi]:
            pts.add(b)
            if b - 1 >= start:
                pts.add(b - 1)
    return sorted(pts)


def measure_precision(ensemble: ClockEnsemble, members: Iterable[str],
                      window: tuple[int, int]) -> Precision:
    """Maximum pairwise reading difference of ``members`` over ``window``."""
    ids = list(dict.fromkeys(members))
    if len(ids) < 2:
        raise ValueError("precision needs an ensemble of at least two clocks")
    start, end = int(window[0]), int(window[1])
    if end < start:
        raise ValueError(f"empty window {window}")
    clocks = [ensemble[i] for i in ids]
    best, best_t, best_pair = -1, None, None
    for t in sample_instants(clocks, (start, end)):
        readings = [c.read(t) for c in clocks]
        hi = max(range(len(readings)), key=readings.__getitem__)
        lo = min(range(len(readings)), key=readings.__getitem__)
        spread = readings[hi] - readings[lo]
        if spread > best:
            best, best_t, best_pair = spread, t, (ids[hi], ids[lo])
    return Precision(best, (start, end), best_t, best_pair)


def drift_precision_oracle(drifts: Sequence, offsets: Sequence[int], window: tuple[int, int]) -> Fraction:
    """Closed-form precision of uncorrected, unfloored linear clocks."""
    best = Fraction(0)
    for (ri, oi), (rj, oj) in itertools.combinations(zip(drifts, offsets), 2):
        for t in window:
            d = abs((as_fraction(ri) - as_fraction(rj)) * t + oi - oj)
            best = max(best, d)
    return best
