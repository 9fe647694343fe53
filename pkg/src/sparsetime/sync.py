"""Establishing the global time.

Internal synchronization is a round-based fault-tolerant midpoint: at every
multiple of ``R`` on its own clock a CS broadcasts its reading, and shortly
afterwards it steps its clock by the trimmed midpoint of the offsets it
estimated.  External synchronization corrects each clock toward a trusted
time server; the combined mode runs both.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .engine import Simulator
from .network import LinkModel, Message, Network
from .simclock import LocalClock, ScenarioConfigError, as_fraction

log = logging.getLogger(__name__)

SYNC_MODES = ("none", "internal", "external", "combined")


class DegradedRound(RuntimeError):
    """Too few readings survived to run a covered fault-tolerant round."""


@dataclass(frozen=True)
class SyncConfig:
    resync_interval: int
    max_faulty: int = 0
    reading_error_eps: int = 0
    mode: str = "internal"
    collection_window: int | None = None

    def __post_init__(self):
        if self.mode not in SYNC_MODES:
            raise ScenarioConfigError(f"unknown sync mode {self.mode!r}")
        if self.resync_interval <= 0:
            raise ScenarioConfigError("resync interval must be positive")
        if self.max_faulty < 0 or self.reading_error_eps < 0:
            raise ScenarioConfigError("max_faulty and eps must be non-negative")

    def check_ensemble(self, n: int) -> None:
        if self.mode in ("internal", "combined") and n < 3 * self.max_faulty + 1:
            raise ScenarioConfigError(
                f"internal sync with f={self.max_faulty} needs >= {3 * self.max_faulty + 1} "
                f"clocks, got {n}")


def internal_precision_bound(eps, rho_max, resync_interval: int, granularity: int) -> int:
    """Steady-state precision bound 2*eps + 2*rho_max*R + g, rounded up."""
    b = 2 * as_fraction(eps) + 2 * as_fraction(rho_max) * resync_interval + granularity
    return -(-b.numerator // b.denominator)


def external_precision_bound(eps_ext, rho_max, period: int, granularity: int) -> int:
    b = 2 * as_fraction(eps_ext) + 2 * as_fraction(rho_max) * period + granularity
    return -(-b.numerator // b.denominator)


def _round_toward_zero(num: int, den: int) -> int:
    q = abs(num) // den
    return q if num >= 0 else -q


def ft_midpoint(estimates: Sequence[int], f: int) -> int:
    """Fault-tolerant midpoint of clock offset estimates.

    Drops the ``f`` smallest and ``f`` largest values and returns the
    midpoint of what remains, rounded toward zero.  Any ``f`` arbitrary
    entries cannot push the result outside the range of the correct ones.
    """
    n = len(estimates)
    if n < 2 * f + 1:
        raise DegradedRound(f"{n} readings, need {2 * f + 1} for f={f}")
    s = sorted(int(e) for e in estimates)
    kept = s[f:n - f]
    return _round_toward_zero(kept[0] + kept[-1], 2)


def offset_estimate(sender_ts: int, link: LinkModel, local_at_arrival: int) -> int:
    """Peer-minus-own offset from a one-way timestamped message.

    The transit time is compensated by the link's midpoint delay, so the
    estimate is off by at most (d_max - d_min) / 2 plus granule effects.
    """
    two = 2 * sender_ts + link.d_min + link.d_max - 2 * local_at_arrival
    return two // 2


def apply_internal_round(clocks: Mapping[str, LocalClock], estimates: Mapping[str, Sequence[int]],
                         f: int, at: int) -> dict[str, int | None]:
    """Step every clock by its fault-tolerant midpoint correction.

    ``estimates[cs]`` are the peer offsets seen by ``cs`` (its own zero
    reading included by the caller).  Degraded CSs get ``None`` and keep
    their state.
    """
    out: dict[str, int | None] = {}
    for cs, ests in estimates.items():
        try:
            c = ft_midpoint(ests, f)
        except DegradedRound:
            out[cs] = None
            continue
        clocks[cs].step(at, c)
        out[cs] = c
    return out


class TimeServer:
    """Trusted external time source.

    The served time is ``t_ref + e(t_ref)`` where the error ``e`` is a
    piecewise-linear interpolation of seeded knots drawn uniformly within
    ``+-accuracy_bound``, so it is common to all clients that query it at the
    same instant and varies slowly.
    """

    def __init__(self, accuracy_bound: int = 100, availability: Sequence[tuple[int, int]] | None = None,
                 rng=None, knot_ns: int = 1_000_000_000):
        self.accuracy_bound = int(accuracy_bound)
        self.availability = None if availability is None else [tuple(map(int, w)) for w in availability]
        self.knot_ns = int(knot_ns)
        self._rng = rng
        self._knots: list[int] = []

    def is_up(self, t: int) -> bool:
        if self.availability is None:
            return True
        return any(s <= t < e for s, e in self.availability)

    def _knot(self, i: int) -> int:
        while len(self._knots) <= i:
            if self._rng is None or self.accuracy_bound == 0:
                self._knots.append(0)
            else:
                a = self.accuracy_bound
                self._knots.append(int(self._rng.integers(-a, a + 1)))
        return self._knots[i]

    def error(self, t: int) -> int:
        i, r = divmod(t, self.knot_ns)
        e0, e1 = self._knot(i), self._knot(i + 1)
        return e0 + ((e1 - e0) * r) // self.knot_ns

    def served_time(self, t: int) -> int:
        return t + self.error(t)


def apply_external_sync(clock: LocalClock, served_ts: int, link: LinkModel, at: int) -> int:
    """Step ``clock`` toward a server timestamp received at ``at``; returns the step."""
    c = offset_estimate(served_ts, link, clock.read(at))
    clock.step(at, c)
    return c


class InternalSync:
    """Round-based fault-tolerant midpoint synchronization inside a simulation."""

    def __init__(self, sim: Simulator, net: Network, members: Sequence[str], config: SyncConfig,
                 channel: str = "sync", startup_window: int | None = None):
        self.sim, self.net = sim, net
        self.members = list(members)
        self.config = config
        self.channel = channel
        config.check_ensemble(len(self.members))
        R = config.resync_interval
        self.window = config.collection_window or R // 2
        self.startup_window = max(self.window, startup_window if startup_window is not None else R // 2)
        if self.window >= R:
            raise ScenarioConfigError("collection window must be shorter than the resync interval")
        # (cs, round) -> peer -> (sender_ts + d_mid, oscillator reading at arrival)
        self._inbox: dict[tuple[str, int], dict[str, tuple[Fraction, int]]] = {}
        self._evaluated: set[tuple[str, int]] = set()
        self.rounds: list[dict] = []

    def start(self, first_round: int = 1) -> None:
        R = self.config.resync_interval
        for cs in self.members:
            self.net.attach(cs, self._on_reading, kind="sync")
            self.sim.at_local(cs, first_round * R, self._broadcast, cs, first_round)

    def _window(self, k: int) -> int:
        return self.startup_window if k == 1 else self.window

    def _broadcast(self, cs: str, k: int) -> None:
        sim = self.sim
        R = self.config.resync_interval
        sim.at_local(cs, (k + 1) * R, self._broadcast, cs, k + 1)
        if self.net.is_crashed(cs):
            return
        ts = sim.read(cs)
        sim.record(cs, "sync_send", round=k, local_ns=ts)
        self.net.broadcast(cs, self.members, "sync", ts, {"round": k}, channel=self.channel)
        sim.at_local(cs, k * R + self._window(k), self._evaluate, cs, k)

    def _on_reading(self, msg: Message, transit: int) -> None:
        k = msg.payload["round"]
        key = (msg.dst, k)
        if key in self._evaluated:
            self.sim.record(msg.dst, "sync_late", round=k, src=msg.src)
            return
        link = self.net.link(self.channel, msg.src, msg.dst)
        osc = self.sim.read_oscillator(msg.dst)
        self._inbox.setdefault(key, {})[msg.src] = (msg.send_ts_global + link.d_mid, osc)

    def exchange_readings(self, cs: str, k: int) -> list[tuple[str, int]]:
        """Offset estimates ``cs`` holds for round ``k``, referred to now."""
        sim = self.sim
        local = sim.read(cs)
        osc_now = sim.read_oscillator(cs)
        out = []
        for peer, (compensated, osc_then) in self._inbox.get((cs, k), {}).items():
            est = compensated + (osc_now - osc_then) - local
            out.append((peer, est.numerator // est.denominator))
        return out

    def _evaluate(self, cs: str, k: int) -> None:
        sim = self.sim
        if self.net.is_crashed(cs):
            return
        readings = self.exchange_readings(cs, k)
        self._evaluated.add((cs, k))
        self._inbox.pop((cs, k), None)
        ests = [0] + [e for _, e in readings]
        try:
            c = ft_midpoint(ests, self.config.max_faulty)
        except DegradedRound:
            sim.record(cs, "sync_degraded", round=k, readings=len(ests))
            self.rounds.append({"cs": cs, "round": k, "t": sim.now, "correction": None})
            return
        sim.clocks[cs].step(sim.now, c)
        sim.record(cs, "sync_correction", round=k, correction_ns=c, readings=len(ests))
        self.rounds.append({"cs": cs, "round": k, "t": sim.now, "correction": c})


class ExternalSync:
    """Periodic broadcasts from a :class:`TimeServer` to every member.

    ``slew=False`` applies each correction as a state step.  With
    ``slew=True`` (used in combined mode) only a CS's first correction is a
    step; later ones are amortized over ``slew_ns`` through a temporary rate
    correction so that CSs receiving the broadcast at slightly different
    instants never open a gap the size of the common correction.
    """

    def __init__(self, sim: Simulator, net: Network, server: TimeServer, members: Sequence[str],
                 period: int, phase: int = 0, channel: str = "server", slew: bool = False,
                 slew_ns: int | None = None):
        self.sim, self.net, self.server = sim, net, server
        self.members = list(members)
        self.period, self.phase = int(period), int(phase)
        self.channel = channel
        self.slew = slew
        self.slew_ns = int(slew_ns or self.period // 2)
        self._synced: set[str] = set()
        self._slewing: set[str] = set()
        self.residuals: list[tuple[int, str, int]] = []

    def start(self) -> None:
        for cs in self.members:
            self.net.attach(cs, self._on_time, kind="time_server")
        first = self.phase if self.phase > 0 else self.period
        self.sim.schedule(first, self._emit)

    def _emit(self) -> None:
        sim = self.sim
        sim.call_later(self.period, self._emit)
        if not self.server.is_up(sim.now):
            sim.record("SERVER", "server_down")
            return
        served = self.server.served_time(sim.now)
        for cs in self.members:
            self.net.send(Message("SERVER", cs, "time_server", served, channel=self.channel))

    def _on_time(self, msg: Message, transit: int) -> None:
        sim, cs = self.sim, msg.dst
        if self.net.is_crashed(cs):
            return
        link = self.net.link(self.channel, msg.src, cs)
        clock = sim.clocks[cs]
        if not self.slew or cs not in self._synced:
            c = apply_external_sync(clock, msg.send_ts_global, link, sim.now)
            self._synced.add(cs)
            residual = clock.read(sim.now) - sim.now
            self.residuals.append((sim.now, cs, residual))
            sim.record(cs, "ext_sync", correction_ns=c, residual_ns=residual, mode="step")
            return
        if cs in self._slewing:
            sim.record(cs, "ext_skip", reason="slewing")
            return
        c = offset_estimate(msg.send_ts_global, link, clock.read(sim.now))
        self._slewing.add(cs)
        clock.set_rate_correction(sim.now, Fraction(c, self.slew_ns))
        sim.record(cs, "ext_sync", correction_ns=c, mode="slew")
        sim.call_later(self.slew_ns, self._end_slew, cs)

    def _end_slew(self, cs: str) -> None:
        sim = self.sim
        clock = sim.clocks[cs]
        clock.set_rate_correction(sim.now, 0)
        self._slewing.discard(cs)
        residual = clock.read(sim.now) - sim.now
        self.residuals.append((sim.now, cs, residual))
        sim.record(cs, "ext_slew_end", residual_ns=residual)


def correct_members(members: Iterable[str], faulty: Iterable[str]) -> list[str]:
    bad = set(faulty)
    return [m for m in members if m not in bad]
