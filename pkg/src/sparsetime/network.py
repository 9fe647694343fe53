"""Simulated message fabric: bounded-delay lossy links, a shared broadcast
medium with collision detection, and first-class fault injection."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

from .engine import Simulator
from .simclock import ScenarioConfigError

FAULT_KINDS = ("crash", "babbling", "clock_drift_step", "clock_freeze")
# pairs that cannot be active on one target at the same time
_CONTRADICTORY = {
    frozenset({"crash", "babbling"}),
    frozenset({"clock_drift_step", "clock_freeze"}),
}


@dataclass(frozen=True)
class LinkModel:
    d_min: int
    d_max: int
    loss_prob: float = 0.0

    def __post_init__(self):
        if not 0 <= self.d_min <= self.d_max:
            raise ScenarioConfigError(f"link needs 0 <= d_min <= d_max, got {self.d_min}, {self.d_max}")
        if not 0.0 <= self.loss_prob <= 1.0:
            raise ScenarioConfigError(f"loss_prob {self.loss_prob} outside [0, 1]")

    @property
    def jitter(self) -> int:
        return self.d_max - self.d_min

    @property
    def d_mid(self) -> Fraction:
        return Fraction(self.d_min + self.d_max, 2)

    @property
    def eps(self) -> Fraction:
        """Reading error bound of midpoint delay compensation."""
        return Fraction(self.jitter, 2)


@dataclass
class Message:
    src: str
    dst: str | None
    kind: str
    send_ts_global: int
    payload: dict = field(default_factory=dict)
    id: int = 0
    channel: str = "data"

    def copy_to(self, dst: str) -> "Message":
        return Message(self.src, dst, self.kind, self.send_ts_global, dict(self.payload),
                       self.id, self.channel)


@dataclass(frozen=True)
class FaultInjection:
    target: str
    kind: str
    start: int
    end: int
    params: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if self.kind not in FAULT_KINDS:
            raise ScenarioConfigError(f"unknown fault kind {self.kind!r}")
        if self.end <= self.start:
            raise ScenarioConfigError(f"fault on {self.target}: empty window [{self.start}, {self.end})")

    def active(self, t: int) -> bool:
        return self.start <= t < self.end


class Network:
    """Point-to-point channels between CSs.

    Every ``(channel, src, dst)`` link owns one random stream; each message
    consumes exactly one loss draw and one delay draw, so the n-th message on
    a link always sees the same pair of draws for a given seed.
    """

    def __init__(self, sim: Simulator, channels: dict[str, LinkModel],
                 overrides: dict[tuple[str, str, str], LinkModel] | None = None):
        self.sim = sim
        self.channels = dict(channels)
        self.overrides = dict(overrides or {})
        self.handlers: dict[tuple[str, str | None], Callable[[Message, int], None]] = {}
        self.babble_handlers: dict[str, Callable[[], None]] = {}
        self.faults: list[FaultInjection] = []
        self._ids = itertools.count(1)
        self._saved_drift: dict[int, Fraction] = {}
        self.sent = self.delivered = self.lost = 0

    def link(self, channel: str, src: str, dst: str) -> LinkModel:
        m = self.overrides.get((channel, src, dst))
        if m is not None:
            return m
        try:
            return self.channels[channel]
        except KeyError:
            raise ScenarioConfigError(f"no link model for channel {channel!r}") from None

    def attach(self, cs: str, handler: Callable[[Message, int], None], kind: str | None = None) -> None:
        """Register ``handler(msg, transit_ns)`` for messages addressed to ``cs``.

        A handler bound to a message kind takes precedence over the catch-all.
        """
        self.handlers[(cs, kind)] = handler

    def new_id(self) -> int:
        return next(self._ids)

    # -- fault state -------------------------------------------------------
    def is_crashed(self, cs: str, t: int | None = None) -> bool:
        t = self.sim.now if t is None else t
        return any(f.target == cs and f.kind == "crash" and f.active(t) for f in self.faults)

    def faulty(self) -> set[str]:
        return {f.target for f in self.faults}

    # -- sending -----------------------------------------------------------
    def send(self, msg: Message) -> int | None:
        """Schedule delivery of ``msg`` now; returns delivery instant or None."""
        sim = self.sim
        if self.is_crashed(msg.src):
            sim.record(msg.src, "send_suppressed", msg_id=msg.id, kind=msg.kind)
            return None
        if not msg.id:
            msg.id = self.new_id()
        link = self.link(msg.channel, msg.src, msg.dst)
        rng = sim.rng(f"link:{msg.channel}:{msg.src}->{msg.dst}")
        u, d = rng.random(), int(rng.integers(link.d_min, link.d_max + 1))
        self.sent += 1
        if u < link.loss_prob:
            self.lost += 1
            sim.record(msg.src, "loss", dst=msg.dst, msg_id=msg.id, kind=msg.kind, channel=msg.channel)
            return None
        at = sim.now + d
        sim.schedule(at, self._deliver, msg, d)
        return at

    def broadcast(self, src: str, dsts, kind: str, send_ts_global: int,
                  payload: dict | None = None, channel: str = "data") -> list[Message]:
        out = []
        for dst in dsts:
            if dst == src:
                continue
            m = Message(src, dst, kind, send_ts_global, dict(payload or {}), channel=channel)
            self.send(m)
            out.append(m)
        return out

    def _deliver(self, msg: Message, transit: int) -> None:
        if self.is_crashed(msg.dst):
            self.sim.record(msg.dst, "drop_crashed", msg_id=msg.id, kind=msg.kind)
            return
        self.delivered += 1
        self.sim.record(msg.dst, "deliver", src=msg.src, msg_id=msg.id, kind=msg.kind,
                        channel=msg.channel, delay_ns=transit)
        handler = self.handlers.get((msg.dst, msg.kind)) or self.handlers.get((msg.dst, None))
        if handler is not None:
            handler(msg, transit)

    # -- fault injection ---------------------------------------------------
    def inject(self, fault: FaultInjection) -> None:
        sim = self.sim
        if fault.start < sim.now:
            raise ScenarioConfigError(f"fault window on {fault.target} starts in the past")
        if fault.kind in ("clock_drift_step", "clock_freeze") and fault.target not in sim.clocks:
            raise ScenarioConfigError(f"fault target {fault.target!r} has no clock")
        for other in self.faults:
            if other.target != fault.target:
                continue
            overlap = other.start < fault.end and fault.start < other.end
            if overlap and (other.kind == fault.kind
                            or frozenset({other.kind, fault.kind}) in _CONTRADICTORY):
                raise ScenarioConfigError(
                    f"contradictory faults on {fault.target}: {other.kind} and {fault.kind} overlap")
        self.faults.append(fault)
        sim.schedule(fault.start, self._activate, fault)
        sim.schedule(fault.end, self._deactivate, fault)

    def _activate(self, fault: FaultInjection) -> None:
        sim = self.sim
        sim.record(fault.target, "fault_start", fault=fault.kind)
        if fault.kind == "clock_drift_step":
            clock = sim.clocks[fault.target]
            self._saved_drift[id(fault)] = clock.drift_rho
            clock.set_drift(sim.now, fault.params["drift"])
        elif fault.kind == "clock_freeze":
            sim.clocks[fault.target].freeze(sim.now)
        elif fault.kind == "babbling":
            self._babble(fault)

    def _deactivate(self, fault: FaultInjection) -> None:
        sim = self.sim
        sim.record(fault.target, "fault_end", fault=fault.kind)
        if fault.kind == "clock_drift_step" and fault.params.get("revert", True):
            sim.clocks[fault.target].set_drift(sim.now, self._saved_drift.pop(id(fault)))
        elif fault.kind == "clock_freeze":
            sim.clocks[fault.target].unfreeze(sim.now)

    def _babble(self, fault: FaultInjection) -> None:
        if not fault.active(self.sim.now):
            return
        handler = self.babble_handlers.get(fault.target)
        if handler is not None:
            handler()
        else:
            self.sim.record(fault.target, "babble_attempt", routed=False)
        self.sim.call_later(int(fault.params.get("interval_ns", 1000)), self._babble, fault)


@dataclass
class Transmission:
    frame: Message
    start: int
    end: int
    collided: bool = False


class SharedMedium:
    """A single broadcast bus; overlapping transmissions corrupt each other."""

    def __init__(self, sim: Simulator, link: LinkModel, receivers=(), name: str = "bus"):
        self.sim = sim
        self.link = link
        self.name = name
        self.receivers = list(receivers)
        self.handlers: dict[str, Callable[[Message, Transmission], None]] = {}
        self._active: list[Transmission] = []
        self.collisions: list[tuple[int, tuple[str, ...]]] = []
        self.transmissions = 0
        self.delivered_frames = 0

    def attach(self, cs: str, handler: Callable[[Message, Transmission], None]) -> None:
        self.handlers[cs] = handler
        if cs not in self.receivers:
            self.receivers.append(cs)

    def transmit(self, frame: Message, duration: int) -> Transmission:
        sim = self.sim
        now = sim.now
        tx = Transmission(frame, now, now + int(duration))
        self._active = [a for a in self._active if a.end > now]
        self.transmissions += 1
        if self._active:
            senders = tuple(sorted({a.frame.src for a in self._active} | {frame.src}))
            for a in self._active:
                a.collided = True
            tx.collided = True
            self.collisions.append((now, senders))
            sim.record(frame.src, "collision", medium=self.name, senders=senders, msg_id=frame.id)
        self._active.append(tx)
        sim.record(frame.src, "tx_start", medium=self.name, msg_id=frame.id, kind=frame.kind,
                   duration_ns=int(duration))
        sim.schedule(tx.end, self._finish, tx)
        return tx

    def _finish(self, tx: Transmission) -> None:
        if tx.collided:
            return
        sim = self.sim
        rng = sim.rng(f"medium:{self.name}")
        d = int(rng.integers(self.link.d_min, self.link.d_max + 1))
        self.delivered_frames += 1
        sim.schedule(sim.now + d, self._deliver, tx, d)

    def _deliver(self, tx: Transmission, d: int) -> None:
        for cs in self.receivers:
            if cs == tx.frame.src:
                continue
            h = self.handlers.get(cs)
            if h is not None:
                h(tx.frame, tx)

    def collisions_involving(self, senders) -> int:
        senders = set(senders)
        return sum(1 for _, who in self.collisions if senders & set(who))
