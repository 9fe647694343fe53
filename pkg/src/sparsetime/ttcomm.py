"""Time-triggered communication on top of the global time.

TDMA slot tables, the bus guardian that contains babbling nodes, timed
output messages, and a sample/compute/actuate control loop whose stages are
phase-aligned on the global time (with an event-driven loop for comparison).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Sequence

from .engine import LocalTimer, Simulator
from .network import LinkModel, Message, Network, SharedMedium
from .simclock import ScenarioConfigError

GAP = None


class Verdict(enum.Enum):
    ALLOW = "allow"
    BLOCK = "block"


@dataclass(frozen=True)
class Slot:
    owner: str
    offset: int
    duration: int


@dataclass(frozen=True)
class TdmaSchedule:
    round_len: int
    slots: tuple[Slot, ...]
    guard_gap: int = 0

    def __post_init__(self):
        object.__setattr__(self, "slots", tuple(sorted(self.slots, key=lambda s: s.offset)))
        if self.round_len <= 0 or not self.slots:
            raise ScenarioConfigError("TDMA schedule needs a positive round and at least one slot")
        end = 0
        for s in self.slots:
            if s.duration <= 0 or s.offset < end:
                raise ScenarioConfigError(f"slot of {s.owner} at {s.offset} overlaps its predecessor")
            end = s.offset + s.duration + self.guard_gap
        if self.slots[-1].offset + self.slots[-1].duration > self.round_len:
            raise ScenarioConfigError("slots exceed the TDMA round")

    def validate(self, design_precision: int, granularity: int = 1) -> None:
        """Slots stay disjoint after inflating each by the precision on both sides."""
        for s in self.slots:
            if s.offset % granularity:
                raise ScenarioConfigError(f"slot offset {s.offset} not a multiple of g={granularity}")
        n = len(self.slots)
        for i, s in enumerate(self.slots):
            nxt = self.slots[(i + 1) % n]
            nxt_start = nxt.offset + (self.round_len if i + 1 == n else 0)
            gap = nxt_start - (s.offset + s.duration)
            if gap < 2 * design_precision or gap < self.guard_gap:
                raise ScenarioConfigError(
                    f"gap {gap} ns after slot of {s.owner} is below 2 x precision "
                    f"({2 * design_precision}) or the guard gap ({self.guard_gap})")

    def slot_owner(self, global_ts: int):
        phase = global_ts % self.round_len
        for s in self.slots:
            if s.offset <= phase < s.offset + s.duration:
                return s.owner
        return GAP

    def slots_of(self, owner: str) -> list[Slot]:
        return [s for s in self.slots if s.owner == owner]

    def next_slot_start(self, owner: str, global_ts: int) -> int:
        """First start of one of ``owner``'s slots at or after ``global_ts``."""
        base = global_ts - global_ts % self.round_len
        best = None
        for r in (0, 1):
            for s in self.slots_of(owner):
                t = base + r * self.round_len + s.offset
                if t >= global_ts and (best is None or t < best):
                    best = t
        if best is None:
            raise KeyError(f"{owner!r} owns no slot")
        return best


def slot_owner(schedule: TdmaSchedule, global_ts: int):
    return schedule.slot_owner(global_ts)


def guardian_check(schedule: TdmaSchedule, sender: str, ts: int, tolerance: int = 0,
                   duration: int = 0) -> Verdict:
    """Allow a transmission only if it fits inside one of the sender's slots,
    each widened by ``tolerance`` on both sides to absorb clock disagreement."""
    phase = ts % schedule.round_len
    R = schedule.round_len
    for s in schedule.slots_of(sender):
        for shift in (-R, 0, R):
            lo = s.offset - tolerance + shift
            hi = s.offset + s.duration + tolerance + shift
            if lo <= phase and phase + duration <= hi:
                return Verdict.ALLOW
    return Verdict.BLOCK


class BusGuardian:
    """Gatekeeper between one node and the shared medium, reading its own clock."""

    def __init__(self, sim: Simulator, schedule: TdmaSchedule, clock_id: str, tolerance: int):
        self.sim = sim
        self.schedule = schedule
        self.clock_id = clock_id
        self.tolerance = int(tolerance)
        self.blocked = 0

    def check(self, sender: str, duration: int = 0) -> Verdict:
        ts = self.sim.read(self.clock_id)
        return guardian_check(self.schedule, sender, ts, self.tolerance, duration)


class BusInterface:
    """A node's attachment to the shared medium, optionally guarded."""

    def __init__(self, sim: Simulator, net: Network, medium: SharedMedium, node: str,
                 tx_duration: int, guardian: BusGuardian | None = None):
        self.sim, self.net, self.medium = sim, net, medium
        self.node = node
        self.tx_duration = int(tx_duration)
        self.guardian = guardian
        self.sent = 0

    def send(self, kind: str, payload: dict | None = None, duration: int | None = None) -> bool:
        sim = self.sim
        if self.net.is_crashed(self.node):
            return False
        duration = self.tx_duration if duration is None else int(duration)
        frame = Message(self.node, None, kind, sim.read(self.node), dict(payload or {}),
                        self.net.new_id(), channel=self.medium.name)
        if self.guardian is not None and self.guardian.check(self.node, duration) is Verdict.BLOCK:
            self.guardian.blocked += 1
            sim.record(self.node, "guardian_block", msg_id=frame.id, kind=kind,
                       guardian_ts=sim.read(self.guardian.clock_id))
            return False
        self.medium.transmit(frame, duration)
        self.sent += 1
        return True

    def babble(self) -> None:
        self.send("babble")


class TdmaNode:
    """Sends one frame at the start of each of its slots, per its own clock."""

    def __init__(self, sim: Simulator, schedule: TdmaSchedule, iface: BusInterface,
                 start_round: int = 0, max_rounds: int | None = None):
        self.sim, self.schedule, self.iface = sim, schedule, iface
        self.start_round = start_round
        self.max_rounds = max_rounds
        self.rounds_done = 0

    def start(self) -> None:
        t0 = self.start_round * self.schedule.round_len
        self._arm(self.schedule.next_slot_start(self.iface.node, t0))

    def _arm(self, ts: int) -> None:
        self.sim.at_local(self.iface.node, ts, self._tick, ts)

    def _tick(self, ts: int) -> None:
        self.iface.send("data", {"slot_ts": ts})
        nxt = self.schedule.next_slot_start(self.iface.node, ts + 1)
        if nxt // self.schedule.round_len != ts // self.schedule.round_len:
            self.rounds_done += 1
            if self.max_rounds is not None and self.rounds_done >= self.max_rounds:
                return
        self._arm(nxt)


# -- timed output messages -------------------------------------------------

@dataclass(frozen=True)
class TimedOutputMessage:
    set_point: float
    act_at_global: int
    tag: str = ""


def deliver_timed_output(sim: Simulator, cs: str, msg: TimedOutputMessage,
                         on_actuate: Callable[[TimedOutputMessage], None]) -> LocalTimer | None:
    """Hold an early set-point until its actuation instant on ``cs``'s clock.

    A message arriving at or after its due instant is dropped and recorded
    as a deadline miss.
    """
    now_g = sim.read(cs)
    if now_g >= msg.act_at_global:
        sim.record(cs, "deadline_miss", act_at=msg.act_at_global, arrival_global=now_g, tag=msg.tag)
        return None

    def fire():
        sim.record(cs, "actuate", act_at=msg.act_at_global, tag=msg.tag, set_point=msg.set_point)
        on_actuate(msg)

    return sim.at_local(cs, msg.act_at_global, fire)


# -- control loops -----------------------------------------------------------

@dataclass(frozen=True)
class StageOffsets:
    """Global-time gaps between consecutive stages of one control cycle."""

    sample_to_compute: int
    compute_to_send: int
    send_to_actuate: int

    @property
    def compute(self) -> int:
        return self.sample_to_compute

    @property
    def send(self) -> int:
        return self.compute + self.compute_to_send

    @property
    def actuate(self) -> int:
        return self.send + self.send_to_actuate

    @property
    def dead_time(self) -> int:
        return self.actuate


def check_stage_offsets(offsets: StageOffsets, hop: LinkModel, tx_duration: int,
                        compute_duration: int, design_precision: int) -> None:
    need_compute = tx_duration + hop.d_max + design_precision
    need_send = offsets.compute + compute_duration
    need_act = offsets.send + tx_duration + hop.d_max + design_precision
    if offsets.compute < need_compute:
        raise ScenarioConfigError(f"compute offset {offsets.compute} < {need_compute}")
    if offsets.send < need_send:
        raise ScenarioConfigError(f"send offset {offsets.send} < {need_send}")
    if offsets.actuate < need_act:
        raise ScenarioConfigError(f"actuate offset {offsets.actuate} < {need_act}")


class PhaseAlignedLoop:
    """sample -> compute -> send -> actuate, every stage at a global instant.

    Cycle ``n`` samples at global ``n * period + sample_phase`` on the
    sensor; controller and actuator act at fixed offsets from that instant on
    their own clocks, so network jitter is absorbed by the waiting time.
    """

    def __init__(self, sim: Simulator, sensor: BusInterface, controller: BusInterface,
                 actuator: str, medium: SharedMedium, period: int, sample_phase: int,
                 offsets: StageOffsets, compute_duration: int = 0, cycles: int = 1,
                 first_cycle: int = 0):
        self.sim = sim
        self.sensor, self.controller, self.actuator = sensor, controller, actuator
        self.period, self.sample_phase = int(period), int(sample_phase)
        self.offsets = offsets
        self.compute_duration = int(compute_duration)
        self.cycles, self.first_cycle = cycles, first_cycle
        self.samples: dict[int, int] = {}
        self.actuations: dict[int, int] = {}
        self.overruns: list[tuple[int, str]] = []
        self._ctrl_inbox: set[int] = set()
        self._act_inbox: set[int] = set()
        medium.attach(controller.node, self._ctrl_rx)
        medium.attach(actuator, self._act_rx)

    def start(self) -> None:
        for n in range(self.first_cycle, self.first_cycle + self.cycles):
            base = n * self.period + self.sample_phase
            sim = self.sim
            sim.at_local(self.sensor.node, base, self._sample, n)
            sim.at_local(self.controller.node, base + self.offsets.compute, self._compute, n)
            sim.at_local(self.actuator, base + self.offsets.actuate, self._actuate, n)

    def _sample(self, n: int) -> None:
        self.samples[n] = self.sim.now
        self.sim.record(self.sensor.node, "sample", cycle=n, mode="aligned")
        self.sensor.send("sample", {"cycle": n})

    def _ctrl_rx(self, frame: Message, tx) -> None:
        if frame.kind == "sample":
            self._ctrl_inbox.add(frame.payload["cycle"])

    def _act_rx(self, frame: Message, tx) -> None:
        if frame.kind == "setpoint":
            self._act_inbox.add(frame.payload["cycle"])

    def _compute(self, n: int) -> None:
        if n not in self._ctrl_inbox:
            self.overruns.append((n, "compute"))
            self.sim.record(self.controller.node, "stage_overrun", cycle=n, stage="compute")
            return
        base = n * self.period + self.sample_phase
        self.sim.at_local(self.controller.node, base + self.offsets.send, self._send, n)

    def _send(self, n: int) -> None:
        self.controller.send("setpoint", {"cycle": n})

    def _actuate(self, n: int) -> None:
        if n not in self._act_inbox:
            self.overruns.append((n, "actuate"))
            self.sim.record(self.actuator, "stage_overrun", cycle=n, stage="actuate")
            return
        self.actuations[n] = self.sim.now
        dead = self.sim.now - self.samples[n]
        self.sim.record(self.actuator, "dead_time", cycle=n, mode="aligned", dead_time_ns=dead)

    def dead_times(self) -> list[int]:
        return [self.actuations[n] - self.samples[n] for n in sorted(self.actuations)]


class EventDrivenLoop:
    """Comparison loop: each stage fires on message arrival, no global offsets."""

    def __init__(self, sim: Simulator, net: Network, sensor: str, controller: str, actuator: str,
                 period: int, compute_duration: int = 0, cycles: int = 1, first_cycle: int = 0,
                 channel: str = "data"):
        self.sim, self.net = sim, net
        self.sensor, self.controller, self.actuator = sensor, controller, actuator
        self.period = int(period)
        self.compute_duration = int(compute_duration)
        self.cycles, self.first_cycle = cycles, first_cycle
        self.channel = channel
        self.samples: dict[int, int] = {}
        self.actuations: dict[int, int] = {}
        net.attach(controller, self._ctrl_rx, kind="ed_sample")
        net.attach(actuator, self._act_rx, kind="ed_setpoint")

    def start(self) -> None:
        for n in range(self.first_cycle, self.first_cycle + self.cycles):
            # free-running sensor timer; phase is irrelevant for dead time
            self.sim.at_local(self.sensor, n * self.period, self._sample, n, oscillator=True)

    def _sample(self, n: int) -> None:
        sim = self.sim
        self.samples[n] = sim.now
        sim.record(self.sensor, "sample", cycle=n, mode="unaligned")
        self.net.send(Message(self.sensor, self.controller, "ed_sample", sim.read(self.sensor),
                              {"cycle": n}, channel=self.channel))

    def _ctrl_rx(self, msg: Message, transit: int) -> None:
        self.sim.call_later(self.compute_duration, self._ctrl_send, msg.payload["cycle"])

    def _ctrl_send(self, n: int) -> None:
        sim = self.sim
        self.net.send(Message(self.controller, self.actuator, "ed_setpoint", sim.read(self.controller),
                              {"cycle": n}, channel=self.channel))

    def _act_rx(self, msg: Message, transit: int) -> None:
        n = msg.payload["cycle"]
        self.actuations[n] = self.sim.now
        self.sim.record(self.actuator, "dead_time", cycle=n, mode="unaligned",
                        dead_time_ns=self.sim.now - self.samples[n])

    def dead_times(self) -> list[int]:
        return [self.actuations[n] - self.samples[n] for n in sorted(self.actuations)]


def jitter(values: Sequence[int]) -> int:
    return max(values) - min(values) if values else 0
