"""Single-threaded discrete-event core.

The simulator owns the reference timeline (integer nanoseconds), the event
queue, named random streams and the trace.  Handlers never block; every
source of nondeterminism is a seeded stream obtained through
:meth:`Simulator.rng`.
"""

from __future__ import annotations

import csv
import heapq
import io
import zlib
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

import numpy as np

from .simclock import ClockEnsemble

TRACE_HEADER = ("ref_time_ns", "cs_id", "event_kind", "detail")


class Streams:
    """Named, independent, reproducible random streams.

    A stream is keyed by ``(seed, crc32(name))`` so adding or reordering
    consumers never perturbs the draws of an unrelated stream.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: dict[str, np.random.Generator] = {}

    def get(self, name: str) -> np.random.Generator:
        gen = self._streams.get(name)
        if gen is None:
            key = zlib.crc32(name.encode("utf-8"))
            gen = np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(key,)))
            self._streams[name] = gen
        return gen


def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (list, tuple)):
        return "|".join(_fmt(v) for v in value)
    return str(value)


@dataclass
class TraceRow:
    t: int
    cs: str
    kind: str
    detail: dict[str, Any]


class Trace:
    """Append-only event trace with a fixed CSV layout."""

    def __init__(self) -> None:
        self.rows: list[TraceRow] = []

    def record(self, t: int, cs: str, kind: str, /, **detail: Any) -> None:
        self.rows.append(TraceRow(int(t), cs, kind, detail))

    def select(self, kind: str | None = None, cs: str | None = None) -> list[TraceRow]:
        return [r for r in self.rows
                if (kind is None or r.kind == kind) and (cs is None or r.cs == cs)]

    def sorted_rows(self) -> list[TraceRow]:
        # stable: rows recorded at the same instant keep their causal order
        return sorted(self.rows, key=lambda r: r.t)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for r in self.sorted_rows():
            detail = ";".join(f"{k}={_fmt(v)}" for k, v in r.detail.items())
            writer.writerow((r.t, r.cs, r.kind, detail))
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())


def parse_detail(detail: str) -> dict[str, str]:
    if not detail:
        return {}
    out = {}
    for part in detail.split(";"):
        k, _, v = part.partition("=")
        out[k] = v
    return out


def read_trace_csv(path) -> list[TraceRow]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        if tuple(header) != TRACE_HEADER:
            raise ValueError(f"{path}: unexpected trace header {header}")
        return [TraceRow(int(t), cs, kind, parse_detail(d)) for t, cs, kind, d in reader]


@dataclass(order=True)
class Event:
    t: int
    seq: int
    fn: Callable = field(compare=False)
    args: tuple = field(compare=False, default=())
    cancelled: bool = field(compare=False, default=False)

    def cancel(self) -> None:
        self.cancelled = True


@dataclass
class LocalTimer:
    """Wake-up at a value of one clock's reading (corrected or raw oscillator)."""

    cs: str
    value: int
    fn: Callable
    args: tuple
    oscillator: bool = False
    event: Event | None = None
    done: bool = False

    def cancel(self) -> None:
        self.done = True
        if self.event is not None:
            self.event.cancel()


class Simulator:
    def __init__(self, seed: int = 0, clocks: ClockEnsemble | None = None):
        self.now = 0
        self.seed = int(seed)
        self.streams = Streams(seed)
        self.trace = Trace()
        self.clocks = clocks if clocks is not None else ClockEnsemble()
        self.clocks.add_listener(self._on_clock_change)
        self._queue: list[Event] = []
        self._seq = 0
        self._timers: dict[str, list[LocalTimer]] = {}
        self.events_executed = 0

    # -- reference-time scheduling -------------------------------------
    def schedule(self, at: int, fn: Callable, *args) -> Event:
        at = int(at)
        if at < self.now:
            raise ValueError(f"cannot schedule in the past ({at} < {self.now})")
        self._seq += 1
        ev = Event(at, self._seq, fn, args)
        heapq.heappush(self._queue, ev)
        return ev

    def call_later(self, delay: int, fn: Callable, *args) -> Event:
        return self.schedule(self.now + int(delay), fn, *args)

    def rng(self, name: str) -> np.random.Generator:
        return self.streams.get(name)

    def record(self, cs: str, kind: str, /, **detail: Any) -> None:
        self.trace.record(self.now, cs, kind, **detail)

    # -- local-clock views ---------------------------------------------
    def read(self, cs: str, at: int | None = None) -> int:
        return self.clocks.read_local(cs, self.now if at is None else at)

    def read_oscillator(self, cs: str, at: int | None = None) -> int:
        return self.clocks[cs].read_oscillator(self.now if at is None else at)

    def at_local(self, cs: str, value: int, fn: Callable, *args,
                 oscillator: bool = False) -> LocalTimer:
        """Run ``fn`` at the first reference instant where ``cs`` reads >= value.

        Corrections to the clock re-predict the wake-up, so the timer follows
        the clock through steps and rate changes.
        """
        timer = LocalTimer(cs, int(value), fn, args, oscillator)
        self._timers.setdefault(cs, []).append(timer)
        self._arm(timer)
        return timer

    def _arm(self, timer: LocalTimer) -> None:
        clock = self.clocks[timer.cs]
        t = clock.first_reaching(timer.value, self.now, oscillator=timer.oscillator)
        timer.event = None if t is None else self.schedule(t, self._fire, timer)

    def _fire(self, timer: LocalTimer) -> None:
        if timer.done:
            return
        timer.done = True
        timer.fn(*timer.args)

    def _on_clock_change(self, cs: str) -> None:
        pending = self._timers.get(cs)
        if not pending:
            return
        alive = [tm for tm in pending if not tm.done]
        self._timers[cs] = alive
        for tm in alive:
            if tm.event is not None:
                tm.event.cancel()
            self._arm(tm)

    # -- main loop -----------------------------------------------------
    def run(self, until: int) -> None:
        q = self._queue
        while q and q[0].t <= until:
            ev = heapq.heappop(q)
            if ev.cancelled:
                continue
            self.now = ev.t
            self.events_executed += 1
            ev.fn(*ev.args)
            if len(self._timers) and self.events_executed % 4096 == 0:
                self._compact_timers()
        self.now = max(self.now, int(until))

    def _compact_timers(self) -> None:
        for cs, pending in self._timers.items():
            self._timers[cs] = [tm for tm in pending if not tm.done]


def rows_to_dicts(rows: Iterable[TraceRow]) -> list[dict]:
    return [{"t": r.t, "cs": r.cs, "kind": r.kind, **r.detail} for r in rows]
