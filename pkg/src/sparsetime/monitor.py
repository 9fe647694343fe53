"""Dependability services built on the global time.

Life-sign failure detection, temporal validity of observations,
sparse-timestamp transaction ordering with deduplication, replay
filtering, and merging of per-CS event logs.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

from .engine import Simulator
from .network import Message, Network
from .simclock import ScenarioConfigError
from .sparse import SparseTimeBase


class IntegrityError(ValueError):
    """Two transactions share an id but carry different operations."""


# -- life signs ----------------------------------------------------------------

@dataclass(frozen=True)
class LifesignConfig:
    period: int
    timeout_margin: int
    misses_to_fail: int = 1

    def check(self, design_precision: int, d_max: int) -> None:
        if self.timeout_margin < design_precision + d_max:
            raise ScenarioConfigError(
                f"timeout margin {self.timeout_margin} < precision + d_max "
                f"({design_precision + d_max})")
        if self.timeout_margin >= self.period:
            raise ScenarioConfigError("timeout margin must be shorter than the life-sign period")

    def deadline(self, k: int) -> int:
        return k * self.period + self.timeout_margin


class Healthy(NamedTuple):
    pass


class Failed(NamedTuple):
    detected_at: int
    missing: int


def lifesign_detect(received: set[int], now_global: int, config: LifesignConfig,
                    first: int = 1) -> Healthy | Failed:
    """Verdict at ``now_global`` given the life-sign indices received so far.

    Failure is reported at the deadline of the ``misses_to_fail``-th
    consecutive missing life sign.
    """
    last_due = (now_global - config.timeout_margin) // config.period
    streak = 0
    for k in range(first, last_due + 1):
        if k in received:
            streak = 0
            continue
        streak += 1
        if streak >= config.misses_to_fail:
            return Failed(config.deadline(k), k)
    return Healthy()


class LifesignEmitter:
    """Sends life sign ``k`` at global instant ``k * period`` on the node's clock."""

    def __init__(self, sim: Simulator, net: Network, node: str, monitor: str, period: int,
                 first: int = 1, last: int | None = None, channel: str = "data"):
        self.sim, self.net = sim, net
        self.node, self.monitor = node, monitor
        self.period, self.first, self.last = period, first, last
        self.channel = channel

    def start(self) -> None:
        self.sim.at_local(self.node, self.first * self.period, self._emit, self.first)

    def _emit(self, k: int) -> None:
        if self.last is not None and k > self.last:
            return
        self.sim.at_local(self.node, (k + 1) * self.period, self._emit, k + 1)
        if self.net.is_crashed(self.node):
            return
        self.net.send(Message(self.node, self.monitor, "lifesign", self.sim.read(self.node),
                              {"k": k, "node": self.node}, channel=self.channel))


class LifesignMonitor:
    """Global-time detector: deadlines are the emission series plus a margin."""

    def __init__(self, sim: Simulator, monitor: str, nodes: Sequence[str], config: LifesignConfig,
                 first: int = 1, last: int | None = None):
        self.sim, self.monitor = sim, monitor
        self.nodes = list(nodes)
        self.config = config
        self.first, self.last = first, last
        self.received: dict[str, set[int]] = {n: set() for n in self.nodes}
        self.detections: dict[str, tuple[int, int]] = {}   # node -> (ref instant, global deadline)

    def on_lifesign(self, msg: Message) -> None:
        self.received.setdefault(msg.payload["node"], set()).add(msg.payload["k"])

    def start(self) -> None:
        self.sim.at_local(self.monitor, self.config.deadline(self.first), self._deadline, self.first)

    def _deadline(self, k: int) -> None:
        if self.last is not None and k > self.last:
            return
        sim = self.sim
        now_g = sim.read(self.monitor)
        for node in self.nodes:
            if node in self.detections:
                continue
            verdict = lifesign_detect(self.received[node], now_g, self.config, self.first)
            if isinstance(verdict, Failed):
                self.detections[node] = (sim.now, verdict.detected_at)
                sim.record(self.monitor, "failure_detected", node=node, mode="global",
                           missing=verdict.missing, deadline=verdict.detected_at)
        sim.at_local(self.monitor, self.config.deadline(k + 1), self._deadline, k + 1)


class TimeoutMonitor:
    """Comparison detector: a free-running timeout restarted on every arrival.

    The timer runs on the monitor's raw oscillator, so it shares no notion
    of time with the emitters.
    """

    def __init__(self, sim: Simulator, monitor: str, nodes: Sequence[str], timeout: int,
                 start_at: int = 0):
        self.sim, self.monitor = sim, monitor
        self.nodes = list(nodes)
        self.timeout = int(timeout)
        self.start_at = start_at
        self.detections: dict[str, int] = {}
        self._timers: dict = {}

    def start(self) -> None:
        osc = self.sim.read_oscillator(self.monitor, self.start_at)
        for node in self.nodes:
            self._restart(node, osc)

    def _restart(self, node: str, osc_now: int) -> None:
        old = self._timers.get(node)
        if old is not None:
            old.cancel()
        self._timers[node] = self.sim.at_local(self.monitor, osc_now + self.timeout, self._expire,
                                               node, oscillator=True)

    def on_lifesign(self, msg: Message) -> None:
        node = msg.payload["node"]
        if node not in self.detections:
            self._restart(node, self.sim.read_oscillator(self.monitor))

    def _expire(self, node: str) -> None:
        self.detections[node] = self.sim.now
        self.sim.record(self.monitor, "failure_detected", node=node, mode="timeout")


# -- temporal validity ---------------------------------------------------------

class Validity(enum.Enum):
    VALID = "valid"
    STALE = "stale"


@dataclass(frozen=True)
class Observation:
    entity: str
    value: object
    obs_ts_global: int
    validity_len: int


def check_validity(obs: Observation, now_global: int) -> Validity:
    return Validity.VALID if now_global - obs.obs_ts_global < obs.validity_len else Validity.STALE


# -- transactions ----------------------------------------------------------------

@dataclass(frozen=True)
class Transaction:
    sparse_ts: int
    origin: str
    seq: int
    op: tuple = ()

    @property
    def key(self) -> tuple[int, str, int]:
        return (self.sparse_ts, self.origin, self.seq)


def order_transactions(txns: Iterable[Transaction]) -> list[Transaction]:
    """Deduplicated total order on (sparse timestamp, origin, sequence number)."""
    seen: dict[tuple, Transaction] = {}
    for t in txns:
        prev = seen.get(t.key)
        if prev is None:
            seen[t.key] = t
        elif prev.op != t.op:
            raise IntegrityError(f"transaction {t.key} seen with different operations")
    return [seen[k] for k in sorted(seen)]


def apply_op(state: dict[str, int], op: tuple) -> None:
    kind = op[0]
    if kind == "deposit":
        _, acct, amt = op
        state[acct] = state.get(acct, 0) + amt
    elif kind == "withdraw":
        _, acct, amt = op
        if state.get(acct, 0) >= amt:
            state[acct] -= amt
    elif kind == "transfer":
        _, src, dst, amt = op
        if state.get(src, 0) >= amt:
            state[src] -= amt
            state[dst] = state.get(dst, 0) + amt
    elif kind == "interest":
        _, acct, pct = op
        state[acct] = state.get(acct, 0) * (100 + pct) // 100
    else:
        raise ValueError(f"unknown operation {kind!r}")


class Replica:
    """A replicated account store fed by an at-least-once transport."""

    def __init__(self, name: str, initial: Mapping[str, int] | None = None):
        self.name = name
        self.initial = dict(initial or {})
        self._log: dict[tuple, Transaction] = {}
        self.duplicates = 0

    def receive(self, txn: Transaction) -> bool:
        """Store ``txn``; a duplicate is a no-op and returns False."""
        prev = self._log.get(txn.key)
        if prev is not None:
            if prev.op != txn.op:
                raise IntegrityError(f"transaction {txn.key} seen with different operations")
            self.duplicates += 1
            return False
        self._log[txn.key] = txn
        return True

    def ordered(self) -> list[Transaction]:
        return order_transactions(self._log.values())

    def state(self) -> dict[str, int]:
        st = dict(self.initial)
        for t in self.ordered():
            apply_op(st, t.op)
        return st


def sequential_oracle(txns: Iterable[Transaction], initial: Mapping[str, int] | None = None) -> dict[str, int]:
    """Apply each distinct transaction once, in key order, with no shortcuts."""
    distinct = {}
    for t in txns:
        distinct.setdefault(t.key, t)
    st = dict(initial or {})
    for key in sorted(distinct):
        apply_op(st, distinct[key].op)
    return st


# -- replay protection ---------------------------------------------------------

class ReplayVerdict(enum.Enum):
    ACCEPT = "accept"
    REPLAY = "replay"
    STALE = "stale"


class ReplayFilter:
    """Accept each message id at most once inside its freshness window.

    A message older than ``window + design_precision`` (per the receiver's
    clock) is stale; ids are retained exactly that long, after which the
    stale rule covers them.
    """

    def __init__(self, window: int, design_precision: int):
        self.window = int(window)
        self.design_precision = int(design_precision)
        self._seen: dict[object, int] = {}

    @property
    def horizon(self) -> int:
        return self.window + self.design_precision

    def _evict(self, now_global: int) -> None:
        dead = [i for i, ts in self._seen.items() if now_global - ts > self.horizon]
        for i in dead:
            del self._seen[i]

    def check(self, msg_id, ts_global: int, now_global: int) -> ReplayVerdict:
        self._evict(now_global)
        if now_global - ts_global > self.horizon:
            return ReplayVerdict.STALE
        if msg_id in self._seen:
            return ReplayVerdict.REPLAY
        self._seen[msg_id] = ts_global
        return ReplayVerdict.ACCEPT


def replay_filter(msg: Message, now_global: int, flt: ReplayFilter) -> ReplayVerdict:
    return flt.check(msg.id, msg.send_ts_global, now_global)


# -- log merging -------------------------------------------------------------------

@dataclass(frozen=True)
class LogRecord:
    source: str
    seq: int
    global_ts: int
    interval_index: int
    event: str = ""
    ref_time: int | None = field(default=None, compare=False)


def stamp(base: SparseTimeBase, source: str, seq: int, global_ts: int, event: str = "",
          ref_time: int | None = None) -> LogRecord:
    return LogRecord(source, seq, global_ts, base.index(global_ts), event, ref_time)


def merge_key(r: LogRecord) -> tuple:
    return (r.interval_index, r.global_ts, r.source, r.seq)


def merge_logs(logs: Mapping[str, Iterable[LogRecord]] | Iterable[Iterable[LogRecord]]) -> list[LogRecord]:
    """One chronological log: by interval index, then global timestamp, then source."""
    parts = logs.values() if isinstance(logs, Mapping) else logs
    merged = [r for part in parts for r in part]
    merged.sort(key=merge_key)
    return merged


def order_violations(merged: Sequence[LogRecord], min_separation: int) -> list[tuple[LogRecord, LogRecord]]:
    """Pairs whose true instants differ by more than ``min_separation`` but
    appear in the wrong order (needs ``ref_time`` on every record)."""
    bad = []
    # a pair (i < j) is inverted iff ref_j < ref_i - min_separation
    running_max = None
    for r in merged:
        if running_max is not None and r.ref_time < running_max.ref_time - min_separation:
            bad.append((running_max, r))
        if running_max is None or r.ref_time > running_max.ref_time:
            running_max = r
    return bad
