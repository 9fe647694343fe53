"""Sparse global time base.

The global timeline is cut into cycles of ``pi_perm + delta_forb``
nanoseconds.  Cycle ``k`` starts with the half-open permitted interval
``[epoch + k*cycle, epoch + k*cycle + pi_perm)`` and ends with a forbidden
interval.  Controlled events are delayed into permitted intervals; events
outside a CS's sphere of control are mapped onto one by :func:`agree_event`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence


class ConflictingObservations(ValueError):
    """Observation spread too wide to stem from a single physical event."""


class IntervalClass(NamedTuple):
    permitted: bool
    k: int

    def __repr__(self) -> str:
        return f"{'Permitted' if self.permitted else 'Forbidden'}({self.k})"


def Permitted(k: int) -> IntervalClass:  # noqa: N802 - reads like the variant it builds
    return IntervalClass(True, k)


def Forbidden(k: int) -> IntervalClass:  # noqa: N802
    return IntervalClass(False, k)


class Order(enum.Enum):
    BEFORE = "before"
    SIMULTANEOUS = "simultaneous"
    AFTER = "after"


@dataclass(frozen=True)
class SparseTimeBase:
    pi_perm: int
    delta_forb: int
    epoch: int = 0
    granularity: int = 1

    def __post_init__(self):
        g = self.granularity
        if g < 1 or self.pi_perm < g:
            raise ValueError(f"permitted interval {self.pi_perm} shorter than granule {g}")
        if self.delta_forb <= 0:
            raise ValueError("forbidden interval must be positive")
        if self.pi_perm % g or self.delta_forb % g:
            raise ValueError("interval durations must be multiples of the granularity")

    @classmethod
    def for_precision(cls, design_precision: int, granularity: int = 1, epoch: int = 0) -> "SparseTimeBase":
        """Defaults: pi = max(g, precision), delta = 2 * precision, rounded up to granules."""
        g = granularity
        up = lambda v: -(-int(v) // g) * g  # noqa: E731
        return cls(up(max(g, design_precision)), max(up(2 * design_precision), g), epoch, g)

    def check_precision(self, design_precision: int) -> None:
        if self.delta_forb <= design_precision:
            raise ValueError(f"forbidden interval {self.delta_forb} must exceed the design "
                             f"precision {design_precision}")

    @property
    def cycle(self) -> int:
        return self.pi_perm + self.delta_forb

    def permitted_start(self, k: int) -> int:
        return self.epoch + k * self.cycle

    def index(self, global_ts: int) -> int:
        """Cycle index enclosing ``global_ts`` (floor to permitted start)."""
        return (global_ts - self.epoch) // self.cycle

    def classify(self, global_ts: int) -> IntervalClass:
        k, phase = divmod(global_ts - self.epoch, self.cycle)
        return IntervalClass(phase < self.pi_perm, k)

    def next_permitted(self, global_ts: int) -> int:
        k, phase = divmod(global_ts - self.epoch, self.cycle)
        if phase < self.pi_perm:
            return global_ts
        return self.permitted_start(k + 1)


def classify(base: SparseTimeBase, global_ts: int) -> IntervalClass:
    return base.classify(global_ts)


def next_permitted(base: SparseTimeBase, global_ts: int) -> int:
    return base.next_permitted(global_ts)


@dataclass(frozen=True)
class SparseEvent:
    interval_index: int
    source: str
    tag: str = ""
    base: SparseTimeBase | None = None


def sparse_order(e1: SparseEvent, e2: SparseEvent) -> Order:
    if e1.base is not None and e2.base is not None and e1.base != e2.base:
        raise ValueError("events stamped on different sparse time bases")
    if e1.interval_index == e2.interval_index:
        return Order.SIMULTANEOUS
    return Order.BEFORE if e1.interval_index < e2.interval_index else Order.AFTER


def sparse_stamp(base: SparseTimeBase, global_ts: int, source: str, tag: str = "") -> SparseEvent:
    return SparseEvent(base.index(global_ts), source, tag, base)


def lower_median(values: Sequence[int]) -> int:
    s = sorted(values)
    return s[(len(s) - 1) // 2]


def agree_event(observations: Iterable[tuple[str, int]], base: SparseTimeBase,
                max_spread: int | None = None) -> int:
    """Interval index all observers assign to one uncontrolled event.

    Depends only on the multiset of timestamps: the lower median, floored to
    the nearest permitted-interval start at or below it.
    """
    ts = [int(t) for _, t in observations]
    if not ts:
        raise ValueError("agreement needs at least one observation")
    if max_spread is not None and max(ts) - min(ts) > max_spread:
        raise ConflictingObservations(
            f"observation spread {max(ts) - min(ts)} exceeds {max_spread}")
    return base.index(lower_median(ts))
