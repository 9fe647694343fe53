"""Discrete-event simulation of a sparse global time base for systems of systems.

Drifting local clocks, fault-tolerant internal and external clock
synchronization, a sparse time base for consistent event ordering, and the
time-triggered and dependability services built from them.
"""

from .simclock import (ClockEnsemble, LocalClock, Precision, ScenarioConfigError, UnknownClockError,
                       measure_precision, read_local)
from .sparse import SparseTimeBase, agree_event, classify, next_permitted, sparse_order
from .sync import TimeServer, ft_midpoint, offset_estimate

__all__ = [
    "ClockEnsemble", "LocalClock", "Precision", "ScenarioConfigError", "UnknownClockError",
    "measure_precision", "read_local", "SparseTimeBase", "agree_event", "classify",
    "next_permitted", "sparse_order", "TimeServer", "ft_midpoint", "offset_estimate",
]

__version__ = "0.1.0"
