"""Why the forbidden interval must exceed the precision.

Controlled events are emitted from several internally synchronized CSs at
instants when their own clock is inside a permitted interval.  With a
forbidden interval wider than the design precision, a lower interval index
always means an earlier true instant; shrinking it below the precision
lets clock disagreement invert the order.

    python3 demos/forbidden_interval_sweep.py
"""

from __future__ import annotations

import numpy as np

from sparsetime.scenarios.runner import run
from sparsetime.sparse import SparseTimeBase, sparse_stamp


def inversions(world, base, rng, trials=300, per_trial=8):
    clocks, members = world.sim.clocks, world.members
    lo, hi = 2 * world.scenario.sync.resync_interval_ns, world.scenario.horizon_ns
    bad = 0
    for _ in range(trials):
        centre = int(rng.integers(lo + 10 * base.cycle, hi - 10 * base.cycle))
        events = []
        while len(events) < per_trial:
            t = centre + int(rng.integers(0, 2 * base.cycle))
            src = members[int(rng.integers(0, len(members)))]
            ts = clocks[src].read(t)
            if base.classify(ts).permitted:
                events.append((t, sparse_stamp(base, ts, src)))
        bad += sum(1 for t1, a in events for t2, b in events
                   if a.interval_index < b.interval_index and not t1 < t2)
    return bad


def main() -> None:
    world = run("internal_sync").world
    dp = world.design_precision
    rng = np.random.default_rng(0)
    print(f"design precision {dp} ns")
    for frac in (0.125, 0.25, 0.5, 1.0, 1.5, 2.0):
        delta = int(dp * frac)
        base = SparseTimeBase(dp // 8, delta)
        print(f"  delta = {frac:5.3f} x precision ({delta:6d} ns): {inversions(world, base, rng):5d} inverted pairs")


if __name__ == "__main__":
    main()
