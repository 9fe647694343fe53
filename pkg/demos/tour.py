"""Run every built-in scenario once and print its headline numbers.

    python3 demos/tour.py [out_dir]

With an output directory, each run's trace, metrics and report are written
to ``out_dir/<scenario>/``.
"""

from __future__ import annotations

import sys
from pathlib import Path

from sparsetime.scenarios.report import report
from sparsetime.scenarios.runner import builtin_names, run

HEADLINES = {
    "internal_sync": lambda m: f"steady precision {m['precision']['steady_pi_max_ns']} ns "
                               f"(design {m['design_precision_ns']} ns)",
    "combined_sync": lambda m: f"precision {m['precision']['steady_pi_max_ns']} ns, "
                               f"granule {m['sparse']['granule_ns']} ns",
    "ski_race": lambda m: f"duration errors {m['race']['errors_ns']} ns (bound {m['race']['bound_ns']})",
    "grid_snapshot": lambda m: f"max sampling spread {m['snapshot']['max_spread_ns']} ns "
                               f"(bound {m['snapshot']['bound_ns']})",
    "robot_sync": lambda m: f"actuation spread {m['actuation']['max_spread_ns']} ns over "
                            f"{m['actuation']['network_jitter_ns']} ns network jitter",
    "tdma_control_loop": lambda m: f"dead-time jitter aligned {m['control_loop']['aligned']['jitter_ns']} ns, "
                                   f"event-driven {m['control_loop']['unaligned']['jitter_ns']} ns",
    "babbling_idiot": lambda m: f"{m['bus']['harmful_collisions']} harmful collisions, "
                                f"{m['bus']['guardian_blocks']} babble frames blocked",
    "lifesign_watch": lambda m: f"worst detection latency {m['lifesign']['max_latency_global_ns']} ns "
                                f"(timeout monitor {m['lifesign']['max_latency_timeout_ns']} ns, "
                                f"bound {m['lifesign']['bound_ns']})",
    "txn_ledger": lambda m: f"{m['ledger']['issued']} transactions, replicas {m['ledger']['states']}",
    "replay_attack": lambda m: f"{m['replay']['replays_accepted']} of {m['replay']['replays_total']} "
                               f"replays accepted",
    "log_merge": lambda m: f"order violations synchronized {m['log_merge']['violations_synchronized']}, "
                           f"free-running {m['log_merge']['violations_free_running']}",
}


def main() -> None:
    out_root = Path(sys.argv[1]) if len(sys.argv) > 1 else None
    for name in builtin_names():
        out = out_root / name if out_root else None
        res = run(name, out_dir=out)
        if out is not None:
            report(out)
        line = HEADLINES.get(name, lambda m: "")(res.metrics)
        print(f"{'ok  ' if res.ok else 'FAIL'} {name:18s} {line}")


if __name__ == "__main__":
    main()
