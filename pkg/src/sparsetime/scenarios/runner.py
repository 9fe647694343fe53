"""Execute one scenario and write its trace, metrics and resolved config."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .config import Scenario, load_scenario
from .workloads import WORKLOADS, Outcome, resync_period
from .world import ENSEMBLE, World, build_world

log = logging.getLogger(__name__)

STEADY_FROM_WINDOW = 2   # windows before this index contain start-up convergence


def builtin_names() -> list[str]:
    pkg = resources.files("sparsetime.scenarios") / "builtin"
    return sorted(p.name[:-5] for p in pkg.iterdir() if p.name.endswith(".json"))


def builtin_path(name: str):
    return resources.files("sparsetime.scenarios") / "builtin" / f"{name}.json"


def load(spec) -> Scenario:
    """A :class:`Scenario`, a path to a JSON file, or the name of a built-in."""
    if isinstance(spec, Scenario):
        return spec
    path = Path(spec)
    if not path.exists() and str(spec) in builtin_names():
        return Scenario.from_json(builtin_path(str(spec)).read_text(encoding="utf-8"))
    return load_scenario(path)


@dataclass
class RunResult:
    world: World
    metrics: dict
    outcome: Outcome
    files: dict[str, str] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.metrics["ok"]

    @property
    def trace_csv(self) -> str:
        return self.files["trace.csv"]


def _precision(world: World, out: Outcome) -> dict | None:
    period = resync_period(world)
    if period is None:
        return None
    series = world.precision_series(period)
    if not series:
        return None
    for k, start, pi in series:
        world.sim.trace.record(start + period, ENSEMBLE, "precision", window=k, window_start_ns=start, pi_ns=pi)
    steady = [pi for k, _, pi in series if k >= STEADY_FROM_WINDOW]
    m = {
        "window_ns": period,
        "pi_max_ns": max(pi for _, _, pi in series),
        "steady_pi_max_ns": max(steady) if steady else None,
        "steady_from_window": STEADY_FROM_WINDOW,
        "windows": len(series),
    }
    if steady:
        out.checks["precision_within_design"] = max(steady) <= world.design_precision
    return m


def run(scenario, seed: int | None = None, out_dir=None) -> RunResult:
    sc = load(scenario)
    seed = sc.seed if seed is None else int(seed)
    world = build_world(sc, seed)
    outcome = WORKLOADS[sc.kind](world)
    sim = world.sim

    precision = _precision(world, outcome)
    base = world.base
    metrics = {
        "scenario": sc.name,
        "kind": sc.kind,
        "seed": seed,
        "horizon_ns": sc.horizon_ns,
        "design_precision_ns": world.design_precision,
        "granularity_ns": world.granularity,
        "sparse": {"pi_ns": base.pi_perm, "delta_ns": base.delta_forb, "granule_ns": base.cycle,
                   "epoch_ns": base.epoch},
        "precision": precision,
        "messages": {"sent": world.net.sent, "delivered": world.net.delivered, "lost": world.net.lost},
        "collisions": 0 if world.medium is None else len(world.medium.collisions),
        "events_executed": sim.events_executed,
        "trace_rows": len(sim.trace.rows),
    }
    if world.internal is not None:
        metrics["sync_degraded_rounds"] = sum(1 for r in world.internal.rounds if r["correction"] is None)
    metrics.update(outcome.metrics)
    metrics["checks"] = dict(sorted(outcome.checks.items()))
    metrics["ok"] = all(outcome.checks.values())

    files = {
        "trace.csv": sim.trace.to_csv(),
        "metrics.json": json.dumps(metrics, indent=2, sort_keys=True, default=str) + "\n",
        "scenario.json": world.scenario.to_json(),
        **outcome.files,
    }
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        for name, text in files.items():
            with open(os.path.join(out_dir, name), "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
    log.info("%s seed=%d ok=%s", sc.name, seed, metrics["ok"])
    return RunResult(world, json.loads(files["metrics.json"]), outcome, files)

