"""Turn a validated :class:`Scenario` into a wired-up simulation."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from fractions import Fraction

from ..engine import Simulator, Streams
from ..network import FaultInjection, LinkModel, Network, SharedMedium
from ..simclock import ClockEnsemble, LocalClock, ScenarioConfigError, measure_precision
from ..sparse import SparseTimeBase
from ..sync import (ExternalSync, InternalSync, SyncConfig, TimeServer, external_precision_bound,
                    internal_precision_bound)
from ..ttcomm import Slot, TdmaSchedule
from .config import ConfigError, Scenario

log = logging.getLogger(__name__)

_DRIFT_STEPS = 1_000_000     # resolution of randomly drawn drifts, in units of rho_max
ENSEMBLE = "ENSEMBLE"        # cs_id used for ensemble-wide trace rows


def resolve_clocks(scenario: Scenario, seed: int) -> Scenario:
    """Replace ``"random"`` drifts and offsets by seeded concrete values."""
    rng = Streams(seed).get("config:clocks")
    out = []
    for c in scenario.clocks:
        drift, off = c.drift, c.offset_ns
        if drift == "random":
            drift = scenario.rho_max * Fraction(int(rng.integers(-_DRIFT_STEPS, _DRIFT_STEPS + 1)), _DRIFT_STEPS)
        if off == "random":
            off = int(rng.integers(0, scenario.initial_offset_ns + 1))
        out.append(dataclasses.replace(c, drift=drift, offset_ns=off))
    return dataclasses.replace(scenario, clocks=tuple(out), seed=seed)


@dataclass
class World:
    scenario: Scenario
    sim: Simulator
    net: Network
    members: list[str]
    design_precision: int
    granularity: int
    base: SparseTimeBase
    internal: InternalSync | None = None
    external: ExternalSync | None = None
    server: TimeServer | None = None
    schedule: TdmaSchedule | None = None
    medium: SharedMedium | None = None
    notes: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return self.scenario.horizon_ns

    def clock_faulty(self) -> set[str]:
        return {f.target for f in self.net.faults if f.kind in ("crash", "clock_drift_step", "clock_freeze")}

    def correct_members(self) -> list[str]:
        bad = self.clock_faulty()
        return [m for m in self.members if m not in bad]

    def precision_series(self, window: int, until: int | None = None) -> list[tuple[int, int, int]]:
        """(k, window_start, pi) for consecutive reference windows of length ``window``."""
        until = self.horizon if until is None else until
        ids = self.correct_members()
        if len(ids) < 2:
            return []
        out = []
        k = 0
        while (k + 1) * window <= until:
            p = measure_precision(self.sim.clocks, ids, (k * window, (k + 1) * window))
            out.append((k, k * window, p.pi_big))
            k += 1
        return out


def reading_error(link: LinkModel, g: int) -> Fraction:
    """Offset-estimate error: half the link jitter plus one granule of reading quantization."""
    return link.eps + g


def _design_precision(sc: Scenario, links: dict[str, LinkModel], g: int) -> int:
    if sc.sparse.design_precision_ns is not None:
        return sc.sparse.design_precision_ns
    mode = sc.sync.mode
    if mode in ("internal", "combined"):
        return internal_precision_bound(reading_error(links["sync"], g), sc.rho_max,
                                        sc.sync.resync_interval_ns, g)
    ext = sc.sync.external
    return external_precision_bound(reading_error(links["server"], g), sc.rho_max, ext.period_ns, g)


def build_world(scenario: Scenario, seed: int | None = None) -> World:
    seed = scenario.seed if seed is None else int(seed)
    sc = resolve_clocks(scenario, seed)
    ensemble = ClockEnsemble(LocalClock(c.id, c.drift, c.granularity_ns, c.offset_ns) for c in sc.clocks)
    sim = Simulator(seed, ensemble)
    links = {k: LinkModel(v.d_min_ns, v.d_max_ns, v.loss_prob) for k, v in sc.links}
    net = Network(sim, links)
    members = list(sc.sync.members) if sc.sync.members is not None else sc.clock_ids()
    g = max(c.granularity_ns for c in sc.clocks)
    dp = _design_precision(sc, links, g)

    sp = sc.sparse
    if sp.pi_ns is not None or sp.delta_ns is not None:
        d = SparseTimeBase.for_precision(dp, g, sp.epoch_ns)
        base = SparseTimeBase(sp.pi_ns or d.pi_perm, sp.delta_ns or d.delta_forb, sp.epoch_ns, g)
    else:
        base = SparseTimeBase.for_precision(dp, g, sp.epoch_ns)
    try:
        base.check_precision(dp)
    except ValueError as e:
        raise ConfigError(str(e), "sparse.delta_ns") from None

    world = World(sc, sim, net, members, dp, g, base)

    if sc.tdma is not None:
        t = sc.tdma
        try:
            world.schedule = TdmaSchedule(t.round_ns, tuple(Slot(s.owner, s.offset_ns, s.duration_ns)
                                                            for s in t.slots), t.guard_gap_ns)
            world.schedule.validate(dp, g)
        except ScenarioConfigError as e:
            raise ConfigError(str(e), "tdma.slots") from None
        if "bus" not in links:
            raise ConfigError("a TDMA schedule needs a 'bus' link model", "links")
        world.medium = SharedMedium(sim, links["bus"], name="bus")

    for f in sc.faults:
        net.inject(FaultInjection(f.target, f.kind, f.start_ns, f.end_ns, dict(f.params)))

    mode = sc.sync.mode
    if mode in ("internal", "combined"):
        R = sc.sync.resync_interval_ns
        window = sc.sync.collection_window_ns or min(R // 2, 2 * (dp + links["sync"].d_max))
        cfg = SyncConfig(R, sc.sync.max_faulty, int(reading_error(links["sync"], g)), mode, window)
        startup = max(R // 2, window)
        world.internal = InternalSync(sim, net, members, cfg, startup_window=startup)
        world.internal.start()
    if mode in ("external", "combined"):
        e = sc.sync.external
        world.server = TimeServer(e.accuracy_ns, e.availability, sim.rng("server:error"), e.knot_ns)
        world.external = ExternalSync(sim, net, world.server, members, e.period_ns, e.phase_ns,
                                      slew=(mode == "combined"), slew_ns=e.slew_ns)
        world.external.start()
    log.debug("built %s: %d clocks, design precision %d ns", sc.name, len(sc.clocks), dp)
    return world

