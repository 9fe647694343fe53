"""Use-case workloads run on top of a built :class:`World`.

Each workload wires its traffic into the world, runs the simulation to the
horizon and returns an :class:`Outcome`: a metrics dict, the named checks
that decide the exit status, and any extra output files.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Callable

from ..monitor import (LifesignConfig, LifesignEmitter, LifesignMonitor, ReplayFilter,
                       ReplayVerdict, Replica, TimeoutMonitor, Transaction, merge_logs, order_violations,
                       sequential_oracle, stamp)
from ..network import FaultInjection, Message
from ..simclock import ScenarioConfigError
from ..ttcomm import (BusGuardian, BusInterface, EventDrivenLoop, PhaseAlignedLoop, StageOffsets,
                      TdmaNode, TimedOutputMessage, check_stage_offsets, deliver_timed_output, jitter)
from .config import ConfigError
from .world import ENSEMBLE, World

log = logging.getLogger(__name__)


@dataclass
class Outcome:
    metrics: dict = field(default_factory=dict)
    checks: dict[str, bool] = field(default_factory=dict)
    files: dict[str, str] = field(default_factory=dict)


def resync_period(world: World) -> int | None:
    sc = world.scenario
    if sc.sync.mode in ("internal", "combined"):
        return sc.sync.resync_interval_ns
    if sc.sync.mode == "external":
        return sc.sync.external.period_ns
    return None


def warmup(world: World) -> int:
    """Reference instant after which the ensemble is in steady state."""
    w = world.scenario.workload.get("warmup_ns")
    if w is not None:
        return int(w)
    p = resync_period(world)
    return 0 if p is None else 3 * p


def _option(world: World, key: str, default=None, required: bool = False):
    wl = world.scenario.workload
    if key not in wl:
        if required:
            raise ConfigError(f"workload needs {key!r}", f"workload.{key}")
        return default
    return wl[key]


def _clock(world: World, cid: str, key: str) -> str:
    if cid not in world.sim.clocks:
        raise ConfigError(f"unknown clock {cid!r}", f"workload.{key}")
    return cid


# -- pure synchronization ----------------------------------------------------

def sync_only(world: World) -> Outcome:
    world.sim.run(world.horizon)
    out = Outcome()
    limit = _option(world, "granule_limit_ns")
    if limit is not None:
        out.checks["granule_below_limit"] = world.base.cycle < int(limit)
        out.metrics["granule_limit_ns"] = int(limit)
    return out


# -- duration measurement across CSs --------------------------------------------

def ski_race(world: World) -> Outcome:
    sim, g = world.sim, world.granularity
    a = _clock(world, _option(world, "start_cs", required=True), "start_cs")
    b = _clock(world, _option(world, "finish_cs", required=True), "finish_cs")
    D = int(_option(world, "duration_ns", required=True))
    races = int(_option(world, "races", 1))
    spacing = int(_option(world, "spacing_ns", 0))
    t0 = warmup(world)
    if t0 + (races - 1) * spacing + D >= world.horizon:
        raise ConfigError("races do not fit in the horizon", "workload.races")
    rng = sim.rng("workload:races")
    starts: dict[int, int] = {}
    finishes: dict[int, int] = {}

    def at_start(i):
        starts[i] = sim.read(a)
        sim.record(a, "race_start", race=i, global_ts=starts[i])

    def at_finish(i):
        finishes[i] = sim.read(b)
        sim.record(b, "race_finish", race=i, global_ts=finishes[i])

    for i in range(races):
        ts = t0 + i * spacing + int(rng.integers(0, max(g, 1) * 10))
        sim.schedule(ts, at_start, i)
        sim.schedule(ts + D, at_finish, i)
    sim.run(world.horizon)

    errors = []
    for i in range(races):
        measured = finishes[i] - starts[i]
        errors.append(measured - D)
        sim.trace.record(sim.now, b, "race_result", race=i, measured_ns=measured, error_ns=measured - D)
    bound = world.design_precision + 2 * g
    out = Outcome()
    out.metrics["race"] = {"true_duration_ns": D, "errors_ns": errors, "max_abs_error_ns": max(map(abs, errors)),
                           "bound_ns": bound}
    out.checks["duration_within_precision"] = all(abs(e) <= bound for e in errors)
    return out


# -- simultaneous sampling ---------------------------------------------------------

def grid_snapshot(world: World) -> Outcome:
    sim, g = world.sim, world.granularity
    snapshots = int(_option(world, "snapshots", 10))
    period = int(_option(world, "period_ns", required=True))
    stations = [_clock(world, c, "stations") for c in _option(world, "stations", world.members)]
    t0 = warmup(world)
    instants = [world.base.next_permitted(t0 + j * period) for j in range(snapshots)]
    if instants[-1] + period > world.horizon:
        raise ConfigError("snapshots do not fit in the horizon", "workload.snapshots")
    taken: dict[int, dict[str, int]] = {j: {} for j in range(snapshots)}

    def sample(j, cs):
        taken[j][cs] = sim.now
        sim.record(cs, "grid_sample", snapshot=j, global_ts=sim.read(cs), k=world.base.index(sim.read(cs)))

    for j, G in enumerate(instants):
        for cs in stations:
            sim.at_local(cs, G, sample, j, cs)
    sim.run(world.horizon)

    spreads = []
    for j in range(snapshots):
        ref = list(taken[j].values())
        spreads.append(max(ref) - min(ref))
        sim.trace.record(instants[j], ENSEMBLE, "grid_spread", snapshot=j, spread_ns=spreads[-1])
    bound = world.design_precision + g
    out = Outcome()
    out.metrics["snapshot"] = {"spreads_ns": spreads, "max_spread_ns": max(spreads), "bound_ns": bound,
                               "samples": sum(len(v) for v in taken.values())}
    out.checks["samples_within_precision"] = all(s <= bound for s in spreads)
    out.checks["all_stations_sampled"] = all(len(taken[j]) == len(stations) for j in range(snapshots))
    return out


# -- timed output messages to several actuators --------------------------------

def robot_sync(world: World) -> Outcome:
    sim, net, g = world.sim, world.net, world.granularity
    ctrl = _clock(world, _option(world, "controller", required=True), "controller")
    robots = [_clock(world, r, "robots") for r in _option(world, "robots", required=True)]
    commands = int(_option(world, "commands", 20))
    period = int(_option(world, "period_ns", required=True))
    lead = int(_option(world, "lead_ns", 0))
    data = net.link("data", ctrl, robots[0])
    t0 = warmup(world)
    acts: dict[int, dict[str, int]] = {n: {} for n in range(commands)}

    def on_cmd(msg: Message, transit: int):
        p = msg.payload
        tom = TimedOutputMessage(p["set_point"], p["act_at"], p["tag"])

        def actuated(m, cs=msg.dst, n=p["n"]):
            acts[n][cs] = sim.now

        deliver_timed_output(sim, msg.dst, tom, actuated)

    for r in robots:
        net.attach(r, on_cmd, kind="timed_output")

    def command(n):
        now_g = sim.read(ctrl)
        act_at = world.base.next_permitted(now_g + data.d_max + world.design_precision + g + lead)
        for r in robots:
            net.send(Message(ctrl, r, "timed_output", now_g,
                             {"n": n, "set_point": float(n), "act_at": act_at, "tag": f"cmd{n}"}))
        sim.record(ctrl, "command", n=n, act_at=act_at)

    for n in range(commands):
        sim.at_local(ctrl, t0 + n * period, command, n)
    sim.run(world.horizon)

    spreads = []
    for n in range(commands):
        if len(acts[n]) == len(robots):
            s = max(acts[n].values()) - min(acts[n].values())
            spreads.append(s)
            sim.trace.record(max(acts[n].values()), ENSEMBLE, "actuation_spread", n=n, spread_ns=s)
    misses = len(sim.trace.select("deadline_miss"))
    bound = world.design_precision + g
    out = Outcome()
    out.metrics["actuation"] = {"spreads_ns": spreads, "max_spread_ns": max(spreads, default=0),
                                "bound_ns": bound, "network_jitter_ns": data.jitter,
                                "deadline_misses": misses, "commands": commands}
    out.checks["spread_within_precision"] = all(s <= bound for s in spreads)
    out.checks["all_commands_actuated"] = len(spreads) == commands and misses == 0
    return out


# -- TDMA and phase-aligned control ---------------------------------------------

def _bus_interfaces(world: World, nodes) -> dict[str, BusInterface]:
    t = world.scenario.tdma
    gmap = dict(t.guardian_clocks)
    ifaces = {}
    for node in nodes:
        guardian = None
        if t.guardian != "none":
            clock_id = gmap.get(node, node) if t.guardian == "own_clock" else node
            guardian = BusGuardian(world.sim, world.schedule, clock_id, world.design_precision)
        ifaces[node] = BusInterface(world.sim, world.net, world.medium, node, t.tx_duration_ns, guardian)
    return ifaces


def _require_tdma(world: World) -> None:
    if world.schedule is None:
        raise ConfigError("this workload needs a 'tdma' section", "tdma")


def tdma_control_loop(world: World) -> Outcome:
    _require_tdma(world)
    sim, sched, g = world.sim, world.schedule, world.granularity
    t = world.scenario.tdma
    sensor = _clock(world, _option(world, "sensor", required=True), "sensor")
    controller = _clock(world, _option(world, "controller", required=True), "controller")
    actuator = _clock(world, _option(world, "actuator", required=True), "actuator")
    cycles = int(_option(world, "cycles", 50))
    compute_ns = int(_option(world, "compute_ns", 0))
    s_slot, c_slot = sched.slots_of(sensor)[0], sched.slots_of(controller)[0]
    hop = world.medium.link
    up = lambda v: -(-v // g) * g  # noqa: E731
    s2c = up(t.tx_duration_ns + hop.d_max + world.design_precision)
    c2s = (c_slot.offset - s_slot.offset) % sched.round_len - s2c
    s2a = up(t.tx_duration_ns + hop.d_max + world.design_precision)
    offsets = StageOffsets(s2c, c2s, s2a)
    try:
        check_stage_offsets(offsets, hop, t.tx_duration_ns, compute_ns, world.design_precision)
    except ScenarioConfigError as e:
        raise ConfigError(f"schedule cannot host the control loop: {e}", "tdma.slots") from None

    ifaces = _bus_interfaces(world, [sensor, controller])
    first = -(-warmup(world) // sched.round_len)
    aligned = PhaseAlignedLoop(sim, ifaces[sensor], ifaces[controller], actuator, world.medium,
                               sched.round_len, s_slot.offset, offsets, compute_ns, cycles, first)
    aligned.start()
    unaligned = None
    if world.scenario.has_link("data"):
        unaligned = EventDrivenLoop(sim, world.net, sensor, controller, actuator, sched.round_len,
                                    compute_ns, cycles, first)
        unaligned.start()
    sim.run(world.horizon)

    dt_a = aligned.dead_times()
    out = Outcome()
    m = {"configured_dead_time_ns": offsets.dead_time, "aligned": {"dead_times_ns": dt_a, "jitter_ns": jitter(dt_a)},
         "overruns": len(aligned.overruns), "bound_ns": world.design_precision + g}
    lower = compute_ns + hop.d_min
    out.checks["aligned_jitter_within_precision"] = jitter(dt_a) <= world.design_precision + g
    out.checks["no_stage_overrun"] = not aligned.overruns and len(dt_a) == cycles
    out.checks["dead_time_causal"] = all(d >= lower for d in dt_a)
    if unaligned is not None:
        dt_u = unaligned.dead_times()
        J = world.net.channels["data"].jitter
        m["unaligned"] = {"dead_times_ns": dt_u, "jitter_ns": jitter(dt_u), "network_jitter_ns": J}
        out.checks["unaligned_shows_network_jitter"] = jitter(dt_u) >= J // 2
    out.metrics["control_loop"] = m
    out.checks["no_collisions"] = not world.medium.collisions
    return out


def babbling_idiot(world: World) -> Outcome:
    _require_tdma(world)
    sim, sched = world.sim, world.schedule
    rounds = int(_option(world, "rounds", 100))
    owners = list(dict.fromkeys(s.owner for s in sched.slots))
    ifaces = _bus_interfaces(world, owners)
    first = -(-warmup(world) // sched.round_len)
    for o in owners:
        TdmaNode(sim, sched, ifaces[o], first, rounds).start()
        world.net.babble_handlers[o] = ifaces[o].babble
    sim.run(world.horizon)

    babblers = sorted({f.target for f in world.net.faults if f.kind == "babbling"})
    harmful = [c for c in world.medium.collisions if set(c[1]) - set(babblers)]
    blocks = sim.trace.select("guardian_block")
    false_blocks = [r for r in blocks if r.detail["kind"] != "babble"]
    t = world.scenario.tdma
    out = Outcome()
    out.metrics["bus"] = {"guardian": t.guardian, "babblers": babblers,
                          "collisions": len(world.medium.collisions), "harmful_collisions": len(harmful),
                          "guardian_blocks": len(blocks), "false_blocks": len(false_blocks),
                          "transmissions": world.medium.transmissions}
    if t.guardian == "none":
        if babblers:
            out.checks["babbler_disrupts_unguarded_bus"] = len(harmful) > 0
    else:
        out.checks["babbler_contained"] = not harmful
        out.checks["no_false_blocks"] = not false_blocks
    return out


# -- failure detection -----------------------------------------------------------

def lifesign_watch(world: World) -> Outcome:
    sim, net = world.sim, world.net
    monitor = _clock(world, _option(world, "monitor", required=True), "monitor")
    nodes = [c for c in _option(world, "nodes", [c for c in world.scenario.clock_ids() if c != monitor])]
    for c in nodes:
        _clock(world, c, "nodes")
    P = int(_option(world, "period_ns", required=True))
    data = net.channels["data"]
    margin = int(_option(world, "timeout_margin_ns", world.design_precision + data.d_max))
    cfg = LifesignConfig(P, margin, int(_option(world, "misses_to_fail", 1)))
    try:
        cfg.check(world.design_precision, data.d_max)
    except ScenarioConfigError as e:
        raise ConfigError(str(e), "workload.timeout_margin_ns") from None
    last = world.horizon // P - 1

    crashes = int(_option(world, "crashes", 0))
    lo, hi = _option(world, "crash_window_ns", [warmup(world), world.horizon - 3 * P])
    if crashes > len(nodes):
        raise ConfigError("more crashes than nodes", "workload.crashes")
    rng = sim.rng("workload:crashes")
    victims = [nodes[i] for i in sorted(rng.choice(len(nodes), size=crashes, replace=False))]
    crash_at = {v: int(rng.integers(lo, hi)) for v in victims}
    for v, t0 in crash_at.items():
        net.inject(FaultInjection(v, "crash", t0, world.horizon + 1))

    global_mon = LifesignMonitor(sim, monitor, nodes, cfg, 1, last)
    timeout_mon = TimeoutMonitor(sim, monitor, nodes, P + margin)

    def on_ls(msg, transit):
        global_mon.on_lifesign(msg)
        timeout_mon.on_lifesign(msg)

    net.attach(monitor, on_ls, kind="lifesign")
    for n in nodes:
        LifesignEmitter(sim, net, n, monitor, P, 1, last).start()
    global_mon.start()
    timeout_mon.start()
    sim.run(world.horizon)

    bound = P + world.design_precision + data.d_max
    lat_g, lat_t = {}, {}
    for v, t0 in crash_at.items():
        if v in global_mon.detections:
            lat_g[v] = global_mon.detections[v][0] - t0
            sim.trace.record(global_mon.detections[v][0], v, "detection_latency", mode="global",
                             latency_ns=lat_g[v])
        if v in timeout_mon.detections:
            lat_t[v] = timeout_mon.detections[v] - t0
            sim.trace.record(timeout_mon.detections[v], v, "detection_latency", mode="timeout",
                             latency_ns=lat_t[v])
    false_pos = sorted(n for n in global_mon.detections if n not in crash_at)
    out = Outcome()
    out.metrics["lifesign"] = {
        "period_ns": P, "timeout_margin_ns": margin, "bound_ns": bound,
        "crash_instants_ns": {v: crash_at[v] for v in victims},
        "latency_global_ns": lat_g, "latency_timeout_ns": lat_t,
        "max_latency_global_ns": max(lat_g.values(), default=0),
        "max_latency_timeout_ns": max(lat_t.values(), default=0),
        "timeout_exceeds_bound": any(v > bound for v in lat_t.values()),
        "false_positives": false_pos,
    }
    out.checks["all_crashes_detected"] = len(lat_g) == len(crash_at)
    out.checks["latency_within_bound"] = all(v <= bound for v in lat_g.values())
    out.checks["no_false_positives"] = not false_pos
    return out


# -- replicated transactions ---------------------------------------------------

_OPS = ("deposit", "withdraw", "transfer", "interest")


def random_op(rng, accounts: list[str]) -> tuple:
    kind = _OPS[int(rng.integers(0, len(_OPS)))]
    a = accounts[int(rng.integers(0, len(accounts)))]
    if kind == "transfer":
        b = accounts[int(rng.integers(0, len(accounts)))]
        return (kind, a, b, int(rng.integers(1, 500)))
    if kind == "interest":
        return (kind, a, int(rng.integers(1, 10)))
    return (kind, a, int(rng.integers(1, 500)))


def txn_ledger(world: World) -> Outcome:
    sim, net = world.sim, world.net
    origins = [_clock(world, c, "origins") for c in _option(world, "origins", required=True)]
    replicas = [_clock(world, c, "replicas") for c in _option(world, "replicas", required=True)]
    initial = dict(_option(world, "accounts", {"a": 1000, "b": 1000}))
    count = int(_option(world, "transactions", 100))
    retry = int(_option(world, "retry_ns", 4 * net.channels["data"].d_max))
    dup_p = float(_option(world, "duplicate_prob", 0.2))
    end = int(_option(world, "generate_until_ns", world.horizon // 2))
    accounts = sorted(initial)
    rng = sim.rng("workload:txns")
    stores = {r: Replica(r, initial) for r in replicas}
    acked: set[tuple] = set()
    issued: list[Transaction] = []
    seqs = {o: 0 for o in origins}
    t0 = warmup(world)

    def on_txn(msg, transit):
        txn = msg.payload["txn"]
        fresh = stores[msg.dst].receive(txn)
        sim.record(msg.dst, "txn_receive", key=list(txn.key), duplicate=not fresh)
        net.send(Message(msg.dst, msg.src, "txn_ack", sim.read(msg.dst), {"key": txn.key, "replica": msg.dst}))

    def on_ack(msg, transit):
        acked.add((msg.payload["key"], msg.payload["replica"]))

    for r in replicas:
        net.attach(r, on_txn, kind="txn")
    for o in origins:
        net.attach(o, on_ack, kind="txn_ack")

    def push(txn: Transaction, r: str):
        if (txn.key, r) in acked:
            return
        net.send(Message(txn.origin, r, "txn", sim.read(txn.origin), {"txn": txn}))
        sim.call_later(retry, push, txn, r)

    def issue(o: str):
        seqs[o] += 1
        txn = Transaction(world.base.index(sim.read(o)), o, seqs[o], random_op(rng, accounts))
        issued.append(txn)
        sim.record(o, "txn_issue", key=list(txn.key), op=list(txn.op))
        for r in replicas:
            push(txn, r)
            if rng.random() < dup_p:
                net.send(Message(o, r, "txn", sim.read(o), {"txn": txn}))

    times = sorted(int(x) for x in rng.integers(t0, end, size=count))
    for t in times:
        sim.schedule(t, issue, origins[int(rng.integers(0, len(origins)))])
    sim.run(world.horizon)

    states = {r: stores[r].state() for r in replicas}
    oracle = sequential_oracle(issued, initial)
    complete = all(len(stores[r].ordered()) == len(issued) for r in replicas)
    out = Outcome()
    out.metrics["ledger"] = {"issued": len(issued), "states": states, "oracle": oracle,
                             "duplicates_received": {r: stores[r].duplicates for r in replicas},
                             "messages_lost": net.lost}
    out.checks["replicas_complete"] = complete
    out.checks["replicas_agree"] = all(s == states[replicas[0]] for s in states.values())
    out.checks["replicas_match_oracle"] = all(s == oracle for s in states.values())
    return out


# -- replay protection -------------------------------------------------------------

def replay_attack(world: World) -> Outcome:
    sim, net = world.sim, world.net
    sender = _clock(world, _option(world, "sender", required=True), "sender")
    receivers = [_clock(world, c, "receivers") for c in _option(world, "receivers", required=True)]
    attacker = _clock(world, _option(world, "attacker", required=True), "attacker")
    W = int(_option(world, "window_ns", required=True))
    messages = int(_option(world, "messages", 20))
    period = int(_option(world, "period_ns", required=True))
    delays = [int(d) for d in _option(world, "replay_delays_ns", [0, W // 2, W, 3 * W])]
    if W < net.channels["data"].d_max:
        raise ConfigError("window shorter than the link delay rejects fresh traffic", "workload.window_ns")
    dp = world.design_precision
    filters = {r: ReplayFilter(W, dp) for r in receivers}
    sent_ref: dict[int, int] = {}
    verdicts: list[dict] = []

    def on_msg(msg, transit):
        now_g = sim.read(msg.dst)
        v = filters[msg.dst].check(msg.id, msg.send_ts_global, now_g)
        replayed = msg.src == attacker
        age = sim.now - sent_ref[msg.id]
        verdicts.append({"rx": msg.dst, "replayed": replayed, "verdict": v.value, "true_age_ns": age})
        sim.record(msg.dst, "replay_verdict", msg_id=msg.id, replayed=replayed, verdict=v.value,
                   true_age_ns=age)
        if not replayed:
            # the attacker captures the frame as it is delivered and re-sends it later
            for d in delays:
                sim.call_later(d, replay, msg)

    for r in receivers:
        net.attach(r, on_msg, kind="order")

    def replay(m):
        net.send(Message(attacker, m.dst, m.kind, m.send_ts_global, dict(m.payload), m.id, m.channel))

    def emit(n):
        # one id shared by all copies so a replay to any receiver is recognizable
        mid = net.new_id()
        sent_ref[mid] = sim.now
        for r in receivers:
            net.send(Message(sender, r, "order", sim.read(sender), {"n": n}, mid))

    t0 = warmup(world)
    for n in range(messages):
        sim.at_local(sender, t0 + n * period, emit, n)
    sim.run(world.horizon)

    fresh = [v for v in verdicts if not v["replayed"]]
    replays = [v for v in verdicts if v["replayed"]]
    late = [v for v in replays if v["true_age_ns"] > W + 2 * dp]
    out = Outcome()
    out.metrics["replay"] = {
        "window_ns": W, "design_precision_ns": dp, "delays_ns": delays,
        "fresh_accepted": sum(v["verdict"] == "accept" for v in fresh), "fresh_total": len(fresh),
        "replays_total": len(replays),
        "replays_accepted": sum(v["verdict"] == "accept" for v in replays),
        "replays_rejected_replay": sum(v["verdict"] == "replay" for v in replays),
        "replays_rejected_stale": sum(v["verdict"] == "stale" for v in replays),
    }
    out.checks["fresh_accepted"] = all(v["verdict"] == ReplayVerdict.ACCEPT.value for v in fresh) and bool(fresh)
    out.checks["replays_rejected"] = not any(v["verdict"] == "accept" for v in replays)
    out.checks["late_replays_stale_everywhere"] = all(v["verdict"] == "stale" for v in late)
    return out


# -- log merging ---------------------------------------------------------------------

MERGED_HEADER = ("interval_index", "global_ts", "source", "seq", "event", "ref_time_ns")


def merged_log_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MERGED_HEADER)
    for r in records:
        w.writerow((r.interval_index, r.global_ts, r.source, r.seq, r.event, r.ref_time))
    return buf.getvalue()


def log_merge(world: World) -> Outcome:
    sim, base = world.sim, world.base
    sources = [_clock(world, c, "sources") for c in _option(world, "sources", world.members)]
    cascades = int(_option(world, "cascades", 10))
    events = int(_option(world, "events", 100))
    max_gap = int(_option(world, "max_gap_ns", 4 * base.cycle))
    rng = sim.rng("workload:cascade")
    seqs = {s: 0 for s in sources}
    offset0 = {c.id: c.offset_ns for c in world.scenario.clocks}
    synced: list[list] = [[] for _ in range(cascades)]
    free: list[list] = [[] for _ in range(cascades)]

    def happen(c, src, name):
        seqs[src] += 1
        lt = sim.read(src)
        synced[c].append(stamp(base, src, seqs[src], lt, name, sim.now))
        # what the CS would stamp without synchronization: its own oscillator from its initial state
        free[c].append(stamp(base, src, seqs[src], sim.read_oscillator(src) + offset0[src], name, sim.now))
        sim.record(src, "log_event", cascade=c, seq=seqs[src], global_ts=lt, k=base.index(lt))

    t = warmup(world)
    for c in range(cascades):
        for e in range(events):
            t += int(rng.integers(0, max_gap + 1))
            sim.schedule(t, happen, c, sources[int(rng.integers(0, len(sources)))], f"c{c}e{e}")
        t += 10 * max_gap
    if t >= world.horizon:
        raise ConfigError("cascades do not fit in the horizon", "workload.cascades")
    sim.run(world.horizon)

    sep = base.cycle
    bad_sync = bad_free = 0
    merged_all = []
    for c in range(cascades):
        m = merge_logs([synced[c]])
        merged_all.extend(m)
        bad_sync += len(order_violations(m, sep))
        bad_free += len(order_violations(merge_logs([free[c]]), sep))
    out = Outcome()
    out.metrics["log_merge"] = {"cascades": cascades, "events": cascades * events, "min_separation_ns": sep,
                                "violations_synchronized": bad_sync, "violations_free_running": bad_free}
    out.checks["merge_sound"] = bad_sync == 0
    out.files["merged_log.csv"] = merged_log_csv(merged_all)
    return out


WORKLOADS: dict[str, Callable[[World], Outcome]] = {
    "internal_sync": sync_only,
    "combined_sync": sync_only,
    "ski_race": ski_race,
    "grid_snapshot": grid_snapshot,
    "robot_sync": robot_sync,
    "tdma_control_loop": tdma_control_loop,
    "babbling_idiot": babbling_idiot,
    "lifesign_watch": lifesign_watch,
    "txn_ledger": txn_ledger,
    "replay_attack": replay_attack,
    "log_merge": log_merge,
}
