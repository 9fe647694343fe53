"""Scenario configuration: JSON schema, validation and round-tripping.

A scenario file is one JSON object::

    {
      "name": "ski_race", "kind": "ski_race", "seed": 7,
      "horizon_ns": 30000000000,
      "rho_max": "1e-5",
      "clocks": [{"id": "A", "drift": "random", "granularity_ns": 1000, "offset_ns": "random"}],
      "initial_offset_ns": 20000,
      "links": {"sync": {"d_min_ns": 5000, "d_max_ns": 5100, "loss_prob": 0.0}},
      "sync": {"mode": "combined", "resync_interval_ns": 1000000, "max_faulty": 1,
               "external": {"period_ns": 10000000, "accuracy_ns": 100}},
      "sparse": {"pi_ns": null, "delta_ns": null, "epoch_ns": 0, "design_precision_ns": null},
      "tdma": null,
      "faults": [{"target": "B", "kind": "crash", "start_ns": 1, "end_ns": 2, "params": {}}],
      "workload": {}
    }

Validation errors carry the JSON path of the offending value and, when the
scenario came from a file, the line it appears on.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, fields
from fractions import Fraction
from typing import Any

from ..network import FAULT_KINDS
from ..simclock import ScenarioConfigError, as_fraction
from ..sync import SYNC_MODES

KINDS = (
    "internal_sync", "combined_sync", "ski_race", "grid_snapshot", "txn_ledger", "robot_sync",
    "tdma_control_loop", "lifesign_watch", "babbling_idiot", "replay_attack", "log_merge",
)


class ConfigError(ScenarioConfigError):
    def __init__(self, message: str, path: str = "", line: int | None = None):
        self.message, self.path, self.line = message, path, line
        where = path or "<root>"
        if line is not None:
            where = f"line {line}: {where}"
        super().__init__(f"{where}: {message}")


def _req(d: dict, key: str, path: str):
    if key not in d:
        raise ConfigError(f"missing required field {key!r}", path)
    return d[key]


def _int(v, path: str, minimum: int | None = None) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"expected integer nanoseconds, got {v!r}", path)
    if minimum is not None and v < minimum:
        raise ConfigError(f"must be >= {minimum}, got {v}", path)
    return v


def _opt_int(v, path: str, minimum: int | None = None) -> int | None:
    return None if v is None else _int(v, path, minimum)


def _rational(v, path: str) -> Fraction:
    try:
        return as_fraction(v)
    except (ValueError, TypeError, ZeroDivisionError):
        raise ConfigError(f"expected a rational number, got {v!r}", path) from None


def _frac_out(x: Fraction) -> str:
    # shortest exact decimal if one exists, else p/q
    d = x.denominator
    n2 = n5 = 0
    while d % 2 == 0:
        d //= 2
        n2 += 1
    while d % 5 == 0:
        d //= 5
        n5 += 1
    if d == 1:
        digits = max(n2, n5)
        scaled = x * 10 ** digits
        text = str(abs(scaled.numerator)).rjust(digits + 1, "0")
        sign = "-" if x < 0 else ""
        if digits == 0:
            return f"{sign}{text}"
        return f"{sign}{text[:-digits]}.{text[-digits:]}"
    return f"{x.numerator}/{x.denominator}"


def _check_keys(d: dict, allowed, path: str) -> None:
    if not isinstance(d, dict):
        raise ConfigError("expected an object", path)
    for k in d:
        if k not in allowed:
            raise ConfigError(f"unknown field {k!r}", f"{path}.{k}" if path else k)


@dataclass(frozen=True)
class ClockSpec:
    id: str
    drift: Fraction | str = Fraction(0)          # or "random"
    granularity_ns: int = 1
    offset_ns: int | str = 0                     # or "random"
    role: str = ""

    @classmethod
    def from_dict(cls, d: dict, path: str) -> "ClockSpec":
        _check_keys(d, {f.name for f in fields(cls)}, path)
        cid = _req(d, "id", path)
        if not isinstance(cid, str) or not cid:
            raise ConfigError("clock id must be a non-empty string", f"{path}.id")
        drift = d.get("drift", 0)
        drift = drift if drift == "random" else _rational(drift, f"{path}.drift")
        off = d.get("offset_ns", 0)
        off = off if off == "random" else _int(off, f"{path}.offset_ns")
        return cls(cid, drift, _int(d.get("granularity_ns", 1), f"{path}.granularity_ns", 1), off,
                   str(d.get("role", "")))

    def to_dict(self) -> dict:
        return {"id": self.id,
                "drift": self.drift if isinstance(self.drift, str) else _frac_out(self.drift),
                "granularity_ns": self.granularity_ns, "offset_ns": self.offset_ns, "role": self.role}


@dataclass(frozen=True)
class LinkSpec:
    d_min_ns: int
    d_max_ns: int
    loss_prob: float = 0.0

    @classmethod
    def from_dict(cls, d: dict, path: str) -> "LinkSpec":
        _check_keys(d, {"d_min_ns", "d_max_ns", "loss_prob"}, path)
        lo = _int(_req(d, "d_min_ns", path), f"{path}.d_min_ns", 0)
        hi = _int(_req(d, "d_max_ns", path), f"{path}.d_max_ns", 0)
        if hi < lo:
            raise ConfigError(f"d_max_ns {hi} < d_min_ns {lo}", f"{path}.d_max_ns")
        p = d.get("loss_prob", 0.0)
        if isinstance(p, bool) or not isinstance(p, (int, float)) or not 0 <= p <= 1:
            raise ConfigError(f"loss_prob must be in [0, 1], got {p!r}", f"{path}.loss_prob")
        return cls(lo, hi, float(p))

    def to_dict(self) -> dict:
        return {"d_min_ns": self.d_min_ns, "d_max_ns": self.d_max_ns, "loss_prob": self.loss_prob}


@dataclass(frozen=True)
class ExternalSpec:
    period_ns: int
    accuracy_ns: int = 100
    phase_ns: int = 0
    availability: tuple[tuple[int, int], ...] | None = None
    knot_ns: int = 1_000_000_000
    slew_ns: int | None = None

    @classmethod
    def from_dict(cls, d: dict, path: str) -> "ExternalSpec":
        _check_keys(d, {f.name for f in fields(cls)}, path)
        av = d.get("availability")
        if av is not None:
            if not isinstance(av, list):
                raise ConfigError("availability must be a list of [start, end] pairs", f"{path}.availability")
            out = []
            for i, w in enumerate(av):
                p = f"{path}.availability[{i}]"
                if not isinstance(w, list) or len(w) != 2:
                    raise ConfigError("expected [start_ns, end_ns]", p)
                s, e = _int(w[0], p, 0), _int(w[1], p, 0)
                if e <= s:
                    raise ConfigError("empty availability window", p)
                out.append((s, e))
            av = tuple(out)
        return cls(_int(_req(d, "period_ns", path), f"{path}.period_ns", 1),
                   _int(d.get("accuracy_ns", 100), f"{path}.accuracy_ns", 0),
                   _int(d.get("phase_ns", 0), f"{path}.phase_ns", 0), av,
                   _int(d.get("knot_ns", 1_000_000_000), f"{path}.knot_ns", 1),
                   _opt_int(d.get("slew_ns"), f"{path}.slew_ns", 1))

    def to_dict(self) -> dict:
        return {"period_ns": self.period_ns, "accuracy_ns": self.accuracy_ns, "phase_ns": self.phase_ns,
                "availability": None if self.availability is None else [list(w) for w in self.availability],
                "knot_ns": self.knot_ns, "slew_ns": self.slew_ns}


@dataclass(frozen=True)
class SyncSpec:
    mode: str = "none"
    resync_interval_ns: int = 100_000_000
    max_faulty: int = 0
    members: tuple[str, ...] | None = None
    collection_window_ns: int | None = None
    external: ExternalSpec | None = None

    @classmethod
    def from_dict(cls, d: dict, path: str) -> "SyncSpec":
        _check_keys(d, {f.name for f in fields(cls)}, path)
        mode = d.get("mode", "none")
        if mode not in SYNC_MODES:
            raise ConfigError(f"mode must be one of {SYNC_MODES}, got {mode!r}", f"{path}.mode")
        members = d.get("members")
        if members is not None:
            if not isinstance(members, list) or not all(isinstance(m, str) for m in members):
                raise ConfigError("members must be a list of clock ids", f"{path}.members")
            members = tuple(members)
        ext = d.get("external")
        ext = None if ext is None else ExternalSpec.from_dict(ext, f"{path}.external")
        if mode in ("external", "combined") and ext is None:
            raise ConfigError(f"mode {mode!r} needs an 'external' section", f"{path}.mode")
        return cls(mode, _int(d.get("resync_interval_ns", 100_000_000), f"{path}.resync_interval_ns", 1),
                   _int(d.get("max_faulty", 0), f"{path}.max_faulty", 0), members,
                   _opt_int(d.get("collection_window_ns"), f"{path}.collection_window_ns", 1), ext)

    def to_dict(self) -> dict:
        return {"mode": self.mode, "resync_interval_ns": self.resync_interval_ns,
                "max_faulty": self.max_faulty,
                "members": None if self.members is None else list(self.members),
                "collection_window_ns": self.collection_window_ns,
                "external": None if self.external is None else self.external.to_dict()}


@dataclass(frozen=True)
class SparseSpec:
    pi_ns: int | None = None
    delta_ns: int | None = None
    epoch_ns: int = 0
    design_precision_ns: int | None = None

    @classmethod
    def from_dict(cls, d: dict, path: str) -> "SparseSpec":
        _check_keys(d, {f.name for f in fields(cls)}, path)
        return cls(_opt_int(d.get("pi_ns"), f"{path}.pi_ns", 1), _opt_int(d.get("delta_ns"), f"{path}.delta_ns", 1),
                   _int(d.get("epoch_ns", 0), f"{path}.epoch_ns", 0),
                   _opt_int(d.get("design_precision_ns"), f"{path}.design_precision_ns", 0))

    def to_dict(self) -> dict:
        return {"pi_ns": self.pi_ns, "delta_ns": self.delta_ns, "epoch_ns": self.epoch_ns,
                "design_precision_ns": self.design_precision_ns}


@dataclass(frozen=True)
class SlotSpec:
    owner: str
    offset_ns: int
    duration_ns: int


@dataclass(frozen=True)
class TdmaSpec:
    round_ns: int
    slots: tuple[SlotSpec, ...]
    guard_gap_ns: int = 0
    tx_duration_ns: int = 1000
    guardian: str = "own_clock"                  # own_clock | shared | none
    guardian_clocks: tuple[tuple[str, str], ...] = ()

    @classmethod
    def from_dict(cls, d: dict, path: str) -> "TdmaSpec":
        _check_keys(d, {f.name for f in fields(cls)}, path)
        slots = []
        raw = _req(d, "slots", path)
        if not isinstance(raw, list) or not raw:
            raise ConfigError("slots must be a non-empty list", f"{path}.slots")
        for i, s in enumerate(raw):
            p = f"{path}.slots[{i}]"
            _check_keys(s, {"owner", "offset_ns", "duration_ns"}, p)
            slots.append(SlotSpec(str(_req(s, "owner", p)), _int(_req(s, "offset_ns", p), f"{p}.offset_ns", 0),
                                  _int(_req(s, "duration_ns", p), f"{p}.duration_ns", 1)))
        guardian = d.get("guardian", "own_clock")
        if guardian not in ("own_clock", "shared", "none"):
            raise ConfigError("guardian must be own_clock, shared or none", f"{path}.guardian")
        gc = d.get("guardian_clocks", {})
        if not isinstance(gc, dict):
            raise ConfigError("guardian_clocks maps node id -> clock id", f"{path}.guardian_clocks")
        return cls(_int(_req(d, "round_ns", path), f"{path}.round_ns", 1), tuple(slots),
                   _int(d.get("guard_gap_ns", 0), f"{path}.guard_gap_ns", 0),
                   _int(d.get("tx_duration_ns", 1000), f"{path}.tx_duration_ns", 1), guardian,
                   tuple(sorted((str(k), str(v)) for k, v in gc.items())))

    def to_dict(self) -> dict:
        return {"round_ns": self.round_ns,
                "slots": [{"owner": s.owner, "offset_ns": s.offset_ns, "duration_ns": s.duration_ns}
                          for s in self.slots],
                "guard_gap_ns": self.guard_gap_ns, "tx_duration_ns": self.tx_duration_ns,
                "guardian": self.guardian, "guardian_clocks": dict(self.guardian_clocks)}


@dataclass(frozen=True)
class FaultSpec:
    target: str
    kind: str
    start_ns: int
    end_ns: int
    params: tuple[tuple[str, Any], ...] = ()

    @classmethod
    def from_dict(cls, d: dict, path: str) -> "FaultSpec":
        _check_keys(d, {f.name for f in fields(cls)}, path)
        kind = _req(d, "kind", path)
        if kind not in FAULT_KINDS:
            raise ConfigError(f"kind must be one of {FAULT_KINDS}, got {kind!r}", f"{path}.kind")
        s = _int(_req(d, "start_ns", path), f"{path}.start_ns", 0)
        e = _int(_req(d, "end_ns", path), f"{path}.end_ns", 0)
        if e <= s:
            raise ConfigError("fault window is empty", f"{path}.end_ns")
        params = d.get("params", {})
        if not isinstance(params, dict):
            raise ConfigError("params must be an object", f"{path}.params")
        if kind == "clock_drift_step" and "drift" not in params:
            raise ConfigError("clock_drift_step needs params.drift", f"{path}.params")
        return cls(str(_req(d, "target", path)), kind, s, e, tuple(sorted(params.items())))

    def to_dict(self) -> dict:
        return {"target": self.target, "kind": self.kind, "start_ns": self.start_ns,
                "end_ns": self.end_ns, "params": dict(self.params)}


def _freeze(v):
    if isinstance(v, dict):
        return tuple((k, _freeze(x)) for k, x in v.items())
    if isinstance(v, list):
        return ("__list__",) + tuple(_freeze(x) for x in v)
    return v


def _thaw(v):
    if isinstance(v, tuple):
        if v and v[0] == "__list__":
            return [_thaw(x) for x in v[1:]]
        return {k: _thaw(x) for k, x in v}
    return v


@dataclass(frozen=True)
class Scenario:
    name: str
    kind: str
    horizon_ns: int
    clocks: tuple[ClockSpec, ...]
    seed: int = 0
    description: str = ""
    rho_max: Fraction = Fraction(0)
    initial_offset_ns: int = 0
    links: tuple[tuple[str, LinkSpec], ...] = ()
    sync: SyncSpec = field(default_factory=SyncSpec)
    sparse: SparseSpec = field(default_factory=SparseSpec)
    tdma: TdmaSpec | None = None
    faults: tuple[FaultSpec, ...] = ()
    workload_items: tuple = ()

    @property
    def workload(self) -> dict:
        return _thaw(self.workload_items) if self.workload_items else {}

    def link(self, channel: str) -> LinkSpec:
        for k, v in self.links:
            if k == channel:
                return v
        raise ConfigError(f"no link model for channel {channel!r}", "links")

    def has_link(self, channel: str) -> bool:
        return any(k == channel for k, _ in self.links)

    def clock_ids(self) -> list[str]:
        return [c.id for c in self.clocks]

    # -- (de)serialization ------------------------------------------------
    @classmethod
    def from_dict(cls, d: dict, _text: str | None = None) -> "Scenario":
        try:
            return cls._from_dict(d)
        except ConfigError as e:
            if _text is not None and e.line is None:
                raise ConfigError(e.message, e.path, locate(_text, e.path)) from None
            raise

    @classmethod
    def _from_dict(cls, d: dict) -> "Scenario":
        allowed = {"name", "kind", "description", "seed", "horizon_ns", "rho_max", "initial_offset_ns",
                   "clocks", "links", "sync", "sparse", "tdma", "faults", "workload"}
        _check_keys(d, allowed, "")
        kind = _req(d, "kind", "")
        if kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {kind!r}", "kind")
        raw_clocks = _req(d, "clocks", "")
        if not isinstance(raw_clocks, list) or not raw_clocks:
            raise ConfigError("clocks must be a non-empty list", "clocks")
        clocks = tuple(ClockSpec.from_dict(c, f"clocks[{i}]") for i, c in enumerate(raw_clocks))
        ids = [c.id for c in clocks]
        for i, cid in enumerate(ids):
            if cid in ids[:i]:
                raise ConfigError(f"duplicate clock id {cid!r}", f"clocks[{i}].id")
        links = d.get("links", {})
        _check_keys(links, set(links) if isinstance(links, dict) else set(), "links")
        links = tuple(sorted((k, LinkSpec.from_dict(v, f"links.{k}")) for k, v in links.items()))
        sync = SyncSpec.from_dict(d.get("sync", {}), "sync")
        sparse = SparseSpec.from_dict(d.get("sparse", {}), "sparse")
        tdma = d.get("tdma")
        tdma = None if tdma is None else TdmaSpec.from_dict(tdma, "tdma")
        faults = d.get("faults", [])
        if not isinstance(faults, list):
            raise ConfigError("faults must be a list", "faults")
        faults = tuple(FaultSpec.from_dict(f, f"faults[{i}]") for i, f in enumerate(faults))
        workload = d.get("workload", {})
        if not isinstance(workload, dict):
            raise ConfigError("workload must be an object", "workload")
        seed = _int(d.get("seed", 0), "seed", 0)
        sc = cls(str(_req(d, "name", "")), kind, _int(_req(d, "horizon_ns", ""), "horizon_ns", 1), clocks,
                 seed, str(d.get("description", "")), _rational(d.get("rho_max", 0), "rho_max"),
                 _int(d.get("initial_offset_ns", 0), "initial_offset_ns", 0), links, sync, sparse, tdma,
                 faults, _freeze(workload))
        sc._check_references()
        return sc

    def _check_references(self) -> None:
        ids = set(self.clock_ids())
        for i, c in enumerate(self.clocks):
            if not isinstance(c.drift, str) and abs(c.drift) > self.rho_max:
                raise ConfigError(f"|drift| {c.drift} exceeds rho_max {self.rho_max}", f"clocks[{i}].drift")
        if self.sync.members is not None:
            for j, m in enumerate(self.sync.members):
                if m not in ids:
                    raise ConfigError(f"unknown clock {m!r}", f"sync.members[{j}]")
        members = list(self.sync.members) if self.sync.members is not None else self.clock_ids()
        if self.sync.mode in ("internal", "combined"):
            f = self.sync.max_faulty
            if len(members) < 3 * f + 1:
                raise ConfigError(f"internal sync with max_faulty={f} needs >= {3 * f + 1} members, "
                                  f"got {len(members)}", "sync.max_faulty")
            if not self.has_link("sync"):
                raise ConfigError("internal sync needs a 'sync' link model", "links")
        if self.sync.mode in ("external", "combined") and not self.has_link("server"):
            raise ConfigError("external sync needs a 'server' link model", "links")
        if self.sync.mode == "none" and self.sparse.design_precision_ns is None:
            raise ConfigError("without synchronization the design precision must be given",
                              "sparse.design_precision_ns")
        for i, f in enumerate(self.faults):
            if f.target not in ids:
                raise ConfigError(f"unknown fault target {f.target!r}", f"faults[{i}].target")
        if self.tdma is not None:
            for i, s in enumerate(self.tdma.slots):
                if s.owner not in ids:
                    raise ConfigError(f"unknown slot owner {s.owner!r}", f"tdma.slots[{i}].owner")
            for node, clk in self.tdma.guardian_clocks:
                if clk not in ids:
                    raise ConfigError(f"unknown guardian clock {clk!r}", f"tdma.guardian_clocks.{node}")

    def to_dict(self) -> dict:
        return {
            "name": self.name, "kind": self.kind, "description": self.description, "seed": self.seed,
            "horizon_ns": self.horizon_ns, "rho_max": _frac_out(self.rho_max),
            "initial_offset_ns": self.initial_offset_ns,
            "clocks": [c.to_dict() for c in self.clocks],
            "links": {k: v.to_dict() for k, v in self.links},
            "sync": self.sync.to_dict(), "sparse": self.sparse.to_dict(),
            "tdma": None if self.tdma is None else self.tdma.to_dict(),
            "faults": [f.to_dict() for f in self.faults],
            "workload": self.workload,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON: {e.msg}", "", e.lineno) from None
        if not isinstance(d, dict):
            raise ConfigError("scenario must be a JSON object", "", 1)
        return cls.from_dict(d, _text=text)

    def with_changes(self, **changes) -> "Scenario":
        """Copy with top-level fields replaced (dict-level, re-validated)."""
        d = self.to_dict()
        d.update(changes)
        return Scenario.from_dict(d)


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return Scenario.from_json(fh.read())


_TOKEN = re.compile(r"([^.\[\]]+)|\[(\d+)\]")


def locate(text: str, path: str) -> int | None:
    """Best-effort line number of the JSON value at ``path`` (e.g. ``clocks[2].drift``)."""
    if not path:
        return 1
    lines = text.splitlines()
    pos_line = 0
    for key, index in _TOKEN.findall(path):
        if index:
            # skip to the index-th '{' or value after the current position
            count = -1
            for ln in range(pos_line, len(lines)):
                count += lines[ln].count("{")
                if count >= int(index):
                    pos_line = ln
                    break
            continue
        pat = f'"{key}"'
        for ln in range(pos_line, len(lines)):
            if pat in lines[ln]:
                pos_line = ln
                break
        else:
            return None
    return pos_line + 1
