"""Static plots and a markdown summary for a finished run directory."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from ..engine import read_trace_csv  # noqa: E402


class ReportError(FileNotFoundError):
    pass


@dataclass
class Report:
    out_dir: str
    plots: list[str] = field(default_factory=list)
    summary_path: str = ""
    plotted: dict = field(default_factory=dict)   # the numbers that went into each plot


def _save(fig, out_dir: str, name: str, rep: Report) -> None:
    path = os.path.join(out_dir, name)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    rep.plots.append(name)


def _series(rows, kind, value_key, group_key=None):
    out: dict[str, list[tuple[int, int]]] = {}
    for r in rows:
        if r.kind != kind or value_key not in r.detail:
            continue
        g = r.detail.get(group_key, "") if group_key else ""
        out.setdefault(g, []).append((r.t, int(r.detail[value_key])))
    return out


def _flatten(d: dict, prefix: str = "") -> list[tuple[str, object]]:
    items = []
    for k in sorted(d):
        v = d[k]
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            items.extend(_flatten(v, key + "."))
        elif isinstance(v, list):
            if len(v) <= 8:
                items.append((key, ", ".join(map(str, v))))
            else:
                items.append((key, f"{len(v)} values, min {min(v)}, max {max(v)}"
                              if all(isinstance(x, (int, float)) for x in v) else f"{len(v)} values"))
        else:
            items.append((key, v))
    return items


def report(out_dir) -> Report:
    out_dir = str(out_dir)
    trace_path = os.path.join(out_dir, "trace.csv")
    if not os.path.exists(trace_path):
        raise ReportError(f"{trace_path} not found; run the scenario first")
    rows = read_trace_csv(trace_path)
    metrics_path = os.path.join(out_dir, "metrics.json")
    metrics = {}
    if os.path.exists(metrics_path):
        with open(metrics_path, encoding="utf-8") as fh:
            metrics = json.load(fh)
    rep = Report(out_dir)

    prec = _series(rows, "precision", "pi_ns").get("", [])
    if prec:
        fig, ax = plt.subplots(figsize=(7, 3.5))
        ax.step([t / 1e6 for t, _ in prec], [p for _, p in prec], where="post", label="measured precision")
        dp = metrics.get("design_precision_ns")
        if dp is not None:
            ax.axhline(dp, color="tab:red", ls="--", label=f"design precision {dp} ns")
        ax.set_yscale("log")
        ax.set_xlabel("reference time [ms]")
        ax.set_ylabel("precision [ns]")
        ax.legend()
        _save(fig, out_dir, "precision.png", rep)
        rep.plotted["precision_max_ns"] = max(p for _, p in prec)

    lat = _series(rows, "detection_latency", "latency_ns", "mode")
    if not lat:
        lat = {"message delay": [(r.t, int(r.detail["delay_ns"])) for r in rows
                                 if r.kind == "deliver" and "delay_ns" in r.detail]}
        lat = {k: v for k, v in lat.items() if v}
    if lat:
        fig, ax = plt.subplots(figsize=(7, 3.5))
        for mode in sorted(lat):
            ax.hist([v / 1e6 for _, v in lat[mode]], bins=30, alpha=0.6, label=mode)
        ax.set_xlabel("latency [ms]")
        ax.set_ylabel("count")
        ax.legend()
        _save(fig, out_dir, "latency_hist.png", rep)
        rep.plotted["latency_series"] = sorted(lat)

    dead = _series(rows, "dead_time", "dead_time_ns", "mode")
    if dead:
        fig, ax = plt.subplots(figsize=(7, 3.5))
        for mode in sorted(dead):
            ax.plot([t / 1e6 for t, _ in dead[mode]], [v / 1e3 for _, v in dead[mode]], ".-", label=mode)
        ax.set_xlabel("reference time [ms]")
        ax.set_ylabel("dead time [us]")
        ax.legend()
        _save(fig, out_dir, "dead_time.png", rep)

    pairs = dead if len(dead) >= 2 else (lat if len(lat) >= 2 else {})
    if pairs:
        fig, ax = plt.subplots(figsize=(6, 3.5))
        names = sorted(pairs)
        ax.boxplot([[v / 1e3 for _, v in pairs[n]] for n in names])
        ax.set_xticks(range(1, len(names) + 1), names)
        ax.set_ylabel("[us]")
        ax.set_title("dead time" if pairs is dead else "detection latency")
        _save(fig, out_dir, "comparison.png", rep)
        rep.plotted["comparison_series"] = names

    lines = [f"# Run report: {metrics.get('scenario', os.path.basename(out_dir) or out_dir)}", ""]
    if not rows:
        lines += ["The trace contains no events.", ""]
    else:
        lines += [f"Trace rows: {len(rows)}", ""]
    if metrics:
        checks = metrics.get("checks", {})
        if checks:
            lines += ["## Checks", "", "| check | result |", "|---|---|"]
            lines += [f"| {k} | {'pass' if v else 'FAIL'} |" for k, v in sorted(checks.items())]
            lines.append("")
        lines += ["## Metrics", "", "| metric | value |", "|---|---|"]
        lines += [f"| {k} | {v} |" for k, v in _flatten({k: v for k, v in metrics.items() if k != "checks"})]
        lines.append("")
    if "precision_max_ns" in rep.plotted:
        lines += [f"Plotted precision maximum: {rep.plotted['precision_max_ns']} ns", ""]
    if rep.plots:
        lines += ["## Plots", ""] + [f"![{p}]({p})" for p in rep.plots] + [""]
    rep.summary_path = os.path.join(out_dir, "summary.md")
    with open(rep.summary_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines))
    return rep
