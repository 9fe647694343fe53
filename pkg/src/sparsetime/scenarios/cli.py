"""Command line: run, report, list-scenarios, validate.

Exit status is 0 on success, 1 when a run's checks fail, 2 on invalid
configuration or missing inputs.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import ConfigError
from .report import ReportError, report
from .runner import builtin_names, builtin_path, load, run

EXIT_CHECK_FAILED = 1
EXIT_INVALID = 2


def _cmd_run(args) -> int:
    res = run(args.scenario, args.seed, args.out)
    m = res.metrics
    print(f"{m['scenario']} seed={m['seed']}: {'ok' if m['ok'] else 'CHECKS FAILED'} -> {args.out}")
    for name, passed in m["checks"].items():
        print(f"  {'pass' if passed else 'FAIL'}  {name}")
    return 0 if m["ok"] else EXIT_CHECK_FAILED


def _cmd_report(args) -> int:
    rep = report(args.out)
    print(f"wrote {rep.summary_path} and {len(rep.plots)} plot(s)")
    return 0


def _cmd_list(args) -> int:
    for name in builtin_names():
        desc = json.loads(builtin_path(name).read_text(encoding="utf-8")).get("description", "")
        print(f"{name:20s} {desc}")
    return 0


def _cmd_validate(args) -> int:
    sc = load(args.scenario)
    print(f"ok: {sc.name} ({sc.kind}, {len(sc.clocks)} clocks)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sparsetime", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario and write trace.csv, metrics.json, scenario.json")
    r.add_argument("--scenario", required=True, help="JSON file or built-in scenario name")
    r.add_argument("--seed", type=int, default=None, help="overrides the seed in the config")
    r.add_argument("--out", required=True, help="output directory")
    r.set_defaults(fn=_cmd_run)
    rp = sub.add_parser("report", help="plots and summary.md for a run directory")
    rp.add_argument("--out", required=True)
    rp.set_defaults(fn=_cmd_report)
    ls = sub.add_parser("list-scenarios", help="list built-in scenarios")
    ls.set_defaults(fn=_cmd_list)
    v = sub.add_parser("validate", help="check a scenario file without running it")
    v.add_argument("--scenario", required=True)
    v.set_defaults(fn=_cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "seed", None) is not None and args.seed < 0:
        print("error: --seed must be non-negative", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"invalid scenario: {e}", file=sys.stderr)
        return EXIT_INVALID
    except (ReportError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
