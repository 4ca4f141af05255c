"""Command-line driver: run campaigns, render reports, list benchmarks.

Exit codes: 0 success, 1 campaign-level failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import importlib.resources
import os
import sys
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

from . import report as rpt
from .campaign import CampaignConfig, CampaignError, run_campaign
from .parser import ParseError, load_design_file
from .propgen import PropertyGenerator
from .select import STRATEGIES
from .sim import compile_design

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


@dataclass(frozen=True)
class BenchmarkEntry:
    name: str
    description: str
    bugs: Tuple[str, ...]
    expected_points: int


BENCHMARKS = (
    BenchmarkEntry("fsm_demo",
                   "two-state control FSM exercising every metric kind",
                   (), 18),
    BenchmarkEntry("irq_demo",
                   "interrupt controller whose guard arms starve a fuzzer",
                   (), 56),
    BenchmarkEntry("decoder_demo",
                   "instruction decoder plus single-module core",
                   ("B2",), 198),
    BenchmarkEntry("csr_demo",
                   "CSR file with privilege checks and taint tracking",
                   ("B3", "B5"), 222),
    BenchmarkEntry("pipeline_full",
                   "seven-module processor, the full campaign target",
                   ("B1", "B4"), 290),
)


def _bundled_path(name: str):
    return importlib.resources.files("hyfuzz") / "designs" / f"{name}.hwd"


def _resolve_design(spec: str):
    """A benchmark name or a path to a design file."""
    for b in BENCHMARKS:
        if spec == b.name:
            return b.name, _bundled_path(b.name)
    if os.path.exists(spec):
        name = os.path.splitext(os.path.basename(spec))[0]
        return name, spec
    raise FileNotFoundError(
        f"'{spec}' is neither a bundled benchmark nor a design file "
        f"(bundled: {', '.join(b.name for b in BENCHMARKS)})")


def _out_root(explicit: Optional[str]) -> str:
    return explicit or os.environ.get("HYFUZZ_OUT") or "out"


# ----------------------------------------------------------------------
# run

def cmd_run(args) -> int:
    config = CampaignConfig()
    design_spec = args.design
    bugs: List[str] = list(args.bug or [])
    if args.config:
        try:
            with open(args.config) as f:
                config, cfg_design, cfg_bugs = rpt.config_from_ini(f.read())
        except (OSError, rpt.ReportError, CampaignError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        design_spec = design_spec or cfg_design
        bugs = bugs or cfg_bugs
    if not design_spec:
        print("error: --design is required (or a config file naming one)",
              file=sys.stderr)
        return EXIT_USAGE
    if args.mode == "fuzz-only" and args.selector is not None:
        print("error: --selector has no effect in fuzz-only mode",
              file=sys.stderr)
        return EXIT_USAGE

    overrides = {}
    if args.mode is not None:
        overrides["mode"] = args.mode
    if args.selector is not None:
        overrides["selector"] = args.selector
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.t_limit is not None:
        overrides["t_limit"] = args.t_limit
    if args.testcase_limit is not None:
        overrides["testcase_limit"] = args.testcase_limit
    if args.target_cov is not None:
        overrides["target_coverage"] = args.target_cov
    try:
        config = replace(config, **overrides)
    except CampaignError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        name, path = _resolve_design(design_spec)
        design = load_design_file(path, set(bugs) or None)
    except (FileNotFoundError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    if config.t_limit is None and config.testcase_limit is None and \
            config.target_coverage is None:
        # an unbounded hybrid campaign never terminates once the formal
        # pool is dry; default to a small desk-scale budget
        config = replace(config, testcase_limit=10000)

    out_dir = args.out or os.path.join(
        _out_root(None), f"{name}-{config.mode}-{config.selector}-s{config.seed}")
    try:
        result = run_campaign(design, config)
    except CampaignError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    rpt.write_run_dir(result, out_dir, name, bugs)
    s = result.summary()
    print(f"{name}: covered {s['covered']}/{s['points']} "
          f"({100 * s['coverage']:.1f}%) in {s['testcases']} test cases, "
          f"{s['formal_invocations']} proofs, t={s['t']}")
    for v in s["vulnerabilities"]:
        sig = ":".join(str(x) for x in v["signature"])
        print(f"  vulnerability {sig}: {v['description']} "
              f"(first at t={v['first_time']})")
    print(f"run directory: {out_dir}")
    return EXIT_OK


# ----------------------------------------------------------------------
# report

def cmd_report(args) -> int:
    if args.dump_properties:
        if not args.design:
            print("error: --dump-properties requires --design",
                  file=sys.stderr)
            return EXIT_USAGE
        try:
            name, path = _resolve_design(args.design)
            design = load_design_file(path)
        except (FileNotFoundError, ParseError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        cd = compile_design(design)
        pg = PropertyGenerator(design, cd.registry)
        lines = [pg.emit_sva_text(p) for p in pg.all_properties()]
        text = "\n".join(lines) + "\n"
        if args.dump_properties == "-":
            sys.stdout.write(text)
        else:
            with open(args.dump_properties, "w") as f:
                f.write(text)
        return EXIT_OK

    runs = []
    for d in args.run_dirs:
        try:
            runs.append(rpt.load_run_dir(d))
        except rpt.ReportError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_FAILURE
    if not runs:
        print("error: no campaign data", file=sys.stderr)
        return EXIT_FAILURE
    sys.stdout.write(rpt.render_report(runs))
    if args.csv:
        with open(args.csv, "w") as f:
            f.write(rpt.strategy_csv(runs))
        print(f"strategy comparison CSV: {args.csv}")
    return EXIT_OK


# ----------------------------------------------------------------------
# bench

def cmd_bench(args) -> int:
    if args.action == "list":
        for b in BENCHMARKS:
            bugs = ",".join(b.bugs) if b.bugs else "-"
            print(f"{b.name:<14} points={b.expected_points:<4} "
                  f"bugs={bugs:<6} {b.description}")
        return EXIT_OK
    # verify: instrument each design and compare against the catalog
    names = args.names or [b.name for b in BENCHMARKS]
    catalog = {b.name: b for b in BENCHMARKS}
    failures = 0
    for name in names:
        b = catalog.get(name)
        if b is None:
            print(f"error: unknown benchmark '{name}'", file=sys.stderr)
            return EXIT_USAGE
        design = load_design_file(_bundled_path(name))
        cd = compile_design(design)
        got = len(cd.registry.points)
        ok = got == b.expected_points
        print(f"{name:<14} expected={b.expected_points} instrumented={got} "
              f"{'ok' if ok else 'MISMATCH'}")
        failures += 0 if ok else 1
    return EXIT_OK if failures == 0 else EXIT_FAILURE


# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hyfuzz",
                                description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a campaign")
    r.add_argument("--design", help="bundled benchmark name or design file")
    r.add_argument("--mode", choices=("hybrid", "fuzz-only", "formal-only"))
    r.add_argument("--selector", choices=STRATEGIES)
    r.add_argument("--seed", type=int)
    r.add_argument("--t-limit", type=int, help="virtual-time budget")
    r.add_argument("--testcase-limit", type=int)
    r.add_argument("--target-cov", type=float,
                   help="stop at this adjusted coverage fraction")
    r.add_argument("--bug", action="append",
                   help="enable an injected bug (repeatable)")
    r.add_argument("--config", help="config file; flags override its values")
    r.add_argument("--out", help="run directory (default $HYFUZZ_OUT/<name>)")
    r.set_defaults(func=cmd_run)

    g = sub.add_parser("report", help="render reports from run directories")
    g.add_argument("run_dirs", nargs="*", help="run directories to fold in")
    g.add_argument("--csv", help="write the per-strategy comparison CSV here")
    g.add_argument("--dump-properties", metavar="PATH",
                   help="write all cover properties for --design as SVA text"
                        " ('-' for stdout)")
    g.add_argument("--design", help="design for --dump-properties")
    g.set_defaults(func=cmd_report)

    b = sub.add_parser("bench", help="bundled benchmark catalog")
    b.add_argument("action", choices=("list", "verify"))
    b.add_argument("names", nargs="*", help="benchmarks to verify")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
