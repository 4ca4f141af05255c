"""Campaign artifacts and report rendering.

A finished campaign is persisted as a run directory:

    campaign.log       append-only JSONL event log
    coverage.csv       plot-ready samples, schema ``t,covered,phase``
    coverage.snapshot  per-point status export
    summary.json       final summary (seed, totals, vulnerabilities)
    config.ini         effective configuration echo (re-runnable)
    corpus/            surviving test cases in the on-disk format

The ``report`` command consumes one or more run directories and renders
coverage-vs-time tables, a per-strategy comparison CSV, and the
vulnerability summary.  Runs that differ only in seed are folded into an
averaged curve with a min/max band.
"""

from __future__ import annotations

import configparser
import csv
import json
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .campaign import CampaignConfig, CampaignResult
from .convert import save_testcase
from .formal import FormalConfig


class ReportError(ValueError):
    pass


# ----------------------------------------------------------------------
# configuration echo

def config_to_ini(config: CampaignConfig, design: str,
                  bugs: Sequence[str] = ()) -> str:
    cp = configparser.ConfigParser()
    cp["campaign"] = {
        "design": design,
        "bugs": ",".join(bugs),
        "mode": config.mode,
        "selector": config.selector,
        "seed": str(config.seed),
        "t_limit": "" if config.t_limit is None else str(config.t_limit),
        "testcase_limit": "" if config.testcase_limit is None
                          else str(config.testcase_limit),
        "target_coverage": "" if config.target_coverage is None
                           else repr(config.target_coverage),
        "window": str(config.window),
        "batch_size": str(config.batch_size),
        "initial_corpus": str(config.initial_corpus),
    }
    f = config.formal
    cp["formal"] = {
        "depth_bound": str(f.depth_bound),
        "time_limit": "" if f.time_limit is None else str(f.time_limit),
        "max_states": str(f.max_states),
        "calibration_sample": str(f.calibration_sample),
        "calibration_quantile": repr(f.calibration_quantile),
        "rfml_denominator": f.rfml_denominator,
    }
    out = []
    for section in cp.sections():
        out.append(f"[{section}]")
        for k, v in cp[section].items():
            out.append(f"{k} = {v}")
        out.append("")
    return "\n".join(out)


def config_from_ini(text: str) -> Tuple[CampaignConfig, str, List[str]]:
    """Parse a config echo; returns (config, design, enabled bugs)."""
    cp = configparser.ConfigParser()
    cp.read_string(text)
    if "campaign" not in cp:
        raise ReportError("config file has no [campaign] section")
    c = cp["campaign"]

    def opt_int(sec, key):
        raw = sec.get(key, "").strip()
        return int(raw) if raw else None

    def opt_float(sec, key):
        raw = sec.get(key, "").strip()
        return float(raw) if raw else None

    formal = FormalConfig()
    if "formal" in cp:
        f = cp["formal"]
        formal = FormalConfig(
            depth_bound=f.getint("depth_bound", formal.depth_bound),
            time_limit=opt_int(f, "time_limit"),
            max_states=f.getint("max_states", formal.max_states),
            calibration_sample=f.getint("calibration_sample",
                                        formal.calibration_sample),
            calibration_quantile=f.getfloat("calibration_quantile",
                                            formal.calibration_quantile),
            rfml_denominator=f.get("rfml_denominator",
                                   formal.rfml_denominator),
        )
    config = CampaignConfig(
        mode=c.get("mode", "hybrid"),
        selector=c.get("selector", CampaignConfig().selector),
        seed=c.getint("seed", 0),
        t_limit=opt_int(c, "t_limit"),
        testcase_limit=opt_int(c, "testcase_limit"),
        target_coverage=opt_float(c, "target_coverage"),
        window=c.getint("window", CampaignConfig().window),
        batch_size=c.getint("batch_size", CampaignConfig().batch_size),
        initial_corpus=c.getint("initial_corpus",
                                CampaignConfig().initial_corpus),
        formal=formal,
    )
    bugs = [b for b in c.get("bugs", "").split(",") if b]
    return config, c.get("design", ""), bugs


# ----------------------------------------------------------------------
# run-directory persistence

def write_run_dir(result: CampaignResult, out_dir, design_name: str,
                  bugs: Sequence[str] = ()) -> None:
    os.makedirs(out_dir, exist_ok=True)
    st = result.state
    with open(os.path.join(out_dir, "campaign.log"), "w") as f:
        for line in st.log:
            f.write(line + "\n")
    with open(os.path.join(out_dir, "coverage.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t", "covered", "phase"])
        for s in st.samples:
            w.writerow([s["t"], s["covered"], s["phase"]])
    with open(os.path.join(out_dir, "coverage.snapshot"), "w") as f:
        f.write("\n".join(st.cmap.snapshot_lines()) + "\n")
    with open(os.path.join(out_dir, "summary.json"), "w") as f:
        json.dump(result.summary(), f, indent=2, sort_keys=True)
        f.write("\n")
    with open(os.path.join(out_dir, "config.ini"), "w") as f:
        f.write(config_to_ini(st.config, design_name, bugs))
    corpus_dir = os.path.join(out_dir, "corpus")
    os.makedirs(corpus_dir, exist_ok=True)
    for tc in st.corpus.entries:
        save_testcase(corpus_dir, tc)


@dataclass
class RunData:
    path: str
    summary: dict
    samples: List[dict] = field(default_factory=list)

    @property
    def key(self) -> tuple:
        s = self.summary
        return (s.get("design"), s.get("mode"), s.get("selector"))


def load_run_dir(path) -> RunData:
    spath = os.path.join(path, "summary.json")
    cpath = os.path.join(path, "coverage.csv")
    if not os.path.exists(spath):
        raise ReportError(f"no campaign data in {path}")
    with open(spath) as f:
        summary = json.load(f)
    samples = []
    if os.path.exists(cpath):
        with open(cpath, newline="") as f:
            for row in csv.DictReader(f):
                samples.append({"t": int(row["t"]),
                                "covered": int(row["covered"]),
                                "phase": row["phase"]})
    return RunData(path=str(path), summary=summary, samples=samples)


# ----------------------------------------------------------------------
# rendering

def _covered_at(samples: List[dict], t: int) -> int:
    best = 0
    for s in samples:
        if s["t"] <= t:
            best = s["covered"]
        else:
            break
    return best


def coverage_table(runs: Sequence[RunData], bins: int = 12) -> str:
    """Coverage vs virtual time; same-config seeds are averaged with a
    min/max band."""
    if not runs:
        raise ReportError("no campaign data")
    t_max = max((r.samples[-1]["t"] for r in runs if r.samples), default=0)
    lines = []
    groups: Dict[tuple, List[RunData]] = {}
    for r in runs:
        groups.setdefault(r.key, []).append(r)
    for key in sorted(groups, key=str):
        members = groups[key]
        design, mode, selector = key
        seeds = sorted(m.summary.get("seed", 0) for m in members)
        points = members[0].summary.get("points", 0)
        lines.append(f"{design} {mode}/{selector} seeds={seeds}")
        lines.append(f"{'t':>12} {'mean':>8} {'min':>6} {'max':>6} {'cov%':>7}")
        for i in range(1, bins + 1):
            t = t_max * i // bins
            vals = [_covered_at(m.samples, t) for m in members]
            mean = sum(vals) / len(vals)
            pct = 100.0 * mean / points if points else 0.0
            lines.append(f"{t:>12} {mean:>8.1f} {min(vals):>6} "
                         f"{max(vals):>6} {pct:>6.1f}%")
        lines.append("")
    return "\n".join(lines)


def strategy_csv(runs: Sequence[RunData], bins: int = 24) -> str:
    """Per-strategy comparison: mean covered (with min/max band) on a
    common virtual-time grid, one row per (selector, t)."""
    if not runs:
        raise ReportError("no campaign data")
    t_max = max((r.samples[-1]["t"] for r in runs if r.samples), default=0)
    groups: Dict[tuple, List[RunData]] = {}
    for r in runs:
        groups.setdefault(r.key, []).append(r)
    rows = ["design,mode,selector,t,covered_mean,covered_min,covered_max"]
    for key in sorted(groups, key=str):
        members = groups[key]
        design, mode, selector = key
        for i in range(1, bins + 1):
            t = t_max * i // bins
            vals = [_covered_at(m.samples, t) for m in members]
            rows.append(f"{design},{mode},{selector},{t},"
                        f"{sum(vals) / len(vals):.2f},{min(vals)},{max(vals)}")
    return "\n".join(rows) + "\n"


def vulnerability_table(runs: Sequence[RunData]) -> str:
    lines = [f"{'run':<28} {'signature':<24} {'first t':>10} {'first instrs':>12}"]
    found = False
    for r in runs:
        name = os.path.basename(os.path.normpath(r.path))
        for v in r.summary.get("vulnerabilities", []):
            sig = ":".join(str(x) for x in v["signature"])
            lines.append(f"{name:<28} {sig:<24} {v['first_time']:>10} "
                         f"{v['first_instructions']:>12}")
            found = True
    if not found:
        lines.append("(no mismatches observed)")
    return "\n".join(lines)


def render_report(runs: Sequence[RunData]) -> str:
    parts = []
    parts.append("== coverage vs virtual time ==")
    parts.append(coverage_table(runs))
    parts.append("== vulnerabilities ==")
    parts.append(vulnerability_table(runs))
    parts.append("")
    for r in runs:
        s = r.summary
        parts.append(f"{os.path.basename(os.path.normpath(r.path))}: "
                     f"seed={s.get('seed')} covered={s.get('covered')}"
                     f"/{s.get('points')} ({100 * s.get('coverage', 0):.1f}%) "
                     f"t={s.get('t')} testcases={s.get('testcases')} "
                     f"proofs={s.get('formal_invocations')}")
    return "\n".join(parts) + "\n"
