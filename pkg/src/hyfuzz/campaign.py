"""Campaign orchestration: the rate-scheduled hybrid fuzzing loop.

A campaign alternates a formal phase (select an uncovered point, prove
it, convert the witness trace into a corpus seed) with a fuzzing phase
(mutate and simulate batches).  The scheduler compares the formal
coverage rate r_fml = proven-reachable points per unit of proof time
against the rolling fuzzing rate r_fuzz = newly covered points per unit
of simulation time, and switches to the formal engine whenever fuzzing
falls behind.  Virtual time is the sum of proof time and simulated
cycles, so campaigns are deterministic under a fixed seed.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from . import convert, fuzz, select as sel
from .coverage import CoverageMap
from .formal import (FormalConfig, FormalError, FormalStats, ProofResult,
                     REACHABLE, UNDETERMINED, UNREACHABLE, prove)
from .ir import Design, ModuleGraph, build_graph
from .isa import run_golden
from .propgen import PropertyGenerator
from .sim import CompiledDesign, compile_design
from .vuln import Triage, diff

MODES = ("hybrid", "fuzz-only", "formal-only")


class CampaignError(ValueError):
    pass


@dataclass
class CampaignConfig:
    mode: str = "hybrid"
    selector: str = sel.DEFAULT_STRATEGY
    seed: int = 0
    t_limit: Optional[int] = None          # virtual-time budget
    testcase_limit: Optional[int] = None   # simulated test cases
    target_coverage: Optional[float] = None  # adjusted fraction in [0, 1]
    window: int = fuzz.DEFAULT_WINDOW
    batch_size: int = fuzz.DEFAULT_BATCH
    initial_corpus: int = 32   # random test cases alongside the template seed
    formal: FormalConfig = field(
        default_factory=lambda: FormalConfig(time_limit=250_000))

    def __post_init__(self):
        if self.mode not in MODES:
            raise CampaignError(f"unknown mode '{self.mode}'")
        if self.selector not in sel.STRATEGIES:
            raise CampaignError(f"unknown selector '{self.selector}'")


@dataclass
class CampaignState:
    design: Design
    cd: CompiledDesign
    config: CampaignConfig
    cmap: CoverageMap
    graph: ModuleGraph
    propgen: PropertyGenerator
    selector: sel.SelectorState
    stats: FormalStats
    corpus: fuzz.Corpus
    window: fuzz.FuzzWindow
    triage: Triage
    rng: random.Random
    t: int = 0                    # virtual time spent
    testcases: int = 0            # simulated test cases
    formal_invocations: int = 0   # prove() calls
    formal_exhausted: bool = False
    _retry_covered: int = -1      # covered count at the last deferred retry
    _seeded_initial: bool = False
    log: List[str] = field(default_factory=list)
    samples: List[Dict[str, object]] = field(default_factory=list)

    def emit(self, event: str, **payload):
        rec = {"event": event, "t": self.t, **payload}
        self.log.append(json.dumps(rec, sort_keys=True, separators=(",", ":")))

    def sample(self, phase: str):
        self.samples.append({"t": self.t, "covered": self.cmap.covered,
                             "phase": phase})

    def budget_left(self) -> bool:
        cfg = self.config
        if cfg.t_limit is not None and self.t >= cfg.t_limit:
            return False
        if cfg.testcase_limit is not None and self.testcases >= cfg.testcase_limit:
            return False
        if cfg.target_coverage is not None and \
                self.cmap.coverage_fraction() >= cfg.target_coverage:
            return False
        return True


def make_state(design: Design, config: Optional[CampaignConfig] = None,
               cd: Optional[CompiledDesign] = None) -> CampaignState:
    config = config or CampaignConfig()
    cd = cd or compile_design(design)
    cmap = CoverageMap(cd.registry)
    graph = build_graph(design)
    stats = FormalStats(denominator=config.formal.rfml_denominator)
    return CampaignState(
        design=design, cd=cd, config=config, cmap=cmap, graph=graph,
        propgen=PropertyGenerator(design, cd.registry),
        selector=sel.make_selector(config.selector, graph),
        stats=stats, corpus=fuzz.Corpus(),
        window=fuzz.FuzzWindow(w=config.window),
        triage=Triage(), rng=random.Random(config.seed))


# ----------------------------------------------------------------------
# phases

def _run_testcase(state: CampaignState, tc: convert.TestCase) -> "sim.RunRecord":
    rec = state.cd.run_words(tc.words, tc.id)
    state.t += rec.cycles
    state.testcases += 1
    _check_arch(state, tc, rec)
    return rec


def _check_arch(state: CampaignState, tc: convert.TestCase, rec):
    if rec.arch is None:
        return
    mismatches = diff(rec.arch, run_golden(tc.words))
    if mismatches:
        vr = state.triage.observe(mismatches, tc, state.t, len(tc.words))
        state.emit("vuln", testcase=tc.id, signature=list(vr.signature),
                   detail=[m.describe() for m in mismatches[:4]])


def formal_step(state: CampaignState) -> bool:
    """One point selection and proof.  Returns True when the proof
    produced a new corpus seed."""
    try:
        pid = sel.select(state.selector, state.cmap, state.graph, state.rng)
    except sel.Exhausted:
        # proofs are deterministic, so re-proving deferred points is only
        # worthwhile once fuzzing has moved the coverage frontier
        if state.cmap.covered == state._retry_covered or \
                state.cmap.retry_deferred_if_exhausted() == 0:
            state.formal_exhausted = True
            state.emit("formal-exhausted")
            return False
        state._retry_covered = state.cmap.covered
        pid = sel.select(state.selector, state.cmap, state.graph, state.rng)
    state.cmap.mark_attempted(pid)
    prop = state.propgen.for_point(pid)
    state.formal_invocations += 1
    try:
        result = prove(state.design, prop, state.config.formal, state.cd)
    except FormalError as exc:
        # the point is out of the engine's reach; leave it to the fuzzer
        state.t += 1
        state.cmap.mark_deferred(pid)
        state.emit("proof", point=pid, verdict="error", reason=str(exc))
        state.sample("formal")
        return False
    state.stats.add(result)
    state.t += result.proof_time
    state.emit("proof", point=pid, verdict=result.verdict,
               proof_time=result.proof_time, rfml=round(state.stats.rate(), 9))
    if result.verdict == UNREACHABLE:
        state.cmap.mark_unreachable(pid)
        state.sample("formal")
        return False
    if result.verdict == UNDETERMINED:
        state.cmap.mark_deferred(pid)
        state.sample("formal")
        return False
    # reachable: turn the witness into a corpus seed
    try:
        tc = convert.trace_to_testcase(
            state.corpus.fresh_id("seed"), result.trace, state.design, pid,
            state.cd)
    except convert.ConvertError as exc:
        state.cmap.mark_deferred(pid)
        state.emit("convert-failed", point=pid, reason=str(exc))
        state.sample("formal")
        return False
    rec = _run_testcase(state, tc)
    state.cmap.absorb(sorted(rec.fired), tc.id, state.t)
    state.corpus.add(tc)
    state.emit("seed", point=pid, testcase=tc.id,
               fired=len(rec.fired), covered=state.cmap.covered)
    state.sample("formal")
    return True


def formal_phase(state: CampaignState):
    """Prove until a seed lands in the corpus (or the pool runs dry)."""
    while state.budget_left() and not state.formal_exhausted:
        if formal_step(state):
            return


def seed_initial_corpus(state: CampaignState):
    """Template seed plus deterministic random payloads: the mutators only
    move one byte at a time, so the corpus needs raw material to recombine."""
    fuzz.seed_corpus(state.corpus)
    for _ in range(state.config.initial_corpus):
        n = state.rng.randrange(1, convert.TEST_CAPACITY + 1)
        payload = [state.rng.randrange(1 << 32) for _ in range(n)]
        tc = convert.make_testcase(state.corpus.fresh_id("init"), payload,
                                   {"kind": "initial-corpus"})
        rec = _run_testcase(state, tc)
        new = state.cmap.absorb(sorted(rec.fired), tc.id, state.t)
        state.window.push(new, rec.virtual_time)
        state.corpus.add(tc)
    state._seeded_initial = True


def fuzz_phase(state: CampaignState):
    """Batches of mutants until the rolling rate drops below r_fml."""
    if not state._seeded_initial:
        seed_initial_corpus(state)
    while state.budget_left():
        results = _fuzz_batch(state)
        state.sample("fuzz")
        if not results:
            return
        if state.config.mode == "fuzz-only" or state.formal_exhausted:
            continue
        if len(state.window) >= state.config.window and \
                fuzz.rfuzz(state.window) < state.stats.rate():
            state.emit("switch", rfuzz=round(fuzz.rfuzz(state.window), 9),
                       rfml=round(state.stats.rate(), 9))
            return


def _fuzz_batch(state: CampaignState):
    batch = min(state.config.batch_size,
                _testcases_left(state))
    if batch <= 0:
        return []
    staged = []
    for _ in range(batch):
        parent = state.corpus.next_parent()
        tc = fuzz.mutate(parent, state.rng)
        tc.id = state.corpus.fresh_id("mut")
        rec = _run_testcase(state, tc)
        staged.append((tc, rec))
    out = []
    for tc, rec in staged:
        new = state.cmap.absorb(sorted(rec.fired), tc.id, state.t)
        if new > 0:
            state.corpus.add(tc)
        state.window.push(new, rec.virtual_time)
        out.append((tc, rec, new))
    return out


def _testcases_left(state: CampaignState) -> int:
    if state.config.testcase_limit is None:
        return state.config.batch_size
    return state.config.testcase_limit - state.testcases


# ----------------------------------------------------------------------

@dataclass
class CampaignResult:
    state: CampaignState

    @property
    def coverage(self) -> float:
        return self.state.cmap.coverage_fraction()

    def summary(self) -> dict:
        st = self.state
        return {
            "design": st.design.name,
            "mode": st.config.mode,
            "selector": st.config.selector,
            "seed": st.config.seed,
            "t": st.t,
            "testcases": st.testcases,
            "formal_invocations": st.formal_invocations,
            "points": st.cmap.total,
            "covered": st.cmap.covered,
            "unreachable": st.cmap.unreachable,
            "coverage": round(st.cmap.coverage_fraction(), 6),
            "vulnerabilities": [r.as_dict() for r in st.triage.report()],
        }


def run_campaign(design: Design, config: Optional[CampaignConfig] = None,
                 cd: Optional[CompiledDesign] = None) -> CampaignResult:
    state = make_state(design, config, cd)
    cfg = state.config
    state.emit("start", design=design.name, mode=cfg.mode,
               selector=cfg.selector, seed=cfg.seed,
               points=state.cmap.total)
    if cfg.mode == "formal-only":
        while state.budget_left() and not state.formal_exhausted:
            formal_step(state)
    elif cfg.mode == "fuzz-only":
        seed_initial_corpus(state)
        while state.budget_left():
            if not _fuzz_batch(state):
                break
            state.sample("fuzz")
    else:
        # a fresh campaign opens with a formal phase: the corpus is empty
        # and r_fuzz is undefined until the window fills
        while state.budget_left():
            if not state.formal_exhausted:
                formal_phase(state)
            if not state.budget_left():
                break
            fuzz_phase(state)
            if state.formal_exhausted and not _any_progress_possible(state):
                break
    state.emit("done", covered=state.cmap.covered,
               coverage=round(state.cmap.coverage_fraction(), 6),
               testcases=state.testcases,
               formal_invocations=state.formal_invocations)
    return CampaignResult(state)


def _any_progress_possible(state: CampaignState) -> bool:
    # with the formal pool dry, fuzzing continues only while a budget
    # (time, test cases or target) still bounds the campaign
    cfg = state.config
    return cfg.t_limit is not None or cfg.testcase_limit is not None or \
        cfg.target_coverage is not None
