"""Bounded reachability engine for cover properties.

Explicit-state breadth-first search from reset over a cone-of-influence
projection of the register state, with the input alphabet reduced to the
values the cone can distinguish.  Both reductions are exact for the
property being proved, so verdicts carry no abstraction slack:

  reachable    - a replaying trace satisfies the property
  unreachable  - the projected state space was exhausted within the bound
  undetermined - depth bound clipped an unexplored frontier, or a
                 time/state budget ran out

Proof effort is measured in virtual time units, one unit per explored
(state, input) pair, which keeps campaign scheduling deterministic.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

from . import expr as E
from .ir import Design
from .propgen import CoverProperty, H2
from .sim import CompiledDesign, compile_design, compile_predicate, \
    comb_defs as _comb_defs, needed_comb

REACHABLE = "reachable"
UNREACHABLE = "unreachable"
UNDETERMINED = "undetermined"

# widest input atom we will enumerate exhaustively
MAX_FREE_ATOM_BITS = 12
MAX_ALPHABET = 4096


class FormalError(ValueError):
    pass


@dataclass
class FormalConfig:
    depth_bound: int = 64
    time_limit: Optional[int] = None  # virtual-time units per proof
    max_states: int = 1 << 16
    calibration_sample: int = 30
    calibration_quantile: float = 0.99
    rfml_denominator: str = "all"  # or "reachable"


@dataclass(frozen=True)
class Trace:
    input_ids: Tuple[str, ...]
    inputs: Tuple[tuple, ...]  # one full input assignment per cycle

    def __len__(self):
        return len(self.inputs)

    def dump(self) -> str:
        lines = []
        for n, xs in enumerate(self.inputs):
            parts = " ".join(f"{sid}={v:#x}"
                             for sid, v in zip(self.input_ids, xs))
            lines.append(f"cycle {n}: {parts}")
        return "\n".join(lines)


@dataclass
class ProofResult:
    point_id: int
    verdict: str
    proof_time: int  # virtual-time units spent
    bound: int
    trace: Optional[Trace] = None


# ----------------------------------------------------------------------
# cone of influence over registers

def _reg_supports(design: Design) -> Dict[str, Set[str]]:
    """Signals each register's next value can depend on."""
    sup: Dict[str, Set[str]] = {r: set() for m in design.modules for r in m.registers}
    for m in design.modules:
        for t, e in m.reg_assigns:
            sup[t].update(e.refs())

        def walk(node, guards):
            g2 = guards + [node.guard]
            for arm in (node.then_arm, node.else_arm):
                for t, e in arm.assigns:
                    sup[t].update(e.refs())
                    for g in g2:
                        sup[t].update(g.refs())
                if arm.child is not None:
                    walk(arm.child, g2)

        for tree in m.branch_trees:
            walk(tree, [])
    return sup


def property_cone(design: Design, prop: CoverProperty) -> Set[str]:
    """Registers whose dynamics can influence the property."""
    defs = _comb_defs(design)
    sup = _reg_supports(design)
    regs = {r for m in design.modules for r in m.registers}

    def expand(roots: Set[str]) -> Set[str]:
        seen: Set[str] = set()
        work = list(roots)
        while work:
            s = work.pop()
            if s in seen:
                continue
            seen.add(s)
            if s in defs:
                work.extend(defs[s].refs())
        return seen

    cone: Set[str] = set()
    roots = set(prop.expr_now.refs())
    if prop.expr_next is not None:
        roots |= set(prop.expr_next.refs())
    frontier = expand(roots) & regs
    while frontier:
        cone |= frontier
        nxt: Set[str] = set()
        for r in frontier:
            nxt |= expand(sup[r]) & regs
        frontier = nxt - cone
    return cone


# ----------------------------------------------------------------------
# input alphabet reduction

def _cone_exprs(design: Design, prop: CoverProperty, cone: Set[str],
                skip: Set[str] = frozenset()) -> List[E.Expr]:
    defs = _comb_defs(design)
    sup = _reg_supports(design)
    exprs = [prop.expr_now]
    if prop.expr_next is not None:
        exprs.append(prop.expr_next)
    roots: Set[str] = set()
    for e in exprs:
        roots |= set(e.refs())
    for r in cone:
        roots |= sup[r]
        # include the defining statements so comparisons are visible
        for m in design.modules:
            for t, e2 in m.reg_assigns:
                if t == r:
                    exprs.append(e2)

            def walk(node):
                for arm in (node.then_arm, node.else_arm):
                    for t, e2 in arm.assigns:
                        if t == r:
                            exprs.append(e2)
                            exprs.append(node.guard)
                    if arm.child is not None:
                        walk(arm.child)
            for tree in m.branch_trees:
                walk(tree)
    for s in needed_comb(design, roots):
        if s not in skip:
            exprs.append(defs[s])
    return exprs


def _input_windows(design: Design, input_ids: Sequence[str]) -> Dict[str, Tuple[str, int, int]]:
    """Combinational signals that are plain renamings or slices of a
    primary input, mapped to the input bit range they alias."""
    widths = {sid: s.width for sid, s in design.signals.items()}
    win: Dict[str, Tuple[str, int, int]] = {}
    for sid in input_ids:
        win[sid] = (sid, widths[sid] - 1, 0)
    defs = _comb_defs(design)

    def resolve(e: E.Expr) -> Optional[Tuple[str, int, int]]:
        if isinstance(e, E.Ref):
            return win.get(e.name)
        if isinstance(e, E.Slice):
            base = resolve(e.x)
            if base is not None:
                name, _hi, lo = base
                return (name, lo + e.hi, lo + e.lo)
        return None

    changed = True
    while changed:
        changed = False
        for sid, e in defs.items():
            if sid in win:
                continue
            w = resolve(e)
            if w is not None:
                win[sid] = w
                changed = True
    return win


def _atom_of(e: E.Expr, windows: Dict[str, Tuple[str, int, int]]) -> Optional[Tuple[str, int, int]]:
    if isinstance(e, E.Ref):
        return windows.get(e.name)
    if isinstance(e, E.Slice) and isinstance(e.x, E.Ref):
        base = windows.get(e.x.name)
        if base is not None:
            name, _hi, lo = base
            return (name, lo + e.hi, lo + e.lo)
    return None


def input_alphabet(design: Design, prop: CoverProperty, cone: Set[str],
                   cd: CompiledDesign) -> List[tuple]:
    """Input assignments sufficient to distinguish every cone behavior.

    An input atom (a slice of a primary input) that only ever feeds
    equality comparisons against constants is enumerated as those
    constants plus one mismatch representative; anything else is
    enumerated exhaustively over the atom's width.
    """
    input_ids = list(cd.input_ids)
    windows = _input_windows(design, input_ids)
    atoms: Dict[Tuple[str, int, int], dict] = {}

    def touch(atom, const=None):
        d = atoms.setdefault(atom, {"consts": set(), "free": False})
        if const is None:
            d["free"] = True
        else:
            d["consts"].add(const)

    def visit(e: E.Expr):
        if isinstance(e, E.Bin) and e.op == "eq":
            a = _atom_of(e.a, windows)
            if a is not None and isinstance(e.b, E.Const):
                touch(a, e.b.value)
                return
            b = _atom_of(e.b, windows)
            if b is not None and isinstance(e.a, E.Const):
                touch(b, e.a.value)
                return
        atom = _atom_of(e, windows)
        if atom is not None:
            touch(atom)
            return
        if isinstance(e, (E.Un, E.Slice)):
            visit(e.x)
        elif isinstance(e, (E.Bin, E.Concat)):
            visit(e.a)
            visit(e.b)
        elif isinstance(e, E.Mux):
            visit(e.c)
            visit(e.a)
            visit(e.b)

    skip = set(windows) - set(input_ids)  # alias definitions carry no information
    for e in _cone_exprs(design, prop, cone, skip):
        visit(e)

    # constrain the environment like the fuzzer harness: when the design
    # declares an instruction port, every other input is pinned to zero
    iport = design.meta.get("instruction_port")
    if iport in input_ids:
        atoms = {a: d for a, d in atoms.items() if a[0] == iport}

    # merge overlapping atoms per input conservatively
    merged: List[Tuple[str, int, int, dict]] = []
    for sid in input_ids:
        mine = sorted([(a, d) for a, d in atoms.items() if a[0] == sid],
                      key=lambda t: t[0][2])
        cur = None
        for (name, hi, lo), d in mine:
            if cur is not None and lo <= cur[0]:
                # overlap: widen and fall back to exhaustive enumeration
                cur = (max(hi, cur[0]), min(lo, cur[1]),
                       {"consts": set(), "free": True})
            else:
                if cur is not None:
                    merged.append((sid, cur[0], cur[1], cur[2]))
                cur = (hi, lo, d)
        if cur is not None:
            merged.append((sid, cur[0], cur[1], cur[2]))

    values_per_atom = []
    for sid, hi, lo, d in merged:
        w = hi - lo + 1
        m = E.mask(w)
        if d["free"] or not d["consts"]:
            if w > MAX_FREE_ATOM_BITS:
                raise FormalError(
                    f"input atom {sid}[{hi}:{lo}] is too wide to enumerate")
            vals = list(range(1 << w))
        else:
            vals = sorted(v & m for v in d["consts"])
            default = next(v for v in range(m + 2) if v not in set(vals) and v <= m) \
                if len(vals) <= m else None
            if default is not None:
                vals.append(default)
        values_per_atom.append(vals)

    total = 1
    for vals in values_per_atom:
        total *= len(vals)
        if total > MAX_ALPHABET:
            raise FormalError("reduced input alphabet is still too large")

    if not merged:
        return [tuple(0 for _ in input_ids)]
    words = []
    idx = {sid: i for i, sid in enumerate(input_ids)}
    for combo in itertools.product(*values_per_atom):
        xs = [0] * len(input_ids)
        for (sid, hi, lo, _), v in zip(merged, combo):
            xs[idx[sid]] |= v << lo
        words.append(tuple(xs))
    return words


# ----------------------------------------------------------------------
# the prover

def prove(design: Design, prop: CoverProperty,
          config: Optional[FormalConfig] = None,
          cd: Optional[CompiledDesign] = None) -> ProofResult:
    config = config or FormalConfig()
    cd = cd or compile_design(design)
    now = compile_predicate(design, prop.expr_now, cd)
    nxt = compile_predicate(design, prop.expr_next, cd) \
        if prop.expr_next is not None else None
    cone = property_cone(design, prop)
    alphabet = input_alphabet(design, prop, cone, cd)
    kernel = cd.kernel
    reset = cd.reset_regs
    free_idx = [i for i, sid in enumerate(cd.reg_ids) if sid in cone]

    def project(regs: tuple) -> tuple:
        out = list(reset)
        for i in free_idx:
            out[i] = regs[i]
        return tuple(out)

    two = prop.horizon == H2 and nxt is not None
    start = (reset, False)
    parents: Dict[tuple, Optional[Tuple[tuple, tuple]]] = {start: None}
    queue = deque([(start, 0)])
    expansions = 0
    clipped = False
    success_key = None
    success_input = None

    while queue:
        node, depth = queue.popleft()
        if depth >= config.depth_bound:
            clipped = True
            continue
        s, armed = node
        for x in alphabet:
            expansions += 1
            if config.time_limit is not None and expansions > config.time_limit:
                return ProofResult(prop.point_id, UNDETERMINED,
                                   expansions, config.depth_bound)
            if two:
                if armed and nxt(s, x):
                    success_key, success_input = node, x
                    break
                arm = bool(now(s, x))
            else:
                if now(s, x):
                    success_key, success_input = node, x
                    break
                arm = False
            s2 = project(kernel(s, None, x, 0)[0])
            key = (s2, arm)
            if key not in parents:
                if len(parents) >= config.max_states:
                    return ProofResult(prop.point_id, UNDETERMINED,
                                       expansions, config.depth_bound)
                parents[key] = (node, x)
                queue.append((key, depth + 1))
        if success_key is not None:
            break

    if success_key is None:
        verdict = UNDETERMINED if clipped else UNREACHABLE
        return ProofResult(prop.point_id, verdict, max(expansions, 1),
                           config.depth_bound)

    # reconstruct the input sequence from reset
    seq = [success_input]
    node = success_key
    while parents[node] is not None:
        node, x = parents[node]
        seq.append(x)
    seq.reverse()
    trace = Trace(tuple(cd.input_ids), tuple(seq))
    _check_replay(cd, prop, trace, now, nxt)
    return ProofResult(prop.point_id, REACHABLE, max(expansions, 1),
                       config.depth_bound, trace)


def _check_replay(cd: CompiledDesign, prop: CoverProperty, trace: Trace,
                  now, nxt):
    """The trace must satisfy the property on the unprojected design."""
    regs = cd.reset_regs
    states = []
    for xs in trace.inputs:
        states.append(regs)
        regs = cd.kernel(regs, None, xs, 0)[0]
    ok = False
    if prop.horizon == H2:
        if len(trace) >= 2:
            ok = bool(now(states[-2], trace.inputs[-2])) and \
                bool(nxt(states[-1], trace.inputs[-1]))
    else:
        ok = bool(now(states[-1], trace.inputs[-1]))
    if not ok:
        raise FormalError("reachability trace failed to replay")


# ----------------------------------------------------------------------
# statistics and calibration

@dataclass
class FormalStats:
    """Proof ledger driving the formal side of the scheduler."""

    records: List[Tuple[int, str, int]] = field(default_factory=list)
    denominator: str = "all"

    def add(self, result: ProofResult):
        self.records.append((result.point_id, result.verdict, result.proof_time))

    @property
    def reachable_count(self) -> int:
        return sum(1 for _, v, _ in self.records if v == REACHABLE)

    @property
    def total_time(self) -> int:
        if self.denominator == "reachable":
            return sum(t for _, v, t in self.records if v == REACHABLE)
        return sum(t for _, _, t in self.records)

    def rate(self) -> float:
        c = self.reachable_count
        t = self.total_time
        if c == 0 or t == 0:
            return 0.0
        return c / t


def calibrate_time_limit(design: Design, props: Sequence[CoverProperty],
                         config: Optional[FormalConfig] = None) -> int:
    """Per-property proof budget from a sample of completed proofs: the
    configured quantile of their virtual proof times."""
    config = config or FormalConfig()
    probe = FormalConfig(depth_bound=config.depth_bound, time_limit=None,
                         max_states=config.max_states)
    times = []
    for prop in props[:config.calibration_sample]:
        times.append(prove(design, prop, probe).proof_time)
    if not times:
        raise FormalError("cannot calibrate from an empty property sample")
    times.sort()
    idx = min(len(times) - 1, max(0, math.ceil(config.calibration_quantile * len(times)) - 1))
    return max(1, times[idx])
