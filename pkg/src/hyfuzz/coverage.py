"""Coverage point registry and campaign-time coverage bookkeeping.

Instrumentation allocates one point per observable behavior: branch arms,
guard-signal value combinations, assignment operand combinations, FSM
states and coded transitions, and 0->1 bit toggles on module outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

from . import expr as E
from .ir import Arm, BranchNode, Design, walk_nodes

METRICS = ("branch", "condition", "expression", "fsm", "toggle")

UNCOVERED = "uncovered"
COVERED = "covered"
UNREACHABLE = "unreachable"
DEFERRED = "deferred"

# condition coverage enumerates at most this many guard signals
MAX_CONDITION_SIGNALS = 4
# expression coverage is restricted to narrow operands
MAX_EXPR_OPERAND_WIDTH = 2
MAX_EXPR_COMBOS = 16


class CoverageError(ValueError):
    pass


class ContradictionError(RuntimeError):
    """A simulation covered a point previously proven unreachable."""


@dataclass(frozen=True)
class CoveragePoint:
    id: int
    kind: str  # branch|condition|expression|fsm_state|fsm_transition|toggle
    module: str
    descriptor: str
    # kind-specific payload, see instrument()
    data: tuple


def _bare_onebit_signals(guard: E.Expr, widths: Dict[str, int]) -> List[str]:
    """Distinct 1-bit signals referenced outside of comparisons, in first
    appearance order.  These are the operands condition coverage enumerates."""
    seen: List[str] = []

    def walk(e: E.Expr, in_cmp: bool):
        if isinstance(e, E.Ref):
            if not in_cmp and widths[e.name] == 1 and e.name not in seen:
                seen.append(e.name)
        elif isinstance(e, E.Un):
            walk(e.x, in_cmp)
        elif isinstance(e, E.Bin):
            inner = in_cmp or e.op in ("eq", "lt")
            walk(e.a, inner)
            walk(e.b, inner)
        elif isinstance(e, E.Slice):
            walk(e.x, True)
        elif isinstance(e, E.Concat):
            walk(e.a, in_cmp)
            walk(e.b, in_cmp)
        elif isinstance(e, E.Mux):
            walk(e.c, in_cmp)
            walk(e.a, in_cmp)
            walk(e.b, in_cmp)

    walk(guard, False)
    return seen


def _expr_operands(e: E.Expr, widths: Dict[str, int]) -> Optional[List[str]]:
    """Operand list for expression coverage, or None if not instrumentable."""
    ops: List[str] = []
    for r in e.refs():
        if r not in ops:
            ops.append(r)
    if isinstance(e, E.Ref) or len(ops) < 2 or len(ops) > 4:
        return None
    combos = 1
    for r in ops:
        if widths[r] > MAX_EXPR_OPERAND_WIDTH:
            return None
        combos *= 1 << widths[r]
    if combos > MAX_EXPR_COMBOS:
        return None
    return ops


def _coded_transitions(design: Design, module, reg: str) -> List[Tuple[int, int]]:
    """Transitions (A, B) present syntactically: an arm assigning reg <- B
    under a positive path guard constraining reg == A."""
    found: Set[Tuple[int, int]] = set()

    def guard_states(e: E.Expr) -> List[int]:
        out = []
        if isinstance(e, E.Bin):
            if e.op == "eq" and isinstance(e.a, E.Ref) and e.a.name == reg and \
                    isinstance(e.b, E.Const):
                out.append(e.b.value)
            elif e.op == "and":
                out.extend(guard_states(e.a))
                out.extend(guard_states(e.b))
        return out

    def walk(node: BranchNode, path_states: List[int]):
        for arm, taken in ((node.then_arm, True), (node.else_arm, False)):
            states = path_states + (guard_states(node.guard) if taken else [])
            for target, rhs in arm.assigns:
                if target == reg and isinstance(rhs, E.Const):
                    for a in states:
                        if a != rhs.value:
                            found.add((a, rhs.value))
            if arm.child is not None:
                walk(arm.child, states)

    for tree in module.branch_trees:
        walk(tree, [])
    return sorted(found)


@dataclass
class PointRegistry:
    design_name: str
    metrics: frozenset
    points: List[CoveragePoint] = field(default_factory=list)
    # lookup tables used by the simulator code generator
    branch_arm: Dict[Tuple[int, bool], int] = field(default_factory=dict)  # (node_id, taken)
    condition_base: Dict[int, Tuple[int, List[str]]] = field(default_factory=dict)
    expression_base: Dict[str, Tuple[int, List[str]]] = field(default_factory=dict)  # target sig
    fsm_state_pts: Dict[str, Dict[int, int]] = field(default_factory=dict)  # reg -> value -> pid
    fsm_trans_pts: Dict[str, Dict[Tuple[int, int], int]] = field(default_factory=dict)
    toggle_pts: Dict[str, Dict[int, int]] = field(default_factory=dict)  # signal -> bit -> pid
    # branch node ancillary data for the property generator
    node_paths: Dict[int, list] = field(default_factory=dict)  # node_id -> [(guard, polarity)]
    node_guards: Dict[int, E.Expr] = field(default_factory=dict)
    node_module: Dict[int, str] = field(default_factory=dict)

    def __len__(self):
        return len(self.points)

    def by_id(self, pid: int) -> CoveragePoint:
        return self.points[pid]


def instrument(design: Design, metrics: Sequence[str] = METRICS) -> PointRegistry:
    mset = frozenset(metrics)
    if not mset:
        raise CoverageError("empty metric set")
    unknown = mset - set(METRICS)
    if unknown:
        raise CoverageError(f"unknown metrics: {sorted(unknown)}")

    widths = {sid: s.width for sid, s in design.signals.items()}
    reg = PointRegistry(design_name=design.name, metrics=mset)

    def add(kind, module, descriptor, data) -> int:
        pid = len(reg.points)
        reg.points.append(CoveragePoint(pid, kind, module, descriptor, data))
        return pid

    for m in design.modules:
        # record guard paths for every node regardless of metric choice
        def record_paths(node: BranchNode, prefix):
            reg.node_paths[node.node_id] = list(prefix)
            reg.node_guards[node.node_id] = node.guard
            reg.node_module[node.node_id] = m.name
            if node.then_arm.child is not None:
                record_paths(node.then_arm.child, prefix + [(node.guard, True)])
            if node.else_arm.child is not None:
                record_paths(node.else_arm.child, prefix + [(node.guard, False)])

        for tree in m.branch_trees:
            record_paths(tree, [])

        if "branch" in mset:
            for tree in m.branch_trees:
                for node in walk_nodes(tree):
                    if not node.observe:
                        continue
                    for taken in (True, False):
                        word = "taken" if taken else "not-taken"
                        pid = add("branch", m.name,
                                  f"branch n{node.node_id} {word}",
                                  (node.node_id, taken))
                        reg.branch_arm[(node.node_id, taken)] = pid
        if "condition" in mset:
            for tree in m.branch_trees:
                for node in walk_nodes(tree):
                    if not node.observe:
                        continue
                    sigs = _bare_onebit_signals(node.guard, widths)
                    if not (1 <= len(sigs) <= MAX_CONDITION_SIGNALS):
                        continue
                    base = None
                    for combo in range(1 << len(sigs)):
                        bits = ", ".join(
                            f"{s.split('.', 1)[1]}={(combo >> (len(sigs) - 1 - i)) & 1}"
                            for i, s in enumerate(sigs))
                        pid = add("condition", m.name,
                                  f"cond n{node.node_id} {bits}",
                                  (node.node_id, tuple(sigs), combo))
                        if base is None:
                            base = pid
                    reg.condition_base[node.node_id] = (base, sigs)
        if "expression" in mset:
            for target, e in m.comb_assigns:
                ops = _expr_operands(e, widths)
                if ops is None:
                    continue
                radices = [1 << widths[r] for r in ops]
                total = 1
                for r in radices:
                    total *= r
                base = None
                for combo in range(total):
                    vals = []
                    rem = combo
                    for r in reversed(radices):
                        vals.append(rem % r)
                        rem //= r
                    vals.reverse()
                    bits = ", ".join(
                        f"{s.split('.', 1)[1]}={v}" for s, v in zip(ops, vals))
                    pid = add("expression", m.name,
                              f"expr {target.split('.', 1)[1]} {bits}",
                              (target, tuple(ops), combo))
                    if base is None:
                        base = pid
                reg.expression_base[target] = (base, ops)
        if "fsm" in mset:
            for fsm_reg, states in m.fsm.items():
                table = {}
                for label, value in states:
                    pid = add("fsm_state", m.name,
                              f"fsm {fsm_reg.split('.', 1)[1]} == {label}",
                              (fsm_reg, value))
                    table[value] = pid
                reg.fsm_state_pts[fsm_reg] = table
                names = {v: l for l, v in states}
                ttable = {}
                for a, b in _coded_transitions(design, m, fsm_reg):
                    pid = add("fsm_transition", m.name,
                              f"fsm {fsm_reg.split('.', 1)[1]} "
                              f"{names.get(a, a)} -> {names.get(b, b)}",
                              (fsm_reg, a, b))
                    ttable[(a, b)] = pid
                reg.fsm_trans_pts[fsm_reg] = ttable
        if "toggle" in mset:
            for sid in m.outputs:
                table = {}
                for bit in range(widths[sid]):
                    pid = add("toggle", m.name,
                              f"toggle {sid.split('.', 1)[1]}[{bit}] 0->1",
                              (sid, bit))
                    table[bit] = pid
                reg.toggle_pts[sid] = table
    return reg


@dataclass
class CoverageMap:
    registry: PointRegistry
    status: List[str] = field(default_factory=list)
    history: List[Tuple[str, Tuple[int, ...], int]] = field(default_factory=list)
    attempted: Set[int] = field(default_factory=set)
    _uncovered_per_module: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.status:
            self.status = [UNCOVERED] * len(self.registry)
        self._recount()

    def _recount(self):
        counts: Dict[str, int] = {}
        for p in self.registry.points:
            counts.setdefault(p.module, 0)
            if self.status[p.id] == UNCOVERED:
                counts[p.module] += 1
        self._uncovered_per_module = counts

    # --- queries -----------------------------------------------------
    @property
    def total(self) -> int:
        return len(self.registry)

    def count(self, status: str) -> int:
        return sum(1 for s in self.status if s == status)

    @property
    def covered(self) -> int:
        return self.count(COVERED)

    @property
    def unreachable(self) -> int:
        return self.count(UNREACHABLE)

    def coverage_fraction(self, adjusted: bool = True) -> float:
        denom = self.total - (self.unreachable if adjusted else 0)
        if denom == 0:
            return 1.0
        return self.covered / denom

    def uncovered_by_module(self) -> Dict[str, List[int]]:
        out: Dict[str, List[int]] = {}
        for p in self.registry.points:
            out.setdefault(p.module, [])
            if self.status[p.id] == UNCOVERED:
                out[p.module].append(p.id)
        return out

    def selectable_points(self) -> List[int]:
        return [p.id for p in self.registry.points if self.status[p.id] == UNCOVERED]

    # --- updates -----------------------------------------------------
    def absorb(self, point_ids: Sequence[int], source_id: str,
               virtual_time: int = 0) -> int:
        """Mark points covered; returns the newly-covered count."""
        new: List[int] = []
        for pid in point_ids:
            if pid < 0 or pid >= len(self.status):
                raise CoverageError(f"unknown coverage point id {pid}")
            s = self.status[pid]
            if s == UNREACHABLE:
                raise ContradictionError(
                    f"point {pid} ({self.registry.by_id(pid).descriptor}) was "
                    f"proven unreachable but covered by {source_id}")
            if s in (UNCOVERED, DEFERRED):
                if s == UNCOVERED:
                    p = self.registry.by_id(pid)
                    self._uncovered_per_module[p.module] -= 1
                self.status[pid] = COVERED
                new.append(pid)
        self.history.append((source_id, tuple(new), virtual_time))
        return len(new)

    def mark_unreachable(self, pid: int):
        if self.status[pid] == UNCOVERED:
            self._uncovered_per_module[self.registry.by_id(pid).module] -= 1
        if self.status[pid] in (UNCOVERED, DEFERRED):
            self.status[pid] = UNREACHABLE

    def mark_deferred(self, pid: int):
        if self.status[pid] == UNCOVERED:
            self._uncovered_per_module[self.registry.by_id(pid).module] -= 1
            self.status[pid] = DEFERRED

    def mark_attempted(self, pid: int):
        self.attempted.add(pid)

    def retry_deferred_if_exhausted(self) -> int:
        """Deferred points re-enter the pool once every uncovered point has
        been attempted; returns the number of points released."""
        for pid, s in enumerate(self.status):
            if s == UNCOVERED and pid not in self.attempted:
                return 0
        released = 0
        for pid, s in enumerate(self.status):
            if s == DEFERRED:
                self.status[pid] = UNCOVERED
                self.attempted.discard(pid)
                p = self.registry.by_id(pid)
                self._uncovered_per_module[p.module] = \
                    self._uncovered_per_module.get(p.module, 0) + 1
                released += 1
        return released

    def uncovered_count(self, module: str) -> int:
        return self._uncovered_per_module.get(module, 0)

    def snapshot_lines(self) -> List[str]:
        """Stable per-point export for diffing across runs."""
        lines = []
        for p in self.registry.points:
            lines.append(f"{p.id}\t{p.module}\t{p.kind}\t{p.descriptor}\t{self.status[p.id]}")
        rollup: Dict[str, Dict[str, int]] = {}
        for p in self.registry.points:
            r = rollup.setdefault(p.module, {})
            r[self.status[p.id]] = r.get(self.status[p.id], 0) + 1
        for mod in sorted(rollup):
            parts = " ".join(f"{k}={v}" for k, v in sorted(rollup[mod].items()))
            lines.append(f"# {mod}: {parts}")
        return lines
