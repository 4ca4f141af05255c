"""Hardware IR: signals, modules, branch trees and the connectivity graph.

The IR models a synchronous single-clock design.  Combinational nets
(ports, wires, outputs) form a DAG over the whole design; registers commit
at the end of every cycle.  Branch trees carry the control structure that
coverage instrumentation and property generation walk.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .expr import Expr, mask

INF = math.inf


class ValidationError(ValueError):
    pass


@dataclass
class Signal:
    id: str
    width: int
    kind: str  # input | output | register | wire
    reset_value: Optional[int] = None


@dataclass
class Arm:
    assigns: List[Tuple[str, Expr]] = field(default_factory=list)
    child: Optional["BranchNode"] = None


@dataclass
class BranchNode:
    guard: Expr
    then_arm: Arm
    else_arm: Arm
    node_id: int = -1
    # case dispatch arms are path context only: they guard nested logic
    # but contribute no branch/condition coverage points of their own
    observe: bool = True


@dataclass
class HwModule:
    name: str
    ports: List[Tuple[str, str]] = field(default_factory=list)  # (signal id, driver id)
    outputs: List[str] = field(default_factory=list)
    wires: List[str] = field(default_factory=list)
    registers: List[str] = field(default_factory=list)
    comb_assigns: List[Tuple[str, Expr]] = field(default_factory=list)
    reg_assigns: List[Tuple[str, Expr]] = field(default_factory=list)  # unconditional, every cycle
    branch_trees: List[BranchNode] = field(default_factory=list)
    fsm: Dict[str, List[Tuple[str, int]]] = field(default_factory=dict)  # reg -> [(state name, value)]


@dataclass
class Design:
    name: str
    inputs: List[Signal]
    modules: List[HwModule]
    signals: Dict[str, Signal]
    meta: Dict[str, str] = field(default_factory=dict)
    bugs_available: List[str] = field(default_factory=list)
    bugs_enabled: frozenset = frozenset()
    comb_order: List[str] = field(default_factory=list)  # topological, set by validate

    def module(self, name: str) -> HwModule:
        for m in self.modules:
            if m.name == name:
                return m
        raise KeyError(name)

    def state_names(self) -> Dict[Tuple[str, int], str]:
        """(fsm register id, value) -> declared state label, for rendering."""
        out = {}
        for m in self.modules:
            for reg, states in m.fsm.items():
                for label, value in states:
                    out[(reg, value)] = label
        return out

    @property
    def input_ids(self) -> List[str]:
        return [s.id for s in self.inputs]


def _walk_arm_assigns(node: BranchNode):
    for arm in (node.then_arm, node.else_arm):
        yield from arm.assigns
        if arm.child is not None:
            yield from _walk_arm_assigns(arm.child)


def walk_nodes(node: BranchNode):
    yield node
    for arm in (node.then_arm, node.else_arm):
        if arm.child is not None:
            yield from walk_nodes(arm.child)


def validate(design: Design) -> Design:
    """Check all structural invariants; computes the combinational order."""
    if not design.modules:
        raise ValidationError("design has no modules")

    sigs = design.signals
    for s in sigs.values():
        if not (1 <= s.width <= 64):
            raise ValidationError(f"signal '{s.id}' has width {s.width}, must be 1..64")
        if s.kind == "register":
            if s.reset_value is None:
                raise ValidationError(f"register '{s.id}' has no reset value")
            if s.reset_value > mask(s.width):
                raise ValidationError(f"reset value of '{s.id}' does not fit its width")
        elif s.reset_value is not None:
            raise ValidationError(f"non-register '{s.id}' carries a reset value")

    # combinational dependency graph: ports, wires and outputs
    deps: Dict[str, List[str]] = {}
    comb_ids = set()
    for m in design.modules:
        for sid, driver in m.ports:
            if driver not in sigs:
                raise ValidationError(f"port '{sid}' driven by unknown signal '{driver}'")
            dkind = sigs[driver].kind
            if dkind not in ("input", "output"):
                raise ValidationError(
                    f"port '{sid}' must be driven by a design input or another "
                    f"module's output, not {dkind} '{driver}'")
            if sigs[driver].width != sigs[sid].width:
                raise ValidationError(f"width mismatch on port '{sid}' <- '{driver}'")
            comb_ids.add(sid)
            deps[sid] = [driver] if dkind == "output" else []
        assigned = set()
        for target, e in m.comb_assigns:
            if target in assigned:
                raise ValidationError(f"'{target}' assigned more than once")
            assigned.add(target)
            comb_ids.add(target)
            deps[target] = [r for r in e.refs() if sigs[r].kind in ("wire", "output") or _is_port(design, r)]
        for sid in m.wires + m.outputs:
            if sid not in assigned:
                raise ValidationError(f"{sigs[sid].kind} '{sid}' is never assigned")
        for target, e in m.reg_assigns:
            if sigs[target].kind != "register":
                raise ValidationError(f"non-blocking assignment to non-register '{target}'")
        for tree in m.branch_trees:
            for node in walk_nodes(tree):
                if node.guard.width != 1:
                    raise ValidationError(f"branch guard in '{m.name}' is not 1 bit wide")
            for target, _ in _walk_arm_assigns(tree):
                if sigs[target].kind != "register":
                    raise ValidationError(f"branch arm assigns non-register '{target}'")
        for reg, states in m.fsm.items():
            if sigs.get(reg) is None or sigs[reg].kind != "register":
                raise ValidationError(f"fsm designation on non-register '{reg}'")
            values = [v for _, v in states]
            if len(set(values)) != len(values):
                raise ValidationError(f"fsm '{reg}' has duplicate state values")
            for _, v in states:
                if v > mask(sigs[reg].width):
                    raise ValidationError(f"fsm state value {v} does not fit '{reg}'")

    # topological sort, cycle detection
    order: List[str] = []
    color: Dict[str, int] = {}
    stack: List[str] = []

    def visit(n: str):
        c = color.get(n, 0)
        if c == 1:
            cyc = stack[stack.index(n):] + [n]
            raise ValidationError("combinational cycle: " + " -> ".join(cyc))
        if c == 2:
            return
        color[n] = 1
        stack.append(n)
        for d in deps.get(n, ()):
            if d in comb_ids:
                visit(d)
        stack.pop()
        color[n] = 2
        order.append(n)

    for n in sorted(comb_ids):
        visit(n)
    design.comb_order = order

    for key, val in design.meta.items():
        if key in ("instruction_port", "valid", "halt", "exc_valid", "exc_code", "pc",
                   "commits") or key.startswith("gpr") or key.startswith("csr"):
            if val not in sigs:
                raise ValidationError(f"meta '{key}' names unknown signal '{val}'")
    return design


def _is_port(design: Design, sid: str) -> bool:
    k = design.signals[sid].kind
    return k == "input" and sid not in design.input_ids


@dataclass
class ModuleGraph:
    nodes: List[str]
    edges: List[Tuple[str, str, int]]  # (driver module, driven module, driven input count)
    distance: Dict[str, float]
    fanout_coi: Dict[str, int]


def build_graph(design: Design, transitive_coi: bool = True) -> ModuleGraph:
    nodes = [m.name for m in design.modules]
    owner = {}
    for m in design.modules:
        for sid in m.outputs:
            owner[sid] = m.name
    primary = set(design.input_ids)

    edge_count: Dict[Tuple[str, str], int] = {}
    reads_primary = set()
    # per-output direct fanout: output id -> number of foreign ports driven
    out_fan: Dict[str, Dict[str, int]] = {}
    for m in design.modules:
        for sid, driver in m.ports:
            if driver in primary:
                reads_primary.add(m.name)
            else:
                src = owner[driver]
                if src != m.name:
                    edge_count[(src, m.name)] = edge_count.get((src, m.name), 0) + 1
                    fan = out_fan.setdefault(driver, {})
                    fan[m.name] = fan.get(m.name, 0) + 1

    edges = [(a, b, c) for (a, b), c in sorted(edge_count.items())]

    distance = {n: INF for n in nodes}
    frontier = sorted(reads_primary)
    for n in frontier:
        distance[n] = 1
    succ: Dict[str, List[str]] = {n: [] for n in nodes}
    for a, b, _ in edges:
        succ[a].append(b)
    while frontier:
        nxt = []
        for n in frontier:
            for s in succ[n]:
                if distance[s] == INF:
                    distance[s] = distance[n] + 1
                    nxt.append(s)
        frontier = sorted(nxt)

    out_edges: Dict[str, List[Tuple[str, int]]] = {n: [] for n in nodes}
    for a, b, c in edges:
        out_edges[a].append((b, c))

    coi: Dict[str, int] = {}
    for m in design.modules:
        total = 0
        for o in m.outputs:
            total += _measure_coi(o, out_fan, out_edges, transitive_coi)
        coi[m.name] = total
    return ModuleGraph(nodes=nodes, edges=edges, distance=distance, fanout_coi=coi)


def _measure_coi(output: str, out_fan, out_edges, transitive: bool) -> int:
    fan = out_fan.get(output, {})
    count = sum(fan.values())
    if not transitive:
        return count
    seen = set(fan)
    frontier = list(fan)
    while frontier:
        mod = frontier.pop()
        for nxt, c in out_edges[mod]:
            count += c
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    return count


def compute_distances(design: Design) -> Dict[str, float]:
    return build_graph(design).distance


def compute_fanout_coi(design: Design, transitive: bool = True) -> Dict[str, int]:
    return build_graph(design, transitive_coi=transitive).fanout_coi
