"""Cycle-accurate simulation of a design via generated python kernels.

For each (design, instrumentation) pair we generate one python function
that evaluates the combinational nets in topological order, walks the
branch trees, commits register next-values and reports fired coverage
points.  Generating code keeps multi-thousand-test-case campaigns fast
while staying bit-identical to the interpretive semantics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from . import expr as E
from .coverage import PointRegistry, instrument
from .ir import Arm, BranchNode, Design
from .isa import ArchState

EXC_ILLEGAL = 1
EXC_ACCESS = 2
EXC_BREAK = 3

EXC_NAMES = {EXC_ILLEGAL: "illegal-instruction", EXC_ACCESS: "access-fault",
             EXC_BREAK: "breakpoint"}


class SimError(ValueError):
    pass


@dataclass(frozen=True)
class CoverageEvent:
    point_id: int
    cycle: int
    kind: str


@dataclass(frozen=True)
class SimState:
    regs: tuple
    prev: Optional[tuple]  # settled outputs + fsm reg values of the previous cycle
    cycle: int
    taint: int = 0  # bitmask over taint-cone registers
    poison_observed: bool = False
    exceptions: Tuple[Tuple[int, int], ...] = ()
    halted: bool = False


@dataclass
class RunRecord:
    testcase_id: str
    fired: Dict[int, int]  # point id -> first cycle
    cycles: int
    virtual_time: int
    timeout: bool = False
    arch: Optional[ArchState] = None

    def log_fields(self, new_points: int, mismatch: bool) -> dict:
        return {"testcase": self.testcase_id, "new_points": new_points,
                "cycles": self.cycles, "virtual_time": self.virtual_time,
                "mismatch": mismatch}


def comb_defs(design: Design) -> Dict[str, E.Expr]:
    """Defining expression of every combinational signal (ports included)."""
    out: Dict[str, E.Expr] = {}
    for m in design.modules:
        for sid, driver in m.ports:
            out[sid] = E.Ref(driver, design.signals[driver].width)
        for t, e in m.comb_assigns:
            out[t] = e
    return out


def needed_comb(design: Design, roots) -> set:
    """Combinational signals transitively required to evaluate roots."""
    defs = comb_defs(design)
    need = set()
    work = [r for r in roots if r in defs]
    while work:
        s = work.pop()
        if s in need:
            continue
        need.add(s)
        for r in defs[s].refs():
            if r in defs and r not in need:
                work.append(r)
    return need


def compile_predicate(design: Design, e: E.Expr, cd: "CompiledDesign"):
    """Compile an expression to a function of (regs, inputs) -> int."""
    for r in set(e.refs()):
        if r not in design.signals:
            raise SimError(f"expression references unknown signal '{r}'")
    defs = comb_defs(design)
    need = needed_comb(design, set(e.refs()))
    var: Dict[str, str] = {}
    for i, sid in enumerate(cd.input_ids):
        var[sid] = f"x{i}"
    for sid, i in cd.reg_index.items():
        var[sid] = f"r{i}"
    for j, sid in enumerate(design.comb_order):
        var[sid] = f"c{j}"
    L = ["def pred(S, X):"]
    if cd.reg_ids:
        L.append("    (" + ", ".join(f"r{i}" for i in range(len(cd.reg_ids))) + ",) = S")
    if cd.input_ids:
        L.append("    (" + ", ".join(f"x{i}" for i in range(len(cd.input_ids))) + ",) = X")
    for sid in design.comb_order:
        if sid in need:
            L.append(f"    {var[sid]} = {E.compile_expr(defs[sid], var)}")
    L.append(f"    return {E.compile_expr(e, var)}")
    glb = {"__builtins__": {"min": min}}
    exec(compile("\n".join(L), "<predicate>", "exec"), glb)
    return glb["pred"]


def _taint_cone(design: Design) -> set:
    """Signals that can ever carry the poison sentinel."""
    assigns: List[Tuple[str, E.Expr]] = []
    for m in design.modules:
        assigns.extend(m.comb_assigns)
        assigns.extend(m.reg_assigns)

        def walk(node: BranchNode):
            for arm in (node.then_arm, node.else_arm):
                assigns.extend(arm.assigns)
                if arm.child is not None:
                    walk(arm.child)
        for tree in m.branch_trees:
            walk(tree)
    # ports forward their driver
    for m in design.modules:
        for sid, driver in m.ports:
            assigns.append((sid, E.Ref(driver, design.signals[driver].width)))

    def has_poison(e: E.Expr) -> bool:
        if isinstance(e, E.PoisonExpr):
            return True
        if isinstance(e, E.Un):
            return has_poison(e.x)
        if isinstance(e, E.Bin):
            return has_poison(e.a) or has_poison(e.b)
        if isinstance(e, E.Slice):
            return has_poison(e.x)
        if isinstance(e, E.Concat):
            return has_poison(e.a) or has_poison(e.b)
        if isinstance(e, E.Mux):
            return has_poison(e.c) or has_poison(e.a) or has_poison(e.b)
        return False

    cone = {t for t, e in assigns if has_poison(e)}
    changed = True
    while changed:
        changed = False
        for t, e in assigns:
            if t not in cone and any(r in cone for r in e.refs()):
                cone.add(t)
                changed = True
    return cone


class CompiledDesign:
    """A design plus its instrumentation, compiled to a step kernel."""

    def __init__(self, design: Design, registry: Optional[PointRegistry] = None,
                 metrics: Sequence[str] = ("branch", "condition", "expression",
                                           "fsm", "toggle")):
        self.design = design
        self.registry = registry if registry is not None else instrument(design, metrics)
        self.reg_ids = [r for m in design.modules for r in m.registers]
        self.reg_index = {sid: i for i, sid in enumerate(self.reg_ids)}
        self.input_ids = design.input_ids
        self.reset_regs = tuple(design.signals[sid].reset_value for sid in self.reg_ids)
        self.cone = _taint_cone(design)
        self.cone_regs = [sid for sid in self.reg_ids if sid in self.cone]
        self.cone_reg_bit = {sid: i for i, sid in enumerate(self.cone_regs)}

        # previous-cycle tuple layout: toggle-watched outputs then fsm regs
        self.prev_outputs = sorted(self.registry.toggle_pts)
        self.prev_fsm = sorted(self.registry.fsm_trans_pts)
        # watch tuple layout
        self.watch_ids = []
        for key in ("valid", "halt", "exc_valid", "exc_code", "pc"):
            sid = design.meta.get(key)
            self.watch_ids.append(sid)
        self.arch_gprs = [design.meta.get(f"gpr{i}") for i in range(16)]
        self.arch_csrs = [design.meta.get(f"csr{i}") for i in range(4)]
        self.commits_reg = design.meta.get("commits")
        self.has_arch = all(self.arch_gprs) and all(self.arch_csrs) and \
            self.commits_reg is not None

        self.kernel = self._build_kernel()

        # architectural signals may be registers or register-only wires
        self._extract = {}
        self.arch_taint_mask = 0
        if self.has_arch:
            for sid in self.arch_gprs + self.arch_csrs + [self.commits_reg]:
                if sid in self.reg_index:
                    if sid in self.cone_reg_bit:
                        self.arch_taint_mask |= 1 << self.cone_reg_bit[sid]
                    continue
                deps = needed_comb(design, {sid}) | {sid}
                defs = comb_defs(design)
                leaf_refs = set()
                for s in deps:
                    leaf_refs.update(defs[s].refs())
                if leaf_refs & set(self.input_ids):
                    raise SimError(
                        f"architectural signal '{sid}' depends on primary inputs")
                for r in leaf_refs:
                    if r in self.cone_reg_bit:
                        self.arch_taint_mask |= 1 << self.cone_reg_bit[r]
                ref = E.Ref(sid, design.signals[sid].width)
                self._extract[sid] = compile_predicate(design, ref, self)
            self._zero_inputs = tuple(0 for _ in self.input_ids)

    # ------------------------------------------------------------------
    def _build_kernel(self):
        design, reg = self.design, self.registry
        sigs = design.signals
        var: Dict[str, str] = {}
        for i, sid in enumerate(self.input_ids):
            var[sid] = f"x{i}"
        for sid, i in self.reg_index.items():
            var[sid] = f"r{i}"
        for j, sid in enumerate(design.comb_order):
            var[sid] = f"c{j}"
        tvar = {sid: "t_" + var[sid] for sid in self.cone}

        ctx: Dict[str, object] = {}
        L: List[str] = []
        ind = "    "

        def shadow(e: E.Expr) -> str:
            # Taint propagation.  'and' gates taint on the other operand
            # being nonzero, so the all-ones/all-zero masks produced by
            # lowered conditionals drop the taint of unselected branches.
            if isinstance(e, E.PoisonExpr):
                return "1"
            if isinstance(e, E.Const):
                return "0"
            if isinstance(e, E.Ref):
                return tvar.get(e.name, "0")
            if isinstance(e, (E.Un, E.Slice)):
                return shadow(e.x)
            if isinstance(e, E.Bin) and e.op == "and":
                ta, tb = shadow(e.a), shadow(e.b)
                terms = []
                if ta != "0":
                    terms.append(f"({ta} if {E.compile_expr(e.b, var)} else 0)")
                if tb != "0":
                    terms.append(f"({tb} if {E.compile_expr(e.a, var)} else 0)")
                return "(" + " | ".join(terms) + ")" if terms else "0"
            if isinstance(e, (E.Bin, E.Concat)):
                parts = [t for t in (shadow(e.a), shadow(e.b)) if t != "0"]
                if not parts:
                    return "0"
                return "(" + " | ".join(parts) + ")" if len(parts) > 1 else parts[0]
            if isinstance(e, E.Mux):
                tc, ta, tb = shadow(e.c), shadow(e.a), shadow(e.b)
                if ta == tb:
                    sel = ta
                else:
                    sel = f"({ta} if {E.compile_expr(e.c, var)} else {tb})"
                if tc == "0":
                    return sel
                return sel if sel == tc else f"({tc} | {sel})"
            return "0"

        args = "S, P, X, T"
        L.append(f"def kernel({args}):")
        if self.reg_ids:
            L.append(ind + "(" + ", ".join(f"r{i}" for i in range(len(self.reg_ids))) + ",) = S")
        if self.input_ids:
            L.append(ind + "(" + ", ".join(f"x{i}" for i in range(len(self.input_ids))) + ",) = X")
        L.append(ind + "F = 0")
        for sid in self.cone_regs:
            L.append(ind + f"{tvar[sid]} = (T >> {self.cone_reg_bit[sid]}) & 1")

        # combinational settle
        comb_src: Dict[str, Tuple[str, object]] = {}
        for m in design.modules:
            for sid, driver in m.ports:
                comb_src[sid] = ("port", driver)
            for t, e in m.comb_assigns:
                comb_src[t] = ("expr", e)
        for sid in design.comb_order:
            mode, payload = comb_src[sid]
            if mode == "port":
                L.append(ind + f"{var[sid]} = {var[payload]}")
                if sid in self.cone:
                    src = tvar.get(payload, "0")
                    L.append(ind + f"{tvar[sid]} = {src}")
            else:
                L.append(ind + f"{var[sid]} = {E.compile_expr(payload, var)}")
                if sid in self.cone:
                    L.append(ind + f"{tvar[sid]} = {shadow(payload)}")

        # register holds by default
        for i in range(len(self.reg_ids)):
            L.append(ind + f"n{i} = r{i}")
        for sid in self.cone_regs:
            L.append(ind + f"tn_{self.reg_index[sid]} = {tvar[sid]}")

        def emit_assign(target: str, e: E.Expr, depth: str):
            i = self.reg_index[target]
            L.append(depth + f"n{i} = {E.compile_expr(e, var)}")
            if target in self.cone:
                L.append(depth + f"tn_{i} = {shadow(e)}")

        def emit_node(node: BranchNode, depth: str):
            cond = reg.condition_base.get(node.node_id)
            if cond is not None:
                base, csigs = cond
                k = len(csigs)
                combo = " | ".join(
                    f"({var[s]} << {k - 1 - i})" if k - 1 - i else var[s]
                    for i, s in enumerate(csigs))
                L.append(depth + f"F |= 1 << ({base} + ({combo}))")
            g = E.compile_expr(node.guard, var)
            L.append(depth + f"if {g}:")
            self._emit_arm(node.then_arm, node.node_id, True, depth + "    ",
                           L, emit_assign, emit_node)
            L.append(depth + "else:")
            self._emit_arm(node.else_arm, node.node_id, False, depth + "    ",
                           L, emit_assign, emit_node)

        for m in design.modules:
            for t, e in m.reg_assigns:
                emit_assign(t, e, ind)
            for tree in m.branch_trees:
                emit_node(tree, ind)

        # expression coverage fires every cycle
        widths = {sid: s.width for sid, s in sigs.items()}
        for target, (base, ops) in reg.expression_base.items():
            parts = []
            total = 1
            for r in ops:
                total *= 1 << widths[r]
            acc = total
            for r in ops:
                acc //= 1 << widths[r]
                parts.append(f"({var[r]} * {acc})" if acc > 1 else var[r])
            combo = " + ".join(parts)
            L.append(ind + f"F |= 1 << ({base} + ({combo}))")

        # fsm state coverage on the current (pre-commit) value
        fsm_ctr = 0
        for fsm_reg_id, table in reg.fsm_state_pts.items():
            if not table:
                continue
            name = f"FS{fsm_ctr}"
            ctx[name] = {k: 1 << p for k, p in dict(table).items()}
            L.append(ind + f"F |= {name}.get({var[fsm_reg_id]}, 0)")
            fsm_ctr += 1

        # previous-cycle dependent coverage: transitions and toggles
        L.append(ind + "if P is not None:")
        body = False
        for j, sid in enumerate(self.prev_outputs):
            table = reg.toggle_pts[sid]
            if not table:
                continue
            base = table[0]
            w = sigs[sid].width
            L.append(ind + f"    F |= ({var[sid]} & (P[{j}] ^ {E.mask(w)})) << {base}")
            body = True
        off = len(self.prev_outputs)
        tctr = 0
        for k, fsm_reg_id in enumerate(self.prev_fsm):
            table = reg.fsm_trans_pts[fsm_reg_id]
            if not table:
                continue
            name = f"FT{tctr}"
            ctx[name] = {k2: 1 << p for k2, p in dict(table).items()}
            L.append(ind + f"    F |= {name}.get((P[{off + k}], {var[fsm_reg_id]}), 0)")
            body = True
            tctr += 1
        if not body:
            L.append(ind + "    pass")

        prev_parts = [var[sid] for sid in self.prev_outputs] + \
            [var[sid] for sid in self.prev_fsm]
        L.append(ind + "NP = (" + ", ".join(prev_parts) + ("," if prev_parts else "") + ")")
        watch_parts = [var[w] if w is not None else "0" for w in self.watch_ids]
        L.append(ind + "W = (" + ", ".join(watch_parts) + ",)")
        nt_parts = [f"(tn_{self.reg_index[sid]} << {self.cone_reg_bit[sid]})"
                    for sid in self.cone_regs]
        L.append(ind + "NT = " + (" | ".join(nt_parts) if nt_parts else "0"))
        n_parts = ", ".join(f"n{i}" for i in range(len(self.reg_ids)))
        L.append(ind + f"return ({n_parts}{',' if self.reg_ids else ''}), NP, W, F, NT")

        src = "\n".join(L)
        self.kernel_source = src
        glb = {"__builtins__": {"min": min}}
        glb.update(ctx)
        exec(compile(src, f"<kernel:{design.name}>", "exec"), glb)
        return glb["kernel"]

    def _emit_arm(self, arm: Arm, node_id: int, taken: bool, depth: str,
                  L: List[str], emit_assign, emit_node):
        pid = self.registry.branch_arm.get((node_id, taken))
        if pid is not None:
            L.append(depth + f"F |= {1 << pid}")
        emitted = pid is not None
        for t, e in arm.assigns:
            emit_assign(t, e, depth)
            emitted = True
        if arm.child is not None:
            emit_node(arm.child, depth)
            emitted = True
        if not emitted:
            L.append(depth + "pass")

    # ------------------------------------------------------------------
    def reset(self) -> SimState:
        return SimState(regs=self.reset_regs, prev=None, cycle=0)

    def step(self, state: SimState, inputs: Dict[str, int]) -> Tuple[SimState, List[CoverageEvent]]:
        xs = []
        for sid in self.input_ids:
            if sid not in inputs:
                raise SimError(f"missing input assignment for '{sid}'")
            v = inputs[sid]
            if v > E.mask(self.design.signals[sid].width):
                raise SimError(f"value for '{sid}' exceeds its width")
            xs.append(v)
        extra = set(inputs) - set(self.input_ids)
        if extra:
            raise SimError(f"unknown inputs: {sorted(extra)}")
        st, events = self._step_raw(state, tuple(xs))
        evs = []
        mask = events
        while mask:
            low = mask & -mask
            pid = low.bit_length() - 1
            evs.append(CoverageEvent(pid, state.cycle, self.registry.by_id(pid).kind))
            mask ^= low
        return st, evs

    def _step_raw(self, state: SimState, xs: tuple) -> Tuple[SimState, int]:
        N, NP, W, F, NT = self.kernel(state.regs, state.prev, xs, state.taint)
        valid, halt, exc_valid, exc_code, pc = W
        exceptions = state.exceptions
        if exc_valid:
            exceptions = exceptions + ((exc_code, pc),)
        poison = state.poison_observed or bool(NT & self.arch_taint_mask)
        st = SimState(regs=N, prev=NP, cycle=state.cycle + 1, taint=NT,
                      poison_observed=poison, exceptions=exceptions,
                      halted=bool(halt))
        return st, F

    def run_words(self, words: Sequence[int], testcase_id: str = "",
                  max_cycles: int = 100000) -> RunRecord:
        """Feed one instruction word per cycle until the words run out.

        A halted design keeps clocking (architecturally inert), so states
        that are only visible after the halt still count for coverage.
        """
        iport = self.design.meta.get("instruction_port")
        if iport is None:
            raise SimError("design declares no instruction_port")
        idx = self.input_ids.index(iport)
        nin = len(self.input_ids)
        kernel = self.kernel
        regs = self.reset_regs
        prev = None
        taint = 0
        fired: Dict[int, int] = {}
        seen = 0
        exceptions: List[Tuple[int, int]] = []
        poison_observed = False
        cycle = 0
        timeout = False
        for w in words:
            if cycle >= max_cycles:
                timeout = True
                break
            xs = [0] * nin
            xs[idx] = w
            N, NP, W, F, NT = kernel(regs, prev, tuple(xs), taint)
            new = F & ~seen
            if new:
                seen |= new
                while new:
                    low = new & -new
                    fired[low.bit_length() - 1] = cycle
                    new ^= low
            if W[2]:
                exceptions.append((W[3], W[4]))
            if NT & self.arch_taint_mask:
                poison_observed = True
            regs, prev, taint = N, NP, NT
            cycle += 1
        arch = None
        if self.has_arch:
            def val(sid):
                if sid in self.reg_index:
                    return regs[self.reg_index[sid]]
                return self._extract[sid](regs, self._zero_inputs)
            arch = ArchState(
                gprs=[val(s) for s in self.arch_gprs],
                csrs=[val(s) for s in self.arch_csrs],
                commits=val(self.commits_reg),
                exceptions=list(exceptions),
                poison_observed=poison_observed,
            )
        return RunRecord(testcase_id=testcase_id, fired=fired, cycles=cycle,
                         virtual_time=cycle, timeout=timeout, arch=arch)


_COMPILE_CACHE: Dict[Tuple[int, frozenset], CompiledDesign] = {}


def compile_design(design: Design, metrics: Sequence[str] = ("branch", "condition",
                                                             "expression", "fsm",
                                                             "toggle")) -> CompiledDesign:
    key = (id(design), frozenset(metrics))
    cd = _COMPILE_CACHE.get(key)
    if cd is None:
        cd = CompiledDesign(design, metrics=metrics)
        _COMPILE_CACHE[key] = cd
    return cd
