"""Parser and writer for the on-disk design description format.

One design per file.  Shape:

    design irq_demo {
      input instr : 32;
      meta instruction_port = instr;
      module csr {
        input w_instr : 32 <- instr;
        reg mie : 4 = 0;
        wire we : 1;
        output mie_val : 4;
        assign we = w_instr[31:24] == 0x0E;
        assign mie_val = mie;
        if (we) { mie <= w_instr[11:0]; } else { }
        fsm state states { IDLE = 0, RUN = 1 }
        bug B3 { rd_val <= poison; }
      }
    }

Registers may also take unconditional non-blocking assignments
(``reg <= expr;``); statements execute in order, last write wins.
Unknown constructs are rejected with a line/column diagnostic.
"""

from __future__ import annotations

import re
from typing import List, Optional, Set, Tuple

from . import expr as E
from .ir import Arm, BranchNode, Design, HwModule, Signal, ValidationError, validate


class ParseError(ValueError):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"line {line}, col {col}: {msg}")
        self.line = line
        self.col = col


_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<num>\d+'[bhd][0-9a-fA-F_]+|0x[0-9a-fA-F]+|\d+)
  | (?P<id>[A-Za-z_][A-Za-z_0-9]*(\.[A-Za-z_][A-Za-z_0-9]*)?)
  | (?P<op><=|<-|==|!=|<<|>>|&&|\|\||[{}()\[\]:;,=<>+\-*&|^~!?.])
""", re.VERBOSE)

KEYWORDS = {"design", "module", "input", "output", "wire", "reg", "assign",
            "if", "else", "case", "default", "fsm", "states", "meta", "bug",
            "poison", "orr"}


class _Lexer:
    def __init__(self, text: str):
        self.toks: List[Tuple[str, str, int, int]] = []
        line, col = 1, 1
        pos = 0
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if m is None:
                raise ParseError(f"unexpected character {text[pos]!r}", line, col)
            kind = m.lastgroup
            val = m.group()
            if kind != "ws":
                self.toks.append((kind, val, line, col))
            nl = val.count("\n")
            if nl:
                line += nl
                col = len(val) - val.rfind("\n")
            else:
                col += len(val)
            pos = m.end()
        self.toks.append(("eof", "", line, col))
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def next(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, val: str):
        kind, v, line, col = self.next()
        if v != val:
            raise ParseError(f"expected {val!r}, got {v!r}", line, col)

    def at(self, val: str) -> bool:
        return self.peek()[1] == val

    def accept(self, val: str) -> bool:
        if self.at(val):
            self.next()
            return True
        return False

    def ident(self) -> str:
        kind, v, line, col = self.next()
        if kind != "id":
            raise ParseError(f"expected identifier, got {v!r}", line, col)
        return v

    def err(self, msg: str):
        _, v, line, col = self.peek()
        raise ParseError(msg + f" (at {v!r})", line, col)


def _parse_int(tok: str) -> Tuple[int, Optional[int]]:
    """Returns (value, explicit width or None)."""
    if "'" in tok:
        w, rest = tok.split("'", 1)
        base = {"b": 2, "h": 16, "d": 10}[rest[0]]
        return int(rest[1:].replace("_", ""), base), int(w)
    if tok.startswith("0x"):
        return int(tok, 16), None
    return int(tok), None


class _ExprParser:
    """Precedence-climbing expression parser over the shared lexer."""

    def __init__(self, lx: _Lexer):
        self.lx = lx

    def parse(self) -> E.Expr:
        return self._ternary()

    def _ternary(self) -> E.Expr:
        c = self._binary(0)
        if self.lx.accept("?"):
            a = self._ternary()
            self.lx.expect(":")
            b = self._ternary()
            return E.Mux(c, a, b)
        return c

    _LEVELS = [
        ("||",), ("&&",), ("|",), ("^",), ("&",), ("==", "!="), ("<",),
        ("<<", ">>"), ("+", "-"), ("*",),
    ]
    _OPMAP = {"||": "or", "&&": "and", "|": "or", "^": "xor", "&": "and",
              "==": "eq", "<": "lt", "<<": "shl", ">>": "shr",
              "+": "add", "-": "sub", "*": "mul"}

    def _binary(self, level: int) -> E.Expr:
        if level >= len(self._LEVELS):
            return self._unary()
        left = self._binary(level + 1)
        ops = self._LEVELS[level]
        while self.lx.peek()[1] in ops:
            op = self.lx.next()[1]
            right = self._binary(level + 1)
            if op == "!=":
                left = E.negate(E.Bin("eq", left, right))
            else:
                left = E.Bin(self._OPMAP[op], left, right)
        return left

    def _unary(self) -> E.Expr:
        if self.lx.accept("!"):
            return E.negate(self._unary())
        if self.lx.accept("~"):
            return E.Un("not", self._unary())
        if self.lx.accept("-"):
            return E.Bin("sub", E.Const(0), self._unary())
        return self._postfix()

    def _postfix(self) -> E.Expr:
        e = self._primary()
        while self.lx.at("["):
            self.lx.next()
            hi, _ = _parse_int(self.lx.next()[1])
            lo = hi
            if self.lx.accept(":"):
                lo, _ = _parse_int(self.lx.next()[1])
            self.lx.expect("]")
            e = E.Slice(e, hi, lo)
        return e

    def _primary(self) -> E.Expr:
        kind, v, line, col = self.lx.peek()
        if self.lx.accept("("):
            e = self.parse()
            self.lx.expect(")")
            return e
        if self.lx.accept("{"):
            e = self.parse()
            self.lx.expect(",")
            rest = self.parse()
            while self.lx.accept(","):
                rest = E.Concat(rest, self.parse())
            self.lx.expect("}")
            return E.Concat(e, rest)
        if kind == "num":
            self.lx.next()
            value, width = _parse_int(v)
            return E.Const(value, width)
        if v == "poison":
            self.lx.next()
            return E.PoisonExpr()
        if v == "orr":
            self.lx.next()
            self.lx.expect("(")
            e = self.parse()
            self.lx.expect(")")
            return E.Un("orr", e)
        if kind == "id":
            self.lx.next()
            return E.Ref(v)
        raise ParseError(f"expected expression, got {v!r}", line, col)


class _ModuleParser:
    def __init__(self, lx: _Lexer, design_name: str, enabled_bugs: Set[str],
                 bugs_seen: Set[str], node_counter: List[int]):
        self.lx = lx
        self.enabled = enabled_bugs
        self.bugs_seen = bugs_seen
        self.node_counter = node_counter
        self.ep = _ExprParser(lx)

    def parse(self, name: str) -> Tuple[HwModule, List[Signal]]:
        self.mod = HwModule(name=name)
        self.sigs: List[Signal] = []
        self.lx.expect("{")
        while not self.lx.accept("}"):
            self._stmt(top=True)
        return self.mod, self.sigs

    def _qual(self, name: str) -> str:
        return f"{self.mod.name}.{name}"

    def _stmt(self, top: bool):
        lx = self.lx
        if lx.accept("input"):
            name = lx.ident()
            lx.expect(":")
            width, _ = _parse_int(lx.next()[1])
            lx.expect("<-")
            driver = lx.ident()
            lx.expect(";")
            sid = self._qual(name)
            self.sigs.append(Signal(sid, width, "input"))
            self.mod.ports.append((sid, driver))
        elif lx.at("output") or lx.at("wire"):
            kind = "wire" if lx.next()[1] == "wire" else "output"
            name = lx.ident()
            lx.expect(":")
            width, _ = _parse_int(lx.next()[1])
            lx.expect(";")
            sid = self._qual(name)
            self.sigs.append(Signal(sid, width, kind))
            (self.mod.wires if kind == "wire" else self.mod.outputs).append(sid)
        elif lx.accept("reg"):
            name = lx.ident()
            lx.expect(":")
            width, _ = _parse_int(lx.next()[1])
            lx.expect("=")
            reset, _ = _parse_int(lx.next()[1])
            lx.expect(";")
            sid = self._qual(name)
            self.sigs.append(Signal(sid, width, "register", reset))
            self.mod.registers.append(sid)
        elif lx.accept("assign"):
            name = lx.ident()
            lx.expect("=")
            e = self.ep.parse()
            lx.expect(";")
            self.mod.comb_assigns.append((self._qual(name), e))
        elif lx.at("if"):
            node = self._if()
            self.mod.branch_trees.append(node)
        elif lx.at("case"):
            node = self._case()
            self.mod.branch_trees.append(node)
        elif lx.accept("fsm"):
            name = lx.ident()
            lx.expect("states")
            lx.expect("{")
            states = []
            while True:
                label = lx.ident()
                lx.expect("=")
                value, _ = _parse_int(lx.next()[1])
                states.append((label, value))
                if not lx.accept(","):
                    break
            lx.expect("}")
            self.mod.fsm[self._qual(name)] = states
        elif lx.accept("bug"):
            bug_id = lx.ident()
            self.bugs_seen.add(bug_id)
            take = bug_id in self.enabled
            self._bug_region(take, top)
            if lx.at("else"):
                lx.next()
                self._bug_region(not take, top)
        elif lx.peek()[0] == "id":
            name = lx.ident()
            lx.expect("<=")
            e = self.ep.parse()
            lx.expect(";")
            self.mod.reg_assigns.append((self._qual(name), e))
        else:
            lx.err("unknown construct in module body")

    def _bug_region(self, take: bool, top: bool):
        lx = self.lx
        lx.expect("{")
        if take:
            while not lx.accept("}"):
                self._stmt(top)
        else:
            depth = 1
            while depth:
                _, v, line, col = lx.next()
                if v == "{":
                    depth += 1
                elif v == "}":
                    depth -= 1
                elif v == "":
                    raise ParseError("unterminated bug region", line, col)

    def _if(self) -> BranchNode:
        lx = self.lx
        lx.expect("if")
        lx.expect("(")
        guard = self.ep.parse()
        lx.expect(")")
        then_arm = self._arm_block()
        if lx.accept("else"):
            if lx.at("if"):
                else_arm = Arm(assigns=[], child=self._if())
            else:
                else_arm = self._arm_block()
        else:
            else_arm = Arm()
        node_id = self.node_counter[0]
        self.node_counter[0] += 1
        return BranchNode(guard=guard, then_arm=then_arm, else_arm=else_arm,
                          node_id=node_id)

    def _case(self) -> BranchNode:
        """A case dispatch lowers to a chain of unobserved branch nodes:
        the labels shape guard paths for nested logic without adding
        branch or condition coverage points of their own."""
        lx = self.lx
        lx.expect("case")
        lx.expect("(")
        subject = self.ep.parse()
        lx.expect(")")
        lx.expect("{")
        arms: List[Tuple[E.Expr, Arm]] = []
        default = Arm()
        while not lx.accept("}"):
            if lx.accept("default"):
                lx.expect(":")
                default = self._arm_block()
            else:
                value, width = _parse_int(lx.next()[1])
                lx.expect(":")
                arms.append((E.Const(value, width), self._arm_block()))
        if not arms:
            lx.err("case needs at least one labeled arm")
        node: Optional[BranchNode] = None
        for label, arm in reversed(arms):
            else_arm = default if node is None else Arm(assigns=[], child=node)
            node_id = self.node_counter[0]
            self.node_counter[0] += 1
            node = BranchNode(guard=E.Bin("eq", subject, label),
                              then_arm=arm, else_arm=else_arm,
                              node_id=node_id, observe=False)
        return node

    def _arm_block(self) -> Arm:
        lx = self.lx
        arm = Arm()
        lx.expect("{")
        while not lx.accept("}"):
            if lx.at("if") or lx.at("case"):
                if arm.child is not None:
                    lx.err("an arm may hold at most one nested branch")
                arm.child = self._if() if lx.at("if") else self._case()
            elif lx.accept("bug"):
                bug_id = lx.ident()
                self.bugs_seen.add(bug_id)
                take = bug_id in self.enabled
                self._arm_bug_region(arm, take)
                if lx.at("else"):
                    lx.next()
                    self._arm_bug_region(arm, not take)
            else:
                name = lx.ident()
                lx.expect("<=")
                e = self.ep.parse()
                lx.expect(";")
                arm.assigns.append((self._qual(name), e))
        return arm

    def _arm_bug_region(self, arm: Arm, take: bool):
        lx = self.lx
        lx.expect("{")
        if take:
            while not lx.accept("}"):
                if lx.at("if") or lx.at("case"):
                    if arm.child is not None:
                        lx.err("an arm may hold at most one nested branch")
                    arm.child = self._if() if lx.at("if") else self._case()
                else:
                    name = lx.ident()
                    lx.expect("<=")
                    e = self.ep.parse()
                    lx.expect(";")
                    arm.assigns.append((self._qual(name), e))
        else:
            depth = 1
            while depth:
                _, v, line, col = lx.next()
                if v == "{":
                    depth += 1
                elif v == "}":
                    depth -= 1
                elif v == "":
                    raise ParseError("unterminated bug region", line, col)


def load_design(source: str, enabled_bugs: Optional[Set[str]] = None) -> Design:
    """Parse, resolve and validate a design description."""
    enabled = set(enabled_bugs or ())
    lx = _Lexer(source)
    lx.expect("design")
    name = lx.ident()
    lx.expect("{")

    inputs: List[Signal] = []
    modules: List[HwModule] = []
    signals = {}
    meta = {}
    bugs_seen: Set[str] = set()
    node_counter = [0]
    mod_sigs: List[List[Signal]] = []

    while not lx.accept("}"):
        if lx.accept("input"):
            iname = lx.ident()
            lx.expect(":")
            width, _ = _parse_int(lx.next()[1])
            lx.expect(";")
            inputs.append(Signal(iname, width, "input"))
        elif lx.accept("meta"):
            key = lx.ident()
            lx.expect("=")
            meta[key] = lx.ident()
            lx.expect(";")
        elif lx.accept("module"):
            mname = lx.ident()
            mp = _ModuleParser(lx, name, enabled, bugs_seen, node_counter)
            mod, sigs = mp.parse(mname)
            modules.append(mod)
            mod_sigs.append(sigs)
        else:
            lx.err("unknown construct at design level")
    if lx.peek()[0] != "eof":
        lx.err("trailing content after design")

    for s in inputs:
        if s.id in signals:
            raise ValidationError(f"duplicate signal id '{s.id}'")
        signals[s.id] = s
    for sigs in mod_sigs:
        for s in sigs:
            if s.id in signals:
                raise ValidationError(f"duplicate signal id '{s.id}'")
            signals[s.id] = s

    design = Design(name=name, inputs=inputs, modules=modules, signals=signals,
                    meta=meta, bugs_available=sorted(bugs_seen),
                    bugs_enabled=frozenset(enabled))
    _resolve_exprs(design)
    return validate(design)


def _resolve_exprs(design: Design):
    """Qualify local references and size every expression in the design."""
    for m in design.modules:
        local = {}
        for sid, _ in m.ports:
            local[sid.split(".", 1)[1]] = sid
        for sid in m.outputs + m.wires + m.registers:
            local[sid.split(".", 1)[1]] = sid
        widths = {}
        for short, sid in local.items():
            widths[short] = design.signals[sid].width

        def fix(e: E.Expr) -> E.Expr:
            sized = E.size_expr(e, widths)
            return _qualify(sized, local)

        m.comb_assigns = [(t, fix(e)) for t, e in m.comb_assigns]
        m.reg_assigns = [(t, fix(e)) for t, e in m.reg_assigns]
        for tree in m.branch_trees:
            _fix_tree(tree, fix)


def _fix_tree(node: BranchNode, fix):
    node.guard = fix(node.guard)
    for arm in (node.then_arm, node.else_arm):
        arm.assigns = [(t, fix(e)) for t, e in arm.assigns]
        if arm.child is not None:
            _fix_tree(arm.child, fix)


def _qualify(e: E.Expr, local: dict) -> E.Expr:
    if isinstance(e, E.Ref):
        return E.Ref(local[e.name], e.width)
    if isinstance(e, E.Un):
        return E.Un(e.op, _qualify(e.x, local))
    if isinstance(e, E.Bin):
        return E.Bin(e.op, _qualify(e.a, local), _qualify(e.b, local))
    if isinstance(e, E.Slice):
        return E.Slice(_qualify(e.x, local), e.hi, e.lo)
    if isinstance(e, E.Concat):
        return E.Concat(_qualify(e.a, local), _qualify(e.b, local))
    if isinstance(e, E.Mux):
        return E.Mux(_qualify(e.c, local), _qualify(e.a, local),
                     _qualify(e.b, local))
    return e


def load_design_file(path, enabled_bugs: Optional[Set[str]] = None) -> Design:
    with open(path, "r", encoding="utf-8") as fh:
        return load_design(fh.read(), enabled_bugs)


def _short(sid: str) -> str:
    return sid.split(".", 1)[1] if "." in sid else sid


def design_to_text(design: Design) -> str:
    """Serialize back to the on-disk format (used by the round-trip check).

    Bug regions are already resolved, so the output reflects the loaded
    configuration."""
    out = [f"design {design.name} {{"]
    for s in design.inputs:
        out.append(f"  input {s.id} : {s.width};")
    for k, v in design.meta.items():
        out.append(f"  meta {k} = {v};")
    for m in design.modules:
        out.append(f"  module {m.name} {{")
        for sid, driver in m.ports:
            s = design.signals[sid]
            out.append(f"    input {_short(sid)} : {s.width} <- {driver};")
        for sid in m.outputs:
            out.append(f"    output {_short(sid)} : {design.signals[sid].width};")
        for sid in m.wires:
            out.append(f"    wire {_short(sid)} : {design.signals[sid].width};")
        for sid in m.registers:
            s = design.signals[sid]
            out.append(f"    reg {_short(sid)} : {s.width} = {s.reset_value};")
        for t, e in m.comb_assigns:
            out.append(f"    assign {_short(t)} = {_render_src(e)};")
        for t, e in m.reg_assigns:
            out.append(f"    {_short(t)} <= {_render_src(e)};")
        for tree in m.branch_trees:
            out.extend(_render_tree(tree, "    "))
        for reg, states in m.fsm.items():
            body = ", ".join(f"{n} = {v}" for n, v in states)
            out.append(f"    fsm {_short(reg)} states {{ {body} }}")
        out.append("  }")
    out.append("}")
    return "\n".join(out) + "\n"


def _render_src(e: E.Expr) -> str:
    """Source-syntax rendering (short names, parser-compatible)."""
    if isinstance(e, E.Const):
        if e.width is not None:
            return f"{e.width}'d{e.value}"
        return str(e.value)
    if isinstance(e, E.PoisonExpr):
        return "poison"
    if isinstance(e, E.Ref):
        return _short(e.name)
    if isinstance(e, E.Un):
        if e.op == "orr":
            return f"orr({_render_src(e.x)})"
        return f"~({_render_src(e.x)})"
    if isinstance(e, E.Bin):
        sym = {"and": "&", "or": "|", "xor": "^", "add": "+", "sub": "-",
               "mul": "*", "eq": "==", "lt": "<", "shl": "<<", "shr": ">>"}[e.op]
        return f"({_render_src(e.a)} {sym} {_render_src(e.b)})"
    if isinstance(e, E.Slice):
        return f"({_render_src(e.x)})[{e.hi}:{e.lo}]"
    if isinstance(e, E.Concat):
        return f"{{{_render_src(e.a)}, {_render_src(e.b)}}}"
    if isinstance(e, E.Mux):
        return f"({_render_src(e.c)} ? {_render_src(e.a)} : {_render_src(e.b)})"
    raise ValueError(f"cannot render {e!r}")


def _render_tree(node: BranchNode, indent: str) -> List[str]:
    if not node.observe:
        # unobserved nodes come from case dispatch; render one label plus
        # a default block so the text re-parses to the same tree
        subject, label = node.guard.a, node.guard.b
        out = [f"{indent}case ({_render_src(subject)}) {{",
               f"{indent}  {_render_src(label)}: {{"]
        out.extend(_render_arm(node.then_arm, indent + "    "))
        out.append(f"{indent}  }}")
        out.append(f"{indent}  default: {{")
        out.extend(_render_arm(node.else_arm, indent + "    "))
        out.append(f"{indent}  }}")
        out.append(f"{indent}}}")
        return out
    out = [f"{indent}if ({_render_src(node.guard)}) {{"]
    out.extend(_render_arm(node.then_arm, indent + "  "))
    out.append(f"{indent}}} else {{")
    out.extend(_render_arm(node.else_arm, indent + "  "))
    out.append(f"{indent}}}")
    return out


def _render_arm(arm: Arm, indent: str) -> List[str]:
    out = []
    for t, e in arm.assigns:
        out.append(f"{indent}{_short(t)} <= {_render_src(e)};")
    if arm.child is not None:
        out.extend(_render_tree(arm.child, indent))
    return out
