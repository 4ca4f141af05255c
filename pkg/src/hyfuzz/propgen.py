"""Cover-property generation from coverage points.

Each uncovered point maps to a one- or two-cycle cover property over the
design's signals; the reachability engine proves these, and reports
render them in SVA-like concrete syntax.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from . import expr as E
from .coverage import CoveragePoint, PointRegistry
from .ir import Design

H1 = "1-cycle"
H2 = "2-cycle"


class PropertyError(ValueError):
    pass


@dataclass(frozen=True)
class CoverProperty:
    point_id: int
    horizon: str  # H1 or H2
    expr_now: E.Expr
    expr_next: Optional[E.Expr] = None

    def __post_init__(self):
        if (self.horizon == H2) != (self.expr_next is not None):
            raise PropertyError("2-cycle properties need exactly one next expression")


def _eq(sig: str, width: int, value: int) -> E.Expr:
    return E.Bin("eq", E.Ref(sig, width), E.Const(value, width))


def _bit(sig: str, width: int, bit: int, value: int) -> E.Expr:
    ref: E.Expr = E.Ref(sig, width)
    if width > 1:
        ref = E.Slice(ref, bit, bit)
    return E.Bin("eq", ref, E.Const(value, 1))


class PropertyGenerator:
    """Generates and caches cover properties for one instrumented design."""

    def __init__(self, design: Design, registry: PointRegistry):
        self.design = design
        self.registry = registry
        self._cache: Dict[int, CoverProperty] = {}
        self._widths = {sid: s.width for sid, s in design.signals.items()}
        # (signal, value) -> state label, for rendering
        self.state_names: Dict[Tuple[str, int], str] = {}
        self._labels: Dict[str, int] = {}
        for m in design.modules:
            for reg, states in m.fsm.items():
                for label, value in states:
                    self.state_names[(reg, value)] = label
                    self._labels[label] = value
        # display names: drop the module qualifier when unambiguous
        shorts: Dict[str, List[str]] = {}
        for sid in self._widths:
            shorts.setdefault(sid.split(".", 1)[-1], []).append(sid)
        self._display = {sid: (s if len(ids) == 1 else sid)
                         for s, ids in shorts.items() for sid in ids}
        self._resolve = {disp: sid for sid, disp in self._display.items()}
        self._resolve.update({sid: sid for sid in self._widths})
        self._display_states = {(self._display[r], v): l
                                for (r, v), l in self.state_names.items()}

    # ------------------------------------------------------------------
    def for_point(self, pid: int) -> CoverProperty:
        prop = self._cache.get(pid)
        if prop is None:
            prop = self._generate(self.registry.by_id(pid))
            self._cache[pid] = prop
        return prop

    def generate_property(self, point: CoveragePoint) -> CoverProperty:
        return self.for_point(point.id)

    def all_properties(self) -> List[CoverProperty]:
        return [self.for_point(p.id) for p in self.registry.points]

    # ------------------------------------------------------------------
    def _path_terms(self, node_id: int) -> List[E.Expr]:
        terms = []
        for guard, taken in self.registry.node_paths[node_id]:
            terms.append(guard if taken else E.negate(guard))
        return terms

    def _generate(self, p: CoveragePoint) -> CoverProperty:
        w = self._widths
        if p.kind == "branch":
            node_id, taken = p.data
            guard = self.registry.node_guards[node_id]
            terms = self._path_terms(node_id)
            terms.append(guard if taken else E.negate(guard))
            return CoverProperty(p.id, H1, E.conj(terms))
        if p.kind == "condition":
            node_id, sigs, combo = p.data
            terms = self._path_terms(node_id)
            k = len(sigs)
            for i, s in enumerate(sigs):
                terms.append(_eq(s, 1, (combo >> (k - 1 - i)) & 1))
            return CoverProperty(p.id, H1, E.conj(terms))
        if p.kind == "expression":
            _target, ops, combo = p.data
            radices = [1 << w[s] for s in ops]
            vals = []
            rem = combo
            for r in reversed(radices):
                vals.append(rem % r)
                rem //= r
            vals.reverse()
            terms = [_eq(s, w[s], v) for s, v in zip(ops, vals)]
            return CoverProperty(p.id, H1, E.conj(terms))
        if p.kind == "fsm_state":
            reg, value = p.data
            return CoverProperty(p.id, H1, _eq(reg, w[reg], value))
        if p.kind == "fsm_transition":
            reg, a, b = p.data
            return CoverProperty(p.id, H2, _eq(reg, w[reg], a), _eq(reg, w[reg], b))
        if p.kind == "toggle":
            sig, bit = p.data
            return CoverProperty(p.id, H2, _bit(sig, w[sig], bit, 0),
                                 _bit(sig, w[sig], bit, 1))
        raise PropertyError(f"point kind '{p.kind}' is not instrumented")

    # ------------------------------------------------------------------
    def _displayed(self, e: E.Expr) -> E.Expr:
        if isinstance(e, E.Ref):
            return E.Ref(self._display.get(e.name, e.name), e.width)
        if isinstance(e, E.Un):
            return E.Un(e.op, self._displayed(e.x))
        if isinstance(e, E.Bin):
            return E.Bin(e.op, self._displayed(e.a), self._displayed(e.b))
        if isinstance(e, E.Slice):
            return E.Slice(self._displayed(e.x), e.hi, e.lo)
        if isinstance(e, E.Concat):
            return E.Concat(self._displayed(e.a), self._displayed(e.b))
        if isinstance(e, E.Mux):
            return E.Mux(self._displayed(e.c), self._displayed(e.a),
                         self._displayed(e.b))
        return e

    def emit_sva_text(self, prop: CoverProperty) -> str:
        now = E.render_expr(self._displayed(prop.expr_now), self._display_states)
        if prop.horizon == H2:
            nxt = E.render_expr(self._displayed(prop.expr_next), self._display_states)
            return f"cover property ({now} ##1 {nxt})"
        return f"cover property ({now})"

    def parse_sva_text(self, text: str) -> CoverProperty:
        """Round-trip reader for emitted property text (tests only).

        Returns a property with point id -1; the expressions are resolved
        against the design, so re-emitting reproduces the input."""
        prefix, suffix = "cover property (", ")"
        if not (text.startswith(prefix) and text.endswith(suffix)):
            raise PropertyError(f"not a cover property: {text!r}")
        inner = text[len(prefix):-len(suffix)]
        parts = _split_cycles(inner)
        exprs = [self._parse_expr(p) for p in parts]
        if len(parts) == 2:
            return CoverProperty(-1, H2, exprs[0], exprs[1])
        return CoverProperty(-1, H1, exprs[0])

    def _parse_expr(self, text: str) -> E.Expr:
        from .parser import _ExprParser, _Lexer

        lx = _Lexer(text)
        e = _ExprParser(lx).parse()
        if lx.peek()[0] != "eof":
            raise PropertyError(f"trailing content in property: {text!r}")

        def fix(x: E.Expr) -> E.Expr:
            if isinstance(x, E.Ref):
                sid = self._resolve.get(x.name)
                if sid is not None:
                    return E.Ref(sid, self._widths[sid])
                if x.name in self._labels:
                    return E.Const(self._labels[x.name])
                raise PropertyError(f"unknown signal '{x.name}' in property")
            if isinstance(x, E.Un):
                return E.Un(x.op, fix(x.x))
            if isinstance(x, E.Bin):
                return E.Bin(x.op, fix(x.a), fix(x.b))
            if isinstance(x, E.Slice):
                return E.Slice(fix(x.x), x.hi, x.lo)
            if isinstance(x, E.Concat):
                return E.Concat(fix(x.a), fix(x.b))
            return x

        return E._size_consts(fix(e), None)


def _split_cycles(text: str) -> List[str]:
    depth = 0
    for i in range(len(text) - 2):
        c = text[i]
        if c == "(":
            depth += 1
        elif c == ")":
            depth -= 1
        elif depth == 0 and text[i:i + 3] == "##1":
            return [text[:i].strip(), text[i + 3:].strip()]
    return [text.strip()]
