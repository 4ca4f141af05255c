"""Bit-vector expression trees shared by the IR, simulator and property engine.

Values are plain non-negative ints masked to the node width.  A single
poison sentinel stands in for 4-state X: any expression with a poisoned
operand evaluates to poison.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional

MAX_WIDTH = 64

# Unary / binary operator tags.
UN_OPS = ("not", "orr")
BIN_OPS = ("and", "or", "xor", "add", "sub", "mul", "eq", "lt", "shl", "shr")


class ExprError(ValueError):
    pass


class Poisoned(Exception):
    """Raised by eval_expr when the result is the poison sentinel."""


def mask(width: int) -> int:
    return (1 << width) - 1


@dataclass(frozen=True)
class Expr:
    def refs(self) -> Iterator[str]:
        return iter(())

    @property
    def width(self) -> Optional[int]:
        raise NotImplementedError


@dataclass(frozen=True)
class Const(Expr):
    value: int
    _width: Optional[int] = None  # None until sized by context

    @property
    def width(self) -> Optional[int]:
        return self._width

    def sized(self, width: int) -> "Const":
        if self.value > mask(width):
            raise ExprError(f"constant {self.value} does not fit in {width} bits")
        return Const(self.value, width)


@dataclass(frozen=True)
class PoisonExpr(Expr):
    _width: int = 1

    @property
    def width(self) -> int:
        return self._width


@dataclass(frozen=True)
class Ref(Expr):
    name: str
    _width: Optional[int] = None

    def refs(self):
        yield self.name

    @property
    def width(self) -> Optional[int]:
        return self._width


@dataclass(frozen=True)
class Un(Expr):
    op: str
    x: Expr

    def refs(self):
        yield from self.x.refs()

    @property
    def width(self) -> Optional[int]:
        if self.op == "orr":
            return 1
        return self.x.width


@dataclass(frozen=True)
class Bin(Expr):
    op: str
    a: Expr
    b: Expr

    def refs(self):
        yield from self.a.refs()
        yield from self.b.refs()

    @property
    def width(self) -> Optional[int]:
        wa, wb = self.a.width, self.b.width
        if self.op in ("eq", "lt"):
            return 1
        if self.op == "mul":
            if wa is None or wb is None:
                return None
            return min(wa + wb, MAX_WIDTH)
        if self.op in ("shl", "shr"):
            return wa
        if wa is None:
            return wb
        if wb is None:
            return wa
        return max(wa, wb)


@dataclass(frozen=True)
class Slice(Expr):
    x: Expr
    hi: int
    lo: int

    def refs(self):
        yield from self.x.refs()

    @property
    def width(self) -> int:
        return self.hi - self.lo + 1


@dataclass(frozen=True)
class Concat(Expr):
    a: Expr  # high bits
    b: Expr

    def refs(self):
        yield from self.a.refs()
        yield from self.b.refs()

    @property
    def width(self) -> Optional[int]:
        wa, wb = self.a.width, self.b.width
        if wa is None or wb is None:
            return None
        return wa + wb


@dataclass(frozen=True)
class Mux(Expr):
    """Conditional select; compiled to a lazy python conditional so only
    the chosen branch is evaluated."""

    c: Expr
    a: Expr
    b: Expr

    def refs(self):
        yield from self.c.refs()
        yield from self.a.refs()
        yield from self.b.refs()

    @property
    def width(self) -> Optional[int]:
        wa, wb = self.a.width, self.b.width
        if wa is None:
            return wb
        if wb is None:
            return wa
        return max(wa, wb)


def size_expr(e: Expr, widths: dict) -> Expr:
    """Resolve Ref widths from the signal table and size bare constants
    from context.  Returns a new tree; raises ExprError on mismatch."""
    e = _resolve(e, widths)
    e = _size_consts(e, None)
    if e.width is None:
        raise ExprError("cannot infer expression width")
    return e


def _resolve(e: Expr, widths: dict) -> Expr:
    if isinstance(e, Ref):
        if e.name not in widths:
            raise ExprError(f"unknown signal '{e.name}'")
        return Ref(e.name, widths[e.name])
    if isinstance(e, Un):
        return Un(e.op, _resolve(e.x, widths))
    if isinstance(e, Bin):
        return Bin(e.op, _resolve(e.a, widths), _resolve(e.b, widths))
    if isinstance(e, Slice):
        x = _resolve(e.x, widths)
        if x.width is not None and e.hi >= x.width:
            raise ExprError(f"slice [{e.hi}:{e.lo}] out of range for width {x.width}")
        return Slice(x, e.hi, e.lo)
    if isinstance(e, Concat):
        return Concat(_resolve(e.a, widths), _resolve(e.b, widths))
    if isinstance(e, Mux):
        return Mux(_resolve(e.c, widths), _resolve(e.a, widths), _resolve(e.b, widths))
    return e


def _size_consts(e: Expr, ctx: Optional[int]) -> Expr:
    if isinstance(e, Const):
        if e.width is not None:
            return e
        if ctx is not None:
            return e.sized(ctx)
        return e.sized(max(1, e.value.bit_length()))
    if isinstance(e, Un):
        return Un(e.op, _size_consts(e.x, ctx if e.op == "not" else None))
    if isinstance(e, Bin):
        a, b = e.a, e.b
        if e.op in ("shl", "shr"):
            return Bin(e.op, _size_consts(a, ctx), _size_consts(b, None))
        # size an unsized const from the opposite operand
        aw = a.width if not (isinstance(a, Const) and a.width is None) else None
        bw = b.width if not (isinstance(b, Const) and b.width is None) else None
        a2 = _size_consts(a, bw if aw is None else aw)
        b2 = _size_consts(b, a2.width)
        a2 = _size_consts(a2, b2.width)
        return Bin(e.op, a2, b2)
    if isinstance(e, Slice):
        return Slice(_size_consts(e.x, None), e.hi, e.lo)
    if isinstance(e, Concat):
        return Concat(_size_consts(e.a, None), _size_consts(e.b, None))
    if isinstance(e, Mux):
        a = _size_consts(e.a, e.b.width if not isinstance(e.b, Const) or e.b.width else ctx)
        b = _size_consts(e.b, a.width if a.width else ctx)
        a = _size_consts(a, b.width)
        return Mux(_size_consts(e.c, None), a, b)
    return e


def eval_expr(e: Expr, env: dict, poison: frozenset = frozenset()) -> int:
    """Interpretive evaluator; env maps signal name -> int value.

    Raises Poisoned when any operand carries the poison sentinel."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, PoisonExpr):
        raise Poisoned()
    if isinstance(e, Ref):
        if e.name in poison:
            raise Poisoned()
        return env[e.name]
    if isinstance(e, Un):
        v = eval_expr(e.x, env, poison)
        if e.op == "not":
            return mask(e.x.width) ^ v
        return 1 if v else 0
    if isinstance(e, Bin):
        a = eval_expr(e.a, env, poison)
        b = eval_expr(e.b, env, poison)
        w = e.width
        op = e.op
        if op == "and":
            return a & b
        if op == "or":
            return a | b
        if op == "xor":
            return a ^ b
        if op == "add":
            return (a + b) & mask(w)
        if op == "sub":
            return (a - b) & mask(w)
        if op == "mul":
            return (a * b) & mask(w)
        if op == "eq":
            return 1 if a == b else 0
        if op == "lt":
            return 1 if a < b else 0
        if op == "shl":
            return (a << min(b, MAX_WIDTH)) & mask(w)
        if op == "shr":
            return a >> min(b, MAX_WIDTH)
    if isinstance(e, Slice):
        return (eval_expr(e.x, env, poison) >> e.lo) & mask(e.width)
    if isinstance(e, Concat):
        return (eval_expr(e.a, env, poison) << e.b.width) | eval_expr(e.b, env, poison)
    if isinstance(e, Mux):
        # only the selected branch is evaluated, so an unselected poison
        # operand does not poison the result
        if eval_expr(e.c, env, poison):
            return eval_expr(e.a, env, poison)
        return eval_expr(e.b, env, poison)
    raise ExprError(f"cannot evaluate {e!r}")


_PY_TMPL = {
    "and": "({a} & {b})",
    "or": "({a} | {b})",
    "xor": "({a} ^ {b})",
    "eq": "(1 if {a} == {b} else 0)",
    "lt": "(1 if {a} < {b} else 0)",
}


def compile_expr(e: Expr, var: dict) -> str:
    """Render the expression as a python source fragment.

    var maps signal name -> local variable name in the generated code."""
    if isinstance(e, Const):
        return str(e.value)
    if isinstance(e, PoisonExpr):
        return "0"
    if isinstance(e, Ref):
        return var[e.name]
    if isinstance(e, Un):
        x = compile_expr(e.x, var)
        if e.op == "not":
            return f"({mask(e.x.width)} ^ {x})"
        return f"(1 if {x} else 0)"
    if isinstance(e, Bin):
        a = compile_expr(e.a, var)
        b = compile_expr(e.b, var)
        t = _PY_TMPL.get(e.op)
        if t is not None:
            return t.format(a=a, b=b)
        m = mask(e.width)
        if e.op == "add":
            return f"(({a} + {b}) & {m})"
        if e.op == "sub":
            return f"(({a} - {b}) & {m})"
        if e.op == "mul":
            return f"(({a} * {b}) & {m})"
        if e.op == "shl":
            return f"(({a} << min({b}, 64)) & {m})"
        if e.op == "shr":
            return f"({a} >> min({b}, 64))"
    if isinstance(e, Slice):
        x = compile_expr(e.x, var)
        return f"(({x} >> {e.lo}) & {mask(e.width)})"
    if isinstance(e, Concat):
        a = compile_expr(e.a, var)
        b = compile_expr(e.b, var)
        return f"(({a} << {e.b.width}) | {b})"
    if isinstance(e, Mux):
        c = compile_expr(e.c, var)
        a = compile_expr(e.a, var)
        b = compile_expr(e.b, var)
        return f"({a} if {c} else {b})"
    raise ExprError(f"cannot compile {e!r}")


# precedence levels for rendering, loosest first
_PREC = {
    "or": 1,
    "xor": 2,
    "and": 3,
    "eq": 4,
    "lt": 5,
    "shl": 6,
    "shr": 6,
    "add": 7,
    "sub": 7,
    "mul": 8,
}

_SYM = {
    "and": "&&",
    "or": "||",
    "xor": "^",
    "eq": "==",
    "lt": "<",
    "shl": "<<",
    "shr": ">>",
    "add": "+",
    "sub": "-",
    "mul": "*",
}


def render_expr(e: Expr, names: Optional[dict] = None, parent_prec: int = 0) -> str:
    """Render in SVA-like concrete syntax.

    names optionally maps (signal, value) -> enum name so FSM state
    comparisons print their state labels."""
    if isinstance(e, Const):
        w = e.width or max(1, e.value.bit_length())
        if w == 1:
            return f"1'b{e.value}"
        return str(e.value)
    if isinstance(e, PoisonExpr):
        return "'x"
    if isinstance(e, Ref):
        return e.name
    if isinstance(e, Un):
        if e.op == "orr":
            return f"|{render_expr(e.x, names, 9)}"
        return f"!{render_expr(e.x, names, 9)}"
    if isinstance(e, Bin):
        sym = _SYM[e.op]
        if e.op in ("and", "or") and (e.width or 1) > 1:
            sym = "&" if e.op == "and" else "|"
        if e.op == "eq" and names is not None and isinstance(e.a, Ref) and isinstance(e.b, Const):
            label = names.get((e.a.name, e.b.value))
            if label is not None:
                s = f"{e.a.name} == {label}"
                return f"({s})" if parent_prec > 0 else s
        prec = _PREC[e.op]
        a = render_expr(e.a, names, prec)
        b = render_expr(e.b, names, prec + 1)
        s = f"{a} {sym} {b}"
        return f"({s})" if parent_prec > prec else s
    if isinstance(e, Slice):
        x = render_expr(e.x, names, 10)
        if e.hi == e.lo:
            return f"{x}[{e.lo}]"
        return f"{x}[{e.hi}:{e.lo}]"
    if isinstance(e, Concat):
        return f"{{{render_expr(e.a, names)}, {render_expr(e.b, names)}}}"
    if isinstance(e, Mux):
        s = f"{render_expr(e.c, names, 1)} ? {render_expr(e.a, names, 1)} : " \
            f"{render_expr(e.b, names, 1)}"
        return f"({s})" if parent_prec > 0 else s
    raise ExprError(f"cannot render {e!r}")


def negate(e: Expr) -> Expr:
    """Logical negation of a 1-bit expression."""
    if e.width == 1:
        return Un("not", e)
    return Un("not", Un("orr", e))


def conj(terms: list) -> Expr:
    """Conjunction of 1-bit terms; empty conjunction is constant true."""
    if not terms:
        return Const(1, 1)
    out = terms[0]
    for t in terms[1:]:
        out = Bin("and", out, t)
    return out
