"""Expression tree: sizing, evaluation, compilation and rendering."""

import random

import pytest

import hyfuzz.expr as E


def _env(**kw):
    return dict(kw)


def test_eval_basic_arithmetic():
    a = E.Ref("a", 8)
    b = E.Ref("b", 8)
    env = _env(a=200, b=100)
    assert E.eval_expr(E.Bin("add", a, b), env) == (300 & 0xFF)
    assert E.eval_expr(E.Bin("sub", a, b), env) == 100
    assert E.eval_expr(E.Bin("sub", b, a), env) == (-100) & 0xFF
    assert E.eval_expr(E.Bin("mul", a, b), env) == (200 * 100) & 0xFFFF
    assert E.eval_expr(E.Bin("eq", a, b), env) == 0
    assert E.eval_expr(E.Bin("lt", b, a), env) == 1


def test_eval_bitwise_and_reduction():
    x = E.Ref("x", 4)
    env = _env(x=0b1010)
    assert E.eval_expr(E.Un("not", x), env) == 0b0101
    assert E.eval_expr(E.Un("orr", x), env) == 1
    assert E.eval_expr(E.Un("orr", E.Const(0, 4)), env) == 0
    assert E.eval_expr(E.Slice(x, 3, 1), env) == 0b101
    assert E.eval_expr(E.Concat(x, x), env) == 0b10101010


def test_mux_is_lazy_over_poison():
    sel = E.Ref("s", 1)
    m = E.Mux(sel, E.PoisonExpr(), E.Const(3, 4))
    assert E.eval_expr(m, _env(s=0)) == 3
    with pytest.raises(E.Poisoned):
        E.eval_expr(m, _env(s=1))


def test_poisoned_signal_propagates():
    e = E.Bin("add", E.Ref("a", 4), E.Const(1, 4))
    with pytest.raises(E.Poisoned):
        E.eval_expr(e, _env(a=0), poison=frozenset({"a"}))


def test_size_expr_rejects_oversized_constant():
    widths = {"a": 2}
    with pytest.raises(E.ExprError):
        E.size_expr(E.Bin("eq", E.Ref("a"), E.Const(9)), widths)


def test_size_expr_resolves_ref_widths():
    widths = {"a": 5}
    sized = E.size_expr(E.Bin("add", E.Ref("a"), E.Const(1)), widths)
    assert sized.width == 5


def test_negate_and_conj():
    one = E.Ref("a", 1)
    wide = E.Ref("w", 4)
    assert E.eval_expr(E.negate(one), _env(a=0)) == 1
    assert E.eval_expr(E.negate(wide), _env(w=0)) == 1
    assert E.eval_expr(E.negate(wide), _env(w=6)) == 0
    assert E.eval_expr(E.conj([]), {}) == 1
    assert E.eval_expr(E.conj([one, E.negate(wide)]), _env(a=1, w=0)) == 1


def _random_expr(rng, vars_, depth):
    if depth == 0 or rng.random() < 0.3:
        if rng.random() < 0.5:
            name, w = rng.choice(vars_)
            return E.Ref(name, w)
        w = rng.choice((1, 4, 8))
        return E.Const(rng.randrange(1 << w), w)
    kind = rng.randrange(6)
    if kind == 0:
        return E.Un(rng.choice(("not", "orr")),
                    _random_expr(rng, vars_, depth - 1))
    if kind == 1:
        x = _random_expr(rng, vars_, depth - 1)
        w = x.width
        hi = rng.randrange(w)
        lo = rng.randrange(hi + 1)
        return E.Slice(x, hi, lo)
    if kind == 2:
        return E.Concat(_random_expr(rng, vars_, depth - 1),
                        _random_expr(rng, vars_, depth - 1))
    if kind == 3:
        c = _random_expr(rng, vars_, depth - 1)
        return E.Mux(E.Un("orr", c) if c.width != 1 else c,
                     _random_expr(rng, vars_, depth - 1),
                     _random_expr(rng, vars_, depth - 1))
    op = rng.choice(("and", "or", "xor", "add", "sub", "mul", "eq", "lt"))
    return E.Bin(op, _random_expr(rng, vars_, depth - 1),
                 _random_expr(rng, vars_, depth - 1))


def test_compile_matches_eval_on_random_trees():
    """The compiled python form and the interpretive evaluator agree."""
    rng = random.Random(11)
    vars_ = [("a", 1), ("b", 4), ("c", 8), ("d", 16)]
    var_map = {n: n for n, _ in vars_}
    for _ in range(300):
        e = _random_expr(rng, vars_, 3)
        if e.width is None:
            continue
        env = {n: rng.randrange(1 << w) for n, w in vars_}
        src = E.compile_expr(e, var_map)
        got = eval(src, {}, dict(env))
        assert got == E.eval_expr(e, env), src


def test_render_expr_precedence():
    a, b, c = (E.Ref(n, 1) for n in "abc")
    e = E.Bin("or", a, E.Bin("and", b, c))
    assert E.render_expr(e) == "a || b && c"
    m = E.Mux(a, b, c)
    assert E.render_expr(m) == "a ? b : c"
    assert E.render_expr(E.Un("not", E.Bin("or", a, b))) == "!(a || b)"
