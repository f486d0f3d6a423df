import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nnobserver.expr import (
    BinOp, Call, Expression, ExpressionError, Neg, Num, Pow, Sym, evaluate, parse_expression, symbols_of, to_text,
)


def test_spec_examples():
    assert evaluate("10*sin(5*t)", {"t": 0.0}) == 0.0
    assert evaluate("-0.0001*(y1+y3)^2", {"y1": 10.0, "y3": 2.0}) == pytest.approx(-0.0144, abs=1e-15)
    with pytest.raises(ExpressionError) as info:
        parse_expression("x1+*2")
    assert info.value.position == 3


def test_precedence_and_associativity():
    assert evaluate("2+3*4", {}) == 14
    assert evaluate("2-3-4", {}) == -5
    assert evaluate("2/4/2", {}) == 0.25
    assert evaluate("-2^2", {}) == -4
    assert evaluate("(-2)^2", {}) == 4
    assert evaluate("2*3^2", {}) == 18
    assert evaluate("2^-1", {}) == 0.5
    assert evaluate("--3", {}) == 3
    assert evaluate("cos(0)+1e-3", {}) == pytest.approx(1.001)


def test_tree_shape():
    assert parse_expression("a-b-c") == BinOp("-", BinOp("-", Sym("a"), Sym("b")), Sym("c"))
    assert parse_expression("-x^2") == Neg(Pow(Sym("x"), 2))
    assert parse_expression("sin(x)") == Call("sin", Sym("x"))


def test_unknown_symbol_lists_valid_ones():
    with pytest.raises(ExpressionError, match="valid symbols: x1, x2") as info:
        parse_expression("x1 + z", ["x1", "x2"])
    assert info.value.position == 5


@pytest.mark.parametrize("bad", ["", "(", "1+", "sin 2", "x^y", "x^1.5", "3 4", "tan(1)", "1 $ 2", "()", "sin(1"])
def test_syntax_errors(bad):
    with pytest.raises(ExpressionError):
        parse_expression(bad, ["x", "y"])


def test_division_by_zero():
    with pytest.raises(ExpressionError, match="division by zero"):
        evaluate("1/(x-1)", {"x": 1.0})
    with pytest.raises(ExpressionError, match="division by zero"):
        evaluate("x^-2", {"x": 0.0})


def test_unbound_symbol():
    with pytest.raises(ExpressionError, match="not bound"):
        evaluate("x+1", {})


def test_vectorised_evaluation():
    t = np.linspace(0, 1, 5)
    np.testing.assert_allclose(evaluate("10*sin(5*t)", {"t": t}), 10 * np.sin(5 * t))


def test_expression_object():
    e = Expression("x1*y2 - 3", ["x1", "y2"])
    assert e.symbols == {"x1", "y2"}
    assert e({"x1": 2.0, "y2": 4.0}) == 5.0
    assert Expression("0").is_zero and not Expression("0*x").is_zero


_leaf = st.one_of(
    st.sampled_from(["x", "y", "t"]).map(Sym),
    st.floats(0, 1e3, allow_nan=False, allow_infinity=False).map(Num),
)
_tree = st.recursive(
    _leaf,
    lambda sub: st.one_of(
        st.builds(Neg, sub),
        st.builds(BinOp, st.sampled_from("+-*/"), sub, sub),
        st.builds(Pow, sub, st.integers(-3, 4)),
        st.builds(Call, st.sampled_from(["sin", "cos"]), sub),
    ),
    max_leaves=12,
)


@settings(max_examples=100, deadline=None)
@given(_tree)
def test_round_trip_100(tree):
    text = to_text(tree)
    assert parse_expression(text) == tree
    assert symbols_of(parse_expression(text)) == symbols_of(tree)


def test_round_trip_fixed_corpus():
    corpus = ["10*sin(5*t)", "-0.0001*(y1+y3)^2", "a-b-c", "-x^2", "2^-3*x", "cos(sin(x))/3",
              "x*(y+t)-1e-4", "((x))", "1.5e3*x^4", "-(-x)"]
    for s in corpus:
        tree = parse_expression(s)
        assert parse_expression(to_text(tree)) == tree
