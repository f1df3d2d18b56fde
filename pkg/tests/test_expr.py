import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poissonint.expr import (
    BinOp,
    Call,
    Const,
    EvalDomainError,
    ExpressionSyntaxError,
    Neg,
    Num,
    UnknownIdentifierError,
    Var,
    evaluate,
    format_expression,
    parse,
    substitute,
)


def test_precedence_and_associativity():
    assert evaluate("2+3*4", 0.0) == 14.0
    assert evaluate("(2+3)*4", 0.0) == 20.0
    assert evaluate("2^3^2", 0.0) == 512.0  # right-associative
    assert evaluate("6/3/2", 0.0) == 1.0  # left-associative
    assert evaluate("2-3-4", 0.0) == -5.0
    assert evaluate("-2^2", 0.0) == -4.0  # unary minus binds looser than ^
    assert evaluate("2*3^2", 0.0) == 18.0


def test_variable_constants_functions():
    assert evaluate("s", 2.5) == 2.5
    assert evaluate("pi", 0.0) == pytest.approx(math.pi)
    assert evaluate("e", 0.0) == pytest.approx(math.e)
    assert evaluate("sin(pi/2)", 0.0) == pytest.approx(1.0)
    assert evaluate("min(3, s, 7)", 5.0) == 3.0
    assert evaluate("max(s, 0)", -2.0) == 0.0
    assert evaluate("abs(0-s)", 3.0) == 3.0


def test_scientific_notation():
    assert evaluate("5e-4", 0.0) == 5e-4
    assert evaluate("1.5E+2", 0.0) == 150.0


def test_array_evaluation_matches_scalar():
    s = np.linspace(0.0, 2.0, 17)
    out = evaluate("sin(2*pi*s) + s^2", s)
    expected = np.array([evaluate("sin(2*pi*s) + s^2", float(v)) for v in s])
    assert np.allclose(out, expected, rtol=0, atol=1e-15)


def test_syntax_error_offsets():
    with pytest.raises(ExpressionSyntaxError) as exc:
        parse("s^")
    assert exc.value.offset == 2
    with pytest.raises(ExpressionSyntaxError) as exc:
        parse("3 + * 4")
    assert exc.value.offset == 4
    with pytest.raises(ExpressionSyntaxError) as exc:
        parse("sin(s")
    assert exc.value.offset == 5
    with pytest.raises(ExpressionSyntaxError):
        parse("")


def test_trailing_input_rejected():
    with pytest.raises(ExpressionSyntaxError) as exc:
        parse("s s")
    assert exc.value.offset == 2


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifierError):
        parse("foo(s)")
    with pytest.raises(UnknownIdentifierError):
        parse("q + 1")


def test_arity_checked():
    with pytest.raises(ExpressionSyntaxError):
        parse("sin(s, 2)")
    with pytest.raises(ExpressionSyntaxError):
        parse("min(s)")


def test_domain_errors_name_the_subexpression():
    with pytest.raises(EvalDomainError, match="division"):
        evaluate("1/s", 0.0)
    with pytest.raises(EvalDomainError):
        evaluate("log(s)", 0.0)
    with pytest.raises(EvalDomainError):
        evaluate("sqrt(0-s)", 4.0)
    with pytest.raises(EvalDomainError):
        evaluate("(0-2)^0.5", 0.0)
    with pytest.raises(EvalDomainError):
        evaluate("s^(0-1)", 0.0)


def test_substitute_replaces_the_variable():
    mirror = BinOp("-", Num(1.0), Var())
    reversed_g = substitute(parse("s^2"), mirror)
    assert evaluate(reversed_g, 0.25) == pytest.approx(0.75**2)
    # plain constants are untouched
    assert evaluate(substitute(parse("pi"), mirror), 0.3) == pytest.approx(math.pi)


def test_format_round_trip_examples():
    for text in ("s", "1-(1-s)^2", "sin(2*pi*s)", "2+s*3", "-(s+1)", "min(s,1,2)"):
        tree = parse(text)
        assert parse(format_expression(tree)) == tree


def test_format_parenthesizes_only_when_needed():
    assert format_expression(parse("(s+1)*2")) == "(s+1.0)*2.0"
    assert format_expression(parse("s+1*2")) == "s+1.0*2.0"
    assert format_expression(parse("(s^2)^3")) == "(s^2.0)^3.0"
    assert format_expression(parse("s^2^3")) == "s^2.0^3.0"


_leaf = st.one_of(
    st.builds(Num, st.floats(min_value=0.0, max_value=1e6, allow_nan=False)),
    st.just(Var()),
    st.sampled_from([Const("pi"), Const("e")]),
)


def _node(children):
    unary_fn = st.sampled_from(["sin", "cos", "exp", "sqrt", "abs"])
    return st.one_of(
        st.builds(Neg, children),
        st.builds(BinOp, st.sampled_from(["+", "-", "*", "/", "^"]), children, children),
        st.builds(lambda f, a: Call(f, (a,)), unary_fn, children),
        st.builds(lambda a, b: Call("min", (a, b)), children, children),
        st.builds(lambda a, b: Call("max", (a, b)), children, children),
    )


expressions = st.recursive(_leaf, _node, max_leaves=25)


@settings(max_examples=150, deadline=None)
@given(expressions)
def test_print_parse_round_trip(tree):
    # formatting then parsing must reproduce the tree exactly
    assert parse(format_expression(tree)) == tree
