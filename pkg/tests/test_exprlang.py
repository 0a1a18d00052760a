import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helixforms import exprlang as el
from helixforms.exprlang import ExprDomainError, ExprSyntaxError


def test_parse_power_sum():
    e = el.parse("x^2+y^2")
    assert isinstance(e, el.Binary) and e.op == "add"
    assert isinstance(e.left, el.Pow) and e.left.exponent == 2
    assert el.evaluate(e, (1, 2, 0)) == 5.0


def test_parse_pi_constant():
    e = el.parse("sin(2*pi*t)")
    assert el.evaluate(e, (0, 0, 0.25)) == pytest.approx(1.0, abs=1e-15)


def test_syntax_error_offset():
    with pytest.raises(ExprSyntaxError) as err:
        el.parse("x +* y")
    assert err.value.offset == 3


@pytest.mark.parametrize("text", ["foo(x)", "z + 1", "sin(x, y)", "atan2(x)", "(x", "x)", ""])
def test_rejects_bad_input(text):
    with pytest.raises(ExprSyntaxError):
        el.parse(text)


def test_whitespace_insensitive():
    assert el.to_text(el.parse(" x*  y ^2 ")) == el.to_text(el.parse("x*y^2"))


def test_precedence():
    assert el.evaluate(el.parse("2+3*4^2"), (0, 0, 0)) == 50.0
    assert el.evaluate(el.parse("-2^2"), (0, 0, 0)) == -4.0
    assert el.evaluate(el.parse("8/2/2"), (0, 0, 0)) == 2.0


def test_derivative_examples():
    assert el.to_text(el.differentiate(el.parse("x^2+y^2"), "x")) == "2 * x"
    d = el.differentiate(el.parse("sin(2*pi*t)"), "t")
    for t in (0.0, 0.1, 0.3):
        assert el.evaluate(d, (0, 0, t)) == pytest.approx(2 * math.pi * math.cos(2 * math.pi * t))
    assert el.differentiate(el.parse("5"), "y") == el.ZERO


def test_division_by_zero_names_node():
    with pytest.raises(ExprDomainError) as err:
        el.evaluate(el.parse("1/x"), (0, 0, 0))
    assert "1 / x" in str(err.value)


def test_log_domain():
    with pytest.raises(ExprDomainError):
        el.evaluate(el.parse("log(x)"), (-1, 0, 0))


def test_ramp_and_step():
    e = el.parse("ramp(x) + step(y)")
    assert el.evaluate(e, (-1, -1, 0)) == 0.0
    assert el.evaluate(e, (2, 0, 0)) == 2.5
    assert el.evaluate(el.differentiate(el.parse("ramp(x)^3"), "x"), (2, 0, 0)) == 12.0


def test_aliases():
    r = el.sqrt(el.X ** 2 + el.Y ** 2)
    e = el.parse("r^2 + t", {"r": r})
    assert el.evaluate(e, (3, 4, 1)) == pytest.approx(26.0)


def test_evaluate_deterministic():
    e = el.parse("sin(x)*exp(y) + atan2(y, x)/(1 + t^2)")
    rng = np.random.default_rng(0)
    p = rng.uniform(-1, 1, (100, 3))
    a = el.evaluate_array(e, p[:, 0], p[:, 1], p[:, 2])
    b = el.evaluate_array(e, p[:, 0], p[:, 1], p[:, 2])
    assert np.array_equal(a, b)


# random trees --------------------------------------------------------------

def _leaf():
    return st.one_of(st.sampled_from([el.X, el.Y, el.T]),
                     st.floats(-2, 2, allow_nan=False).map(lambda v: el.Const(round(v, 3))))


def _extend(children):
    unary = st.tuples(st.sampled_from(["sin", "cos", "neg", "exp_small", "sqrt_pos", "log_pos"]),
                      children).map(_make_unary)
    binary = st.tuples(st.sampled_from(["add", "sub", "mul", "div_safe", "atan2", "pow"]),
                       children, children).map(_make_binary)
    return st.one_of(unary, binary)


def _make_unary(args):
    op, a = args
    if op == "exp_small":
        return el.exp(0.3 * el.sin(a))
    if op == "sqrt_pos":
        return el.sqrt(1.5 + el.sin(a))
    if op == "log_pos":
        return el.log(2.0 + el.cos(a))
    return el.func(op, a) if op != "neg" else el.neg(a)


def _make_binary(args):
    op, a, b = args
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div_safe":
        return a / (2.0 + el.sin(b))
    if op == "atan2":
        return el.atan2(a, 1.5 + el.cos(b))
    return (1.2 + el.sin(a)) ** 2


trees = st.recursive(_leaf(), _extend, max_leaves=8)
points = st.tuples(*[st.floats(-1, 1, allow_nan=False)] * 3)


@settings(max_examples=100, deadline=None)
@given(trees, points, st.sampled_from(["x", "y", "t"]))
def test_derivative_matches_central_difference(e, p, v):
    exact = el.evaluate(el.differentiate(e, v), p)
    approx = el.central_difference(e, v, p, h=1e-5)
    assert abs(exact - approx) <= 1e-6 * (1 + abs(exact))


@settings(max_examples=100, deadline=None)
@given(trees, points)
def test_print_parse_round_trip(e, p):
    text = el.to_text(e)
    again = el.parse(text)
    assert el.to_text(again) == text
    a = el.evaluate(e, p)
    b = el.evaluate(again, p)
    assert a == b or abs(a - b) <= 1e-14 * (1 + abs(a))
