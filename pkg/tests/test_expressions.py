"""Expression trees: parsing, evaluation, differentiation, utilities."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from torus3.errors import DomainError
from torus3.symbolic import (
    Const,
    Cos,
    Exp,
    Mul,
    Pow,
    Sin,
    Var,
    add,
    linear_constant_part,
    mul,
    parse_definitions,
    parse_expression,
    power,
    substitute,
)


def sample_env(n: int = 17, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    env = {name: rng.normal(size=n) for name in ("w0", "w1", "w2", "w3")}
    env["x"] = 2 * np.pi * np.arange(n) / n
    env["t"] = 0.37
    return env


# ------------------------------------------------------------------ parsing


def test_parse_and_evaluate_matches_numpy():
    e = parse_expression("-w3 + w2 + 2*w0*w1")
    env = sample_env()
    expected = -env["w3"] + env["w2"] + 2 * env["w0"] * env["w1"]
    assert np.allclose(e.evaluate(env), expected, atol=1e-14)


def test_precedence_and_powers():
    env = {"w0": np.array([3.0]), "w1": 0.0, "w2": 0.0, "w3": 0.0, "x": 0.0, "t": 0.0}
    assert parse_expression("2*w0^2 + 1").evaluate(env)[0] == pytest.approx(19.0)
    assert parse_expression("2^-2").evaluate(env) == pytest.approx(0.25)
    assert parse_expression("w0**3").evaluate(env)[0] == pytest.approx(27.0)
    assert parse_expression("-w0^2").evaluate(env)[0] == pytest.approx(-9.0)  # -(w0^2)
    assert parse_expression("w0^1.5").evaluate(env)[0] == pytest.approx(3.0 ** 1.5)


def test_functions_parse():
    env = sample_env()
    e = parse_expression("exp(sin(x)) + log(2 + cos(t))")
    expected = np.exp(np.sin(env["x"])) + np.log(2 + np.cos(env["t"]))
    assert np.allclose(e.evaluate(env), expected)


def test_parse_rejects_unknown_symbol():
    with pytest.raises(ValueError, match="unknown symbol"):
        parse_expression("w4 + 1")
    with pytest.raises(ValueError, match="trailing"):
        parse_expression("w0 w1")


def test_definitions_substitute_coefficients():
    expr, names = parse_definitions("a = 2 + cos(x)\nF = a*w3 + a*a*w0")
    assert "a" in names
    env = sample_env()
    a = 2 + np.cos(env["x"])
    assert np.allclose(expr.evaluate(env), a * env["w3"] + a * a * env["w0"])


def test_definitions_reject_state_in_coefficients():
    with pytest.raises(ValueError, match="may only depend on x and t"):
        parse_definitions("a = w0 + 1\nF = a*w3")


def test_definitions_need_rhs_line():
    with pytest.raises(ValueError, match="no 'F"):
        parse_definitions("a = 1")


# ------------------------------------------------------------ differentiation


def test_partials_of_catalog_shapes():
    kdv = parse_expression("-w3 - 6*w0*w1")
    assert str(kdv.diff("w3")) == "-1"
    hd = parse_expression("w0^3*w3")
    assert str(hd.diff("w3")) == "w0^3"
    k22_term = parse_expression("2*w0*w3")
    assert str(k22_term.diff("w3").diff("w0")) == "2"


def test_chain_rule_through_functions():
    e = parse_expression("exp(w0^2)")
    env = {"w0": np.array([0.7]), "w1": 0.0, "w2": 0.0, "w3": 0.0, "x": 0.0, "t": 0.0}
    d = e.diff("w0")
    assert d.evaluate(env)[0] == pytest.approx(2 * 0.7 * np.exp(0.49), rel=1e-13)


def complex_step_derivative(expr, env, var, h=1e-200):
    bumped = dict(env)
    bumped[var] = np.asarray(env[var], dtype=np.complex128) + 1j * h
    return np.imag(np.asarray(expr.evaluate(bumped))) / h


@pytest.mark.parametrize(
    "text",
    [
        "-w3 - 6*w0*w1",
        "2*w0*w1 + 6*w1*w2 + 2*w0*w3",
        "w0^3*w3",
        "sin(w1) + cos(x)*w3",
        "exp(0.3*w2) * w0",
        "(w0 + 2)^3 / (4 + w1^2)",
    ],
)
@pytest.mark.parametrize("var", ["w0", "w1", "w2", "w3", "x"])
def test_symbolic_derivative_matches_complex_step(text, var):
    expr = parse_expression(text)
    env = sample_env(seed=3)
    sym = np.broadcast_to(np.asarray(expr.diff(var).evaluate(env), dtype=float), env["w0"].shape)
    num = complex_step_derivative(expr, env, var)
    assert np.max(np.abs(sym - num)) < 1e-12 * (1 + np.max(np.abs(sym)))


# ------------------------------------------------------------- domain guards


def test_division_guard_reports_location():
    e = parse_expression("w3/w0")
    env = sample_env()
    env["w0"] = np.cos(env["x"])
    env["w0"][5] = 1e-14  # numerically vanishing denominator
    with pytest.raises(DomainError) as exc:
        e.evaluate(env)
    assert exc.value.index == 5
    assert "denominator" in str(exc.value)


def test_log_and_real_power_guards():
    env = sample_env()
    env["w0"] = np.cos(env["x"])  # changes sign on the grid
    with pytest.raises(DomainError, match="log"):
        parse_expression("log(w0)").evaluate(env)
    with pytest.raises(DomainError, match="real power"):
        parse_expression("w0^0.5").evaluate(env)
    # integer powers of sign-changing fields are fine
    parse_expression("w0^3").evaluate(env)


def test_guards_skip_complex_dtype():
    e = parse_expression("w3/w0")
    env = sample_env()
    env["w0"] = np.cos(env["x"]).astype(np.complex128) + 1e-30j
    e.evaluate(env)  # no raise: complex evaluation is an internal calibration path


# -------------------------------------------------------------- tree surgery


def test_substitute_time_flip():
    e = parse_expression("cos(t)*w3 + t*w0")
    flipped = substitute(e, "t", mul(Const(-1.0), Var("t")))
    env = sample_env()
    direct = dict(env)
    direct["t"] = -env["t"]
    assert np.allclose(flipped.evaluate(env), e.evaluate(direct))


def test_linear_constant_part_extraction():
    coeffs, rest = linear_constant_part(parse_expression("-w3 + w2 + 2*w0*w1"))
    assert coeffs == {3: -1.0, 2: 1.0}
    env = sample_env()
    assert np.allclose(rest.evaluate(env), 2 * env["w0"] * env["w1"])


def test_linear_part_keeps_variable_coefficients():
    coeffs, rest = linear_constant_part(parse_expression("cos(x)*w3 + 0.5*w1 - w2*3"))
    assert coeffs == {1: 0.5, 2: -3.0}
    env = sample_env()
    assert np.allclose(rest.evaluate(env), np.cos(env["x"]) * env["w3"])


def test_linear_part_of_pure_linear_leaves_zero_rest():
    coeffs, rest = linear_constant_part(parse_expression("-w3"))
    assert coeffs == {3: -1.0}
    assert isinstance(rest, Const) and rest.value == 0.0


# ---------------------------------------------------------------- simplifier


def test_constructors_fold_constants():
    assert str(add(Const(2.0), Const(3.0))) == "5"
    assert str(mul(Const(0.0), Var("w1"))) == "0"
    assert str(power(Var("w0"), 1)) == "w0"
    assert str(power(Var("w0"), 0)) == "1"
    assert isinstance(mul(Const(2.0), Var("w0")), Mul)


def test_str_round_trips_through_parser():
    for text in ["-w3 - 6*w0*w1", "w0^3*w3", "2*w0*w1 + 6*w1*w2 + 2*w0*w3", "cos(t)*w3"]:
        e = parse_expression(text)
        again = parse_expression(str(e))
        env = sample_env(seed=9)
        assert np.allclose(e.evaluate(env), again.evaluate(env))


# ------------------------------------------------------------ property tests


@st.composite
def small_exprs(draw, depth: int = 0):
    if depth >= 3 or draw(st.booleans()):
        leaf = draw(
            st.one_of(
                st.floats(-2, 2, allow_nan=False).map(Const),
                st.sampled_from(["w0", "w1", "w2", "w3", "x"]).map(Var),
            )
        )
        return leaf
    kind = draw(st.sampled_from(["add", "mul", "sin", "cos", "pow", "exp"]))
    a = draw(small_exprs(depth=depth + 1))
    if kind == "add":
        return add(a, draw(small_exprs(depth=depth + 1)))
    if kind == "mul":
        return mul(a, draw(small_exprs(depth=depth + 1)))
    if kind == "sin":
        return Sin(a)
    if kind == "cos":
        return Cos(a)
    if kind == "pow":
        return Pow(a, draw(st.integers(2, 3)))
    return Exp(mul(Const(0.2), a))


@settings(max_examples=80, deadline=None)
@given(expr=small_exprs(), var=st.sampled_from(["w0", "w1", "w2", "w3", "x"]))
def test_differentiation_property(expr, var):
    env = sample_env(n=11, seed=5)
    sym = np.broadcast_to(
        np.asarray(expr.diff(var).evaluate(env), dtype=float), env["w0"].shape
    )
    num = complex_step_derivative(expr, env, var)
    scale = 1.0 + np.max(np.abs(sym))
    assert np.max(np.abs(sym - num)) < 1e-10 * scale
