import numpy as np
import pytest

from tshelm.expr import (
    ArityError,
    EvaluationError,
    LexError,
    ParseError,
    UnknownIdentifierError,
    Var,
    differentiate,
    parse_expr,
    random_expression,
    variables_for,
)


def ev(src, d=1, **env):
    return parse_expr(src, d).evaluate(env)


def test_variable_node():
    e = parse_expr("p1", 1)
    assert isinstance(e, Var) and e.name == "p1"


def test_examples():
    assert abs(ev("-q1 - 0.1*p1", q1=1.0, p1=1.0) + 1.1) <= 1e-15
    assert ev("2^3^2") == 512


def test_precedence():
    assert ev("1 + 2*3") == 7
    assert ev("-2^2") == -4
    assert ev("(1 + 2)*3") == 9
    assert ev("8/2/2") == 2
    assert ev("2^-1") == 0.5
    assert ev("1 - 2 - 3") == -4


def test_numbers_and_functions():
    assert ev("1e-3 * 2.5E2") == 0.25
    assert ev(".5 + 1.") == 1.5
    assert abs(ev("sin(q1)^2 + cos(q1)^2", q1=0.7) - 1) <= 1e-15
    assert ev("sqrt(abs(-4))") == 2
    assert abs(ev("log(exp(q1))", q1=1.3) - 1.3) <= 1e-15
    assert ev("t*2", t=3.0) == 6


def test_vectorised_evaluation():
    q = np.linspace(-1, 1, 7)
    np.testing.assert_allclose(ev("q1^2 + 1", q1=q), q**2 + 1)


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifierError, match="'q2'"):
        parse_expr("q1 + q2", 1)
    with pytest.raises(UnknownIdentifierError):
        parse_expr("x", 2)
    parse_expr("q1 + q2 + p2", 2)


def test_lex_error_position():
    with pytest.raises(LexError) as exc:
        parse_expr("q1 +\n  $", 1)
    assert (exc.value.line, exc.value.col) == (2, 3)


@pytest.mark.parametrize("src", ["sin(q1, p1)", "sin()", "sin q1", "q1(2)"])
def test_arity_errors(src):
    with pytest.raises(ArityError):
        parse_expr(src, 1)


@pytest.mark.parametrize("src", ["", "q1 +", "(q1", "q1 p1", "*2", ")"])
def test_syntax_errors(src):
    with pytest.raises(ParseError, match="line 1, column"):
        parse_expr(src, 1)


def test_evaluation_errors():
    with pytest.raises(EvaluationError):
        ev("1/q1", q1=0.0)
    with pytest.raises(EvaluationError):
        ev("log(q1)", q1=0.0)
    with pytest.raises(EvaluationError):
        ev("sqrt(q1)", q1=-1.0)


def test_differentiate_examples():
    assert differentiate(parse_expr("sin(q1)", 1), "q1").pretty() == "cos(q1)"
    assert differentiate(parse_expr("q1", 1), "p1").pretty() == "0"
    d = differentiate(parse_expr("q1^3 + q1*p1", 1), "q1")
    assert d.evaluate({"q1": 2.0, "p1": 5.0}) == 17


def test_abs_derivative_undefined_at_zero():
    d = differentiate(parse_expr("abs(q1)", 1), "q1")
    assert d.evaluate({"q1": -3.0}) == -1
    with pytest.raises(EvaluationError):
        d.evaluate({"q1": 0.0})


def _fd(e, var, env, h=1e-3):
    def at(x):
        return e.evaluate({**env, var: x})

    x = env[var]
    return (-at(x + 2 * h) + 8 * at(x + h) - 8 * at(x - h) + at(x - 2 * h)) / (12 * h)


def test_random_polynomials_vs_finite_differences():
    rng = np.random.default_rng(11)
    names = variables_for(2)[:-1]
    for _ in range(30):
        coeffs = rng.integers(-3, 4, size=4)
        src = " + ".join(f"{c}*{names[rng.integers(4)]}^{k}" for k, c in enumerate(coeffs))
        e = parse_expr(src, 2)
        env = {n: float(rng.uniform(-1, 1)) for n in names}
        for v in names:
            exact = differentiate(e, v).evaluate(env)
            assert abs(exact - _fd(e, v, env)) <= 1e-7 * max(1.0, abs(exact))


def test_pretty_roundtrip_is_idempotent():
    rng = np.random.default_rng(5)
    for _ in range(100):
        e = random_expression(rng, 2, depth=4)
        once = e.pretty()
        twice = parse_expr(once, 2).pretty()
        assert once == twice


def test_pretty_preserves_value():
    rng = np.random.default_rng(6)
    env = {"q1": 0.3, "q2": -0.7, "p1": 0.2, "p2": 0.9}
    for _ in range(100):
        e = random_expression(rng, 2, depth=4)
        v = e.evaluate(env)
        assert parse_expr(e.pretty(), 2).evaluate(env) == pytest.approx(v, rel=1e-14, abs=1e-14)


def test_free_variables():
    assert parse_expr("q1*sin(p2) + 3", 2).free_variables() == {"q1", "p2"}
