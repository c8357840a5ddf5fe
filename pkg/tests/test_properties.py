"""Property-based checks of the invariants listed for each module."""
import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from tshelm.calculus import GridFunction, antiderivative, delta_derivative_all, delta_integral
from tshelm.dynamics import solve_derivative_form
from tshelm.expr import differentiate, parse_expr, random_expression
from tshelm.fields import Hamiltonian, VectorField
from tshelm.helmholtz import check_conditions, reconstruct, sample_box
from tshelm.timescale import TimeScale
from tshelm.variational import l2_delta_symplectic, random_variation


@st.composite
def timescales(draw, max_segments=12):
    n = draw(st.integers(3, max_segments))
    gaps = draw(st.lists(st.floats(0.01, 0.5), min_size=n, max_size=n))
    dense = draw(st.lists(st.booleans(), min_size=n, max_size=n))
    lengths = draw(st.lists(st.floats(0.05, 0.5), min_size=n, max_size=n))
    segs, x = [], 0.0
    for g, is_dense, ln in zip(gaps, dense, lengths):
        x += g
        if is_dense:
            segs.append((x, x + ln))
            x += ln
        else:
            segs.append(x)
    return TimeScale(segs, dense_step=0.02)


@given(timescales())
def test_jump_operators_bracket_t(T):
    g = T.grid
    assert np.all(g.rho <= g.t) and np.all(g.t <= g.sigma)
    assert np.all(g.mu >= 0) and np.all(g.nu >= 0)
    for t in T.structural_points():
        s, r = T.sigma(t), T.rho(t)
        assert s in T and r in T
        if s > t:
            assert 0.5 * (s + t) not in T
            assert T.rho(s) == t
        if r < t:
            assert 0.5 * (r + t) not in T
            assert T.sigma(r) == t


@given(timescales())
def test_graininess_vanishes_exactly_at_dense_points(T):
    for t in T.structural_points():
        c = T.classify(t)
        assert (T.mu(t) == 0) == (not c.right_scattered)
        assert (T.nu(t) == 0) == (not c.left_scattered)


@given(timescales(), st.data())
def test_integral_additivity(T, data):
    f = GridFunction.sample(T, lambda t: np.cos(2 * t) + t)
    pts = T.structural_points()
    c = data.draw(st.sampled_from(pts))
    total = delta_integral(f, T.a, T.b)[0]
    split = delta_integral(f, T.a, c)[0] + delta_integral(f, c, T.b)[0]
    assert abs(total - split) <= 1e-12 * max(1.0, abs(total))


@given(timescales(), st.floats(-3, 3), st.floats(-3, 3))
def test_derivative_and_integral_are_linear(T, alpha, beta):
    f = GridFunction.sample(T, np.sin)
    g = GridFunction.sample(T, lambda t: t**2)
    h = f * alpha + g * beta
    lhs = delta_derivative_all(h).values
    rhs = alpha * delta_derivative_all(f).values + beta * delta_derivative_all(g).values
    ok = np.isfinite(lhs)
    assert np.allclose(lhs[ok], rhs[ok], atol=1e-9, rtol=1e-9)
    Ih = delta_integral(h, T.a, T.b)[0]
    assert abs(Ih - alpha * delta_integral(f, T.a, T.b)[0] - beta * delta_integral(g, T.a, T.b)[0]) <= 1e-12 * (
        1 + abs(Ih)
    )


@given(timescales())
def test_antiderivative_differentiates_back_at_scattered_points(T):
    f = GridFunction.sample(T, lambda t: np.exp(-t))
    U = antiderivative(f)
    g = T.grid
    rs = np.nonzero(g.right_scattered)[0]
    quot = (U.values[rs + 1, 0] - U.values[rs, 0]) / g.mu[rs]
    assert np.allclose(quot, f.values[rs, 0], rtol=1e-12, atol=1e-12)


@given(timescales(), st.floats(-5, 5))
def test_constants_have_zero_derivative(T, c):
    d = delta_derivative_all(GridFunction.constant(T, c)).values
    assert np.all(d[np.isfinite(d)] == 0)


@given(timescales(), st.integers(0, 2**32 - 1), st.floats(-2, 2))
def test_symplectic_pairing_is_antisymmetric_and_bilinear(T, seed, alpha):
    rng = np.random.default_rng(seed)
    f, g, h = (random_variation(T, 1, rng).as_function() for _ in range(3))
    fg = l2_delta_symplectic(f, g)
    assert abs(fg + l2_delta_symplectic(g, f)) <= 1e-12 * (1 + abs(fg))
    lhs = l2_delta_symplectic(f * alpha + h, g)
    rhs = alpha * fg + l2_delta_symplectic(h, g)
    assert abs(lhs - rhs) <= 1e-10 * (1 + abs(lhs))


@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_pretty_print_is_idempotent(seed, d):
    e = random_expression(np.random.default_rng(seed), d, depth=4)
    once = parse_expr(e.pretty(), d).pretty()
    assert parse_expr(once, d).pretty() == once


@given(st.integers(0, 2**32 - 1))
def test_differentiation_is_linear(seed):
    rng = np.random.default_rng(seed)
    a, b = random_expression(rng, 1), random_expression(rng, 1)
    s = parse_expr(f"({a.pretty()}) + 3*({b.pretty()})", 1)
    env = {"q1": 0.37, "p1": -0.61}
    try:
        lhs = differentiate(s, "q1").evaluate(env)
        rhs = differentiate(a, "q1").evaluate(env) + 3 * differentiate(b, "q1").evaluate(env)
    except ArithmeticError:
        return  # abs() at a kink
    assert abs(lhs - rhs) <= 1e-9 * (1 + abs(lhs))


def _linear_field(m):
    a, b, c, d = m
    return VectorField.from_expressions([f"{a!r}*q1 + {b!r}*p1"], [f"{c!r}*q1 + {d!r}*p1"])


@given(st.lists(st.floats(-2, 2), min_size=4, max_size=4))
def test_linear_field_verdict_is_trace_test(m):
    rep = check_conditions(_linear_field(m), n_samples=16)
    assert rep.is_hamiltonian == (abs(m[0] + m[3]) <= 1e-8)


@given(st.lists(st.floats(-2, 2), min_size=4, max_size=4), st.floats(1e-6, 1.0), st.floats(1e-6, 1.0))
def test_tolerance_monotonicity(m, t1, t2):
    lo, hi = sorted((t1, t2))
    X = _linear_field(m)
    if check_conditions(X, n_samples=16, tol=lo).is_hamiltonian:
        assert check_conditions(X, n_samples=16, tol=hi).is_hamiltonian


@given(st.lists(st.floats(-2, 2), min_size=5, max_size=5))
def test_reconstruction_recovers_quadratic_hamiltonians(c):
    src = f"{c[0]!r}*q1^2 + {c[1]!r}*q1*p1 + {c[2]!r}*p1^2 + {c[3]!r}*q1 + {c[4]!r}*p1"
    H = Hamiltonian.from_expression(src, 1)
    R = reconstruct(H.vector_field())
    z = sample_box(None, 2, 32, seed=1)
    q, p = z[:, :1], z[:, 1:]
    assert np.max(np.abs(R(q, p) - H(q, p))) <= 1e-12 * (1 + np.max(np.abs(c)))


@given(timescales(), st.lists(st.floats(-3, 3), min_size=4, max_size=4))
def test_zero_hamiltonian_is_stationary(T, z):
    tr = solve_derivative_form(Hamiltonian.constant(2, 0.0), T, z[:2], z[2:])
    assert np.all(tr.q == z[:2]) and np.all(tr.p == z[2:])


@given(timescales(max_segments=6))
def test_solver_is_deterministic(T):
    H = Hamiltonian.from_expression("p1^2/2 + 1 - cos(q1)", 1)
    a = solve_derivative_form(H, T, [0.5], [0.1])
    b = solve_derivative_form(H, T, [0.5], [0.1])
    assert a.to_csv() == b.to_csv()
