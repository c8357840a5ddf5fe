import dataclasses
import io

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from tshelm.calculus import GridFunction
from tshelm.dynamics import (
    KIND_DENSE,
    KIND_JUNCTION,
    KIND_SCATTERED,
    NewtonError,
    PicardError,
    SolverConfig,
    embed_functional,
    embed_integral_equation,
    embed_ode,
    energy_series,
    initial_constants,
    residual_star1,
    residual_star2,
    solve_derivative_form,
    solve_integral_form,
)
from tshelm.fields import Hamiltonian
from tshelm.selftest import bisection_oracle
from tshelm.timescale import TimeScale
from tshelm.variational import PhasePath, action_functional

HARMONIC = Hamiltonian.from_expression("(q1^2 + p1^2)/2", 1)
PENDULUM = Hamiltonian.from_expression("p1^2/2 + 1 - cos(q1)", 1)
NONLINEAR = Hamiltonian.from_expression("(q1^2 + p1^2)/2 + 0.1*q1^2*p1^2", 1)
UNIT = TimeScale.interval(0, 1, dense_step=1e-3)
H01 = TimeScale.uniform(0, 1, 0.1)
MIXED = TimeScale([(0, 0.5), 0.6, 0.7, 0.8, 0.9, 1.0], dense_step=1e-3)
JUNCTIONS = TimeScale([(0, 0.4), 0.45, (0.5, 1)], dense_step=1e-3)


def test_continuous_harmonic():
    tr = solve_derivative_form(HARMONIC, UNIT, [1.0], [0.0])
    assert abs(tr.q[-1, 0] - np.cos(1)) <= 1e-6
    assert abs(tr.p[-1, 0] + np.sin(1)) <= 1e-6
    assert set(tr.kind) == {KIND_DENSE}


@pytest.mark.parametrize("T", [UNIT, H01, MIXED, JUNCTIONS], ids=["unit", "0.1Z", "mixed", "junctions"])
def test_zero_hamiltonian_keeps_state(T):
    H = Hamiltonian.constant(2, 0.0)
    tr = solve_derivative_form(H, T, [0.3, -1.0], [2.0, 0.5])
    assert np.all(tr.q == [0.3, -1.0]) and np.all(tr.p == [2.0, 0.5])
    ti = solve_integral_form(H, T, [0.3, -1.0], [2.0, 0.5])
    assert np.all(ti.q == [0.3, -1.0]) and np.all(ti.p == [2.0, 0.5])


def test_discrete_harmonic_matches_recursion():
    tr = solve_derivative_form(HARMONIC, H01, [1.0], [0.0])
    q, p = [1.0], [0.0]
    for _ in range(10):
        q.append(q[-1] + 0.1 * p[-1])
        p.append(p[-1] - 0.1 * q[-1])
    assert np.max(np.abs(tr.q[:, 0] - q)) <= 1e-12
    assert np.max(np.abs(tr.p[:, 0] - p)) <= 1e-12
    assert set(tr.kind) == {KIND_SCATTERED}


def test_discrete_nonlinear_matches_bisection_oracle():
    tr = solve_derivative_form(NONLINEAR, H01, [0.8], [0.3])
    ref = bisection_oracle(0.8, 0.3, 0.1, 10)
    assert np.max(np.abs(tr.q[:, 0] - ref[:, 0])) <= 1e-12
    assert np.max(np.abs(tr.p[:, 0] - ref[:, 1])) <= 1e-12
    assert tr.newton_iters[1:].min() >= 1


def test_continuous_pendulum_matches_reference_integrator():
    tr = solve_derivative_form(PENDULUM, UNIT, [1.2], [0.1])
    ref = solve_ivp(
        lambda t, y: [y[1], -np.sin(y[0])], (0, 1), [1.2, 0.1], t_eval=UNIT.grid.t, rtol=1e-12, atol=1e-13
    )
    assert np.max(np.abs(tr.q[:, 0] - ref.y[0])) <= 1e-6
    assert np.max(np.abs(tr.p[:, 0] - ref.y[1])) <= 1e-6


def test_residuals_of_derivative_form_output():
    cfg = SolverConfig()
    for T in (H01, MIXED):
        tr = solve_derivative_form(NONLINEAR, T, [0.8], [0.3], cfg)
        assert residual_star1(NONLINEAR, tr) <= 10 * cfg.newton_tol
        assert residual_star2(NONLINEAR, tr) <= max(1e-9, 10 * T.dense_step**4)


def test_integral_form_on_discrete_scale():
    C_q, C_p = initial_constants(HARMONIC, H01, [1.0], [0.0])
    ti = solve_integral_form(HARMONIC, H01, C_q, C_p)
    assert residual_star2(HARMONIC, ti) <= 1e-10
    assert residual_star1(HARMONIC, ti) <= 1e-10
    tr = solve_derivative_form(HARMONIC, H01, [1.0], [0.0])
    assert np.max(np.abs(ti.q - tr.q)) <= 1e-12 and np.max(np.abs(ti.p - tr.p)) <= 1e-12


def test_integral_form_matches_derivative_form_on_interval():
    tr = solve_derivative_form(PENDULUM, UNIT, [1.0], [0.0])
    ti = solve_integral_form(PENDULUM, UNIT, tr.C_q, tr.C_p)
    assert np.max(np.abs(ti.q - tr.q)) <= 1e-6 and np.max(np.abs(ti.p - tr.p)) <= 1e-6


def test_initial_constants():
    C_q, C_p = initial_constants(HARMONIC, H01, [1.0], [0.5])
    assert C_q.tolist() == [1.0]
    assert C_p.tolist() == [0.5 + 0.1 * 1.0]
    C_q, C_p = initial_constants(HARMONIC, UNIT, [1.0], [0.5])
    assert C_p.tolist() == [0.5]


def test_perturbation_is_detected():
    tr = solve_derivative_form(NONLINEAR, H01, [0.8], [0.3])
    p = tr.p.copy()
    p[5, 0] += 1e-3
    bad = dataclasses.replace(tr, p=p, p_left=p.copy())
    assert residual_star1(NONLINEAR, bad) >= 1e-4


def test_junction_bookkeeping():
    tr = solve_derivative_form(NONLINEAR, JUNCTIONS, [0.8], [0.3])
    g = JUNCTIONS.grid
    assert tr.junctions == [0.4, 0.5]
    kinds = dict(zip(g.t.tolist(), tr.kind))
    assert kinds[0.4] == KIND_JUNCTION and kinds[0.5] == KIND_JUNCTION and kinds[0.45] == KIND_SCATTERED
    i = g.index(0.4)
    # p jumps at a dense-to-scattered point by mu * H_q
    jump = tr.p[i] - tr.p_left[i]
    assert np.allclose(jump, -0.05 * NONLINEAR.grad_q(tr.q[i], tr.p[i]), atol=1e-13)
    # p is carried unchanged across the scattered-to-dense point
    assert np.array_equal(tr.p[g.index(0.5)], tr.p[g.index(0.45)])
    assert residual_star1(NONLINEAR, tr) <= 1e-10
    assert residual_star2(NONLINEAR, tr) <= 1e-8


def test_energy_series():
    c = Hamiltonian.constant(1, 1.5)
    tr = solve_derivative_form(c, MIXED, [0.2], [0.1])
    assert {v for _, v in energy_series(c, tr)} == {1.5}
    tr = solve_derivative_form(HARMONIC, UNIT, [1.0], [0.0])
    e = np.array([v for _, v in energy_series(HARMONIC, tr)])
    assert np.ptp(e) <= 1e-6
    tr = solve_derivative_form(HARMONIC, H01, [1.0], [0.0])
    assert len(energy_series(HARMONIC, tr)) == 11


def test_newton_failure_reports_location():
    H = Hamiltonian.from_expression("q1^2/2 + 0.5*q1^2*p1^4 + p1^2/2", 1)
    with pytest.raises(NewtonError) as exc:
        solve_derivative_form(H, TimeScale.points([0, 0.5, 1.0]), [1.0], [1.0], SolverConfig(newton_max_iter=1))
    assert exc.value.index == 1 and exc.value.t == 0.5


def test_picard_failure():
    tr = solve_derivative_form(PENDULUM, UNIT, [1.0], [0.0])
    far = solve_derivative_form(PENDULUM, UNIT, [0.0], [1.0])
    with pytest.raises(PicardError, match="1 sweeps"):
        solve_integral_form(PENDULUM, UNIT, tr.C_q, tr.C_p, SolverConfig(max_sweeps=1), initial=far)
    ti = solve_integral_form(PENDULUM, UNIT, tr.C_q, tr.C_p, initial=far)
    assert ti.sweeps > 1 and np.max(np.abs(ti.q - tr.q)) <= 1e-6


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(newton_tol=0)
    with pytest.raises(ValueError):
        SolverConfig(dense_method="euler")


def test_bad_initial_dimension():
    with pytest.raises(ValueError, match="length 1"):
        solve_derivative_form(HARMONIC, H01, [1.0, 2.0], [0.0])


def test_determinism_and_csv():
    a = solve_derivative_form(NONLINEAR, MIXED, [0.8], [0.3])
    b = solve_derivative_form(NONLINEAR, MIXED, [0.8], [0.3])
    assert np.array_equal(a.q, b.q) and np.array_equal(a.p, b.p)
    text = a.to_csv()
    assert text == b.to_csv()
    lines = text.splitlines()
    assert lines[0] == "t,kind,q1,p1,newton_iters,residual"
    assert len(lines) == len(MIXED.grid) + 1
    buf = io.StringIO()
    a.to_csv(buf)
    assert buf.getvalue() == text
    # floats round-trip exactly
    row = lines[-1].split(",")
    assert float(row[2]) == a.q[-1, 0]


def test_embed_ode_examples():
    for T in (H01, MIXED):
        x = embed_ode(lambda t, x: 0 * x, T).solve([2.0])
        assert np.all(x.values == 2.0)
    x = embed_ode(lambda t, x: x, H01).solve([1.0])
    assert abs(x.values[-1, 0] - 1.1**10) <= 1e-12
    x = embed_ode(lambda t, x: x, UNIT).solve([1.0])
    assert abs(x.values[-1, 0] - np.e) <= 1e-6
    eq = embed_ode(lambda t, x: x, MIXED)
    assert eq.residual(eq.solve([1.0])) <= 1e-8


def test_embed_integral_equation_examples():
    eq = embed_integral_equation(lambda t, x: 0 * x, MIXED)
    assert np.all(eq.solve([3.0]).values == 3.0)
    eq = embed_integral_equation(lambda t, x: np.ones_like(x), MIXED)
    x = eq.solve([0.5])
    g = MIXED.grid
    assert np.allclose(x.values[:, 0], 0.5 + (g.sigma - MIXED.a), atol=1e-13)
    eq = embed_integral_equation(lambda t, x: -x, H01)
    x = eq.solve([1.0])
    assert eq.residual(x, [1.0]) <= 1e-12


def test_embed_functional_matches_action():
    H = Hamiltonian.constant(1, 0.0)
    for T in (H01, MIXED):
        q = GridFunction.sample(T, np.sin)
        p = GridFunction.sample(T, np.cos)
        L = embed_functional(lambda t, x, v: x[:, 1] * v[:, 0], T)
        path = PhasePath(q, p)
        val = L(q.concat(p))
        assert abs(val - action_functional(H, path)) <= 1e-13


def test_embed_functional_upper_limit():
    F = embed_functional(lambda t, x, v: np.ones(len(t)), H01)
    x = GridFunction.constant(H01, 0.0)
    assert abs(F(x) - 1.0) <= 1e-15
    assert abs(F(x, upper=0.4) - 0.5) <= 1e-15
