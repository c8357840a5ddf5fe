import numpy as np
import pytest

from tshelm.catalog import CATALOG, get
from tshelm.fields import Hamiltonian, VectorField, fd_jacobian


def test_from_expressions_evaluates():
    X = VectorField.from_expressions(["p1"], ["-q1 - 0.1*p1"])
    np.testing.assert_allclose(X([1.0, 1.0]), [1.0, -1.1])
    z = np.array([[1.0, 2.0], [0.5, -1.0]])
    np.testing.assert_allclose(X(z), [[2.0, -1.2], [-1.0, -0.4]])


def test_component_mismatch():
    with pytest.raises(ValueError, match="X_p has 2"):
        VectorField.from_expressions(["p1"], ["q1", "q1"])


def test_jacobian_blocks_harmonic():
    A, B, C, D = get("harmonic").field().jacobian_blocks([0.3], [-0.2])
    assert A.tolist() == [[0.0]] and B.tolist() == [[1.0]]
    assert C.tolist() == [[-1.0]] and D.tolist() == [[0.0]]


def test_analytic_vs_finite_difference_blocks():
    rng = np.random.default_rng(0)
    for entry in CATALOG:
        X = entry.field()
        q = rng.uniform(-1, 1, (20, X.d))
        p = rng.uniform(-1, 1, (20, X.d))
        exact = X.jacobian_blocks(q, p, analytic=True)
        approx = X.jacobian_blocks(q, p, analytic=False)
        for a, b in zip(exact, approx):
            assert np.max(np.abs(a - b)) <= 1e-8


def test_callable_field_uses_finite_differences():
    X = VectorField(1, lambda q, p: p, lambda q, p: -np.sin(q))
    assert not X.has_analytic_jacobian
    _, _, C, _ = X.jacobian_blocks([0.0], [0.0])
    assert abs(C[0, 0] + 1.0) <= 1e-9
    with pytest.raises(ValueError):
        X.jacobian_blocks([0.0], [0.0], analytic=True)


def test_linear_combination_keeps_jacobian():
    h = get("harmonic").field()
    dmp = get("damped").field()
    Y = 2.0 * h + dmp
    assert Y.has_analytic_jacobian
    np.testing.assert_allclose(Y([1.0, 1.0]), 2 * h([1.0, 1.0]) + dmp([1.0, 1.0]))
    D = Y.jacobian_blocks([0.0], [0.0])[3]
    assert abs(D[0, 0] + 0.1) <= 1e-15


def test_hamiltonian_gradients():
    H = Hamiltonian.from_expression("(q1^2 + q2^2 + p1^2 + p2^2)/2 + q1*q2", 2)
    q, p = np.array([0.5, -0.25]), np.array([1.0, 2.0])
    np.testing.assert_allclose(H.grad_q(q, p), [0.25, 0.25])
    np.testing.assert_allclose(H.grad_p(q, p), p)
    assert np.all(H.dgrad_q_dp(q, p) == 0)


def test_hamiltonian_vector_field_matches_catalog():
    for entry in CATALOG:
        if not entry.hamiltonian:
            continue
        X = entry.exact_hamiltonian().vector_field()
        Y = entry.field()
        z = np.random.default_rng(1).uniform(-1, 1, (10, 2 * entry.d))
        np.testing.assert_allclose(X(z), Y(z), atol=1e-15)


def test_callable_hamiltonian_fd_gradients():
    H = Hamiltonian(1, lambda q, p: (p**2 / 2 + 1 - np.cos(q))[..., 0])
    assert abs(H.grad_q([0.4], [0.0])[0] - np.sin(0.4)) <= 1e-9
    assert abs(H.grad_p([0.0], [0.7])[0] - 0.7) <= 1e-9


def test_fd_jacobian_shape():
    J = fd_jacobian(lambda z: np.stack([z[..., 0] * z[..., 1]], axis=-1), np.ones((3, 2)))
    assert J.shape == (3, 1, 2)


def test_catalog_lookup():
    assert get("pendulum").d == 1 and get("shear").d == 2
    with pytest.raises(KeyError, match="known: harmonic"):
        get("nope")
    assert abs(get("pendulum").exact_value([np.pi], [0.0]) - 2.0) <= 1e-15
