"""Action functional, its first variation, and the linearised Hamilton operator.

The operator ``O_X(q, p) = (q^Delta - X_q ; rho^Delta p^nabla - X_p)`` is
linearised along a phase path, and its symmetry is measured with the
symplectic pairing ``<f, g>_J = int <f, J g> Delta t`` where
``J(u, v) = (v, -u)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre

from .calculus import (
    DEFAULT_ORDER,
    GridFunction,
    JunctionError,
    delta_derivative_all,
    delta_integral,
    rho_nabla,
)
from .fields import Hamiltonian, VectorField
from .timescale import Grid

__all__ = [
    "PhasePath",
    "Variation",
    "l2_delta",
    "l2_delta_symplectic",
    "apply_J",
    "action_functional",
    "frechet_action",
    "apply_DOX",
    "apply_adjoint_DOX",
    "random_variation",
    "selfadjointness_residual",
    "adjoint_consistency_residual",
]

N_LEGENDRE = 5


@dataclass(frozen=True)
class PhasePath:
    """A pair ``(q, p)`` of ``R^d``-valued grid functions on one grid."""

    q: GridFunction
    p: GridFunction

    def __post_init__(self):
        self.q._check(self.p)
        if self.q.dim != self.p.dim:
            raise ValueError(f"q has dimension {self.q.dim} but p has {self.p.dim}")

    @classmethod
    def from_arrays(cls, grid, q, p, q_left=None, p_left=None) -> "PhasePath":
        return cls(GridFunction(grid, q, q_left), GridFunction(grid, p, p_left))

    @property
    def grid(self) -> Grid:
        return self.q.grid

    @property
    def d(self) -> int:
        return self.q.dim

    def __add__(self, var: "Variation") -> "PhasePath":
        return PhasePath(self.q + var.u, self.p + var.v)

    def __sub__(self, var: "Variation") -> "PhasePath":
        return PhasePath(self.q - var.u, self.p - var.v)


@dataclass(frozen=True)
class Variation:
    """A boundary-vanishing perturbation ``(u, v)`` of a phase path."""

    u: GridFunction
    v: GridFunction

    def __post_init__(self):
        self.u._check(self.v)
        for name, f in (("u", self.u), ("v", self.v)):
            if np.any(f.values[0] != 0) or np.any(f.values[-1] != 0):
                raise ValueError(f"variation component {name} does not vanish at both ends")

    @classmethod
    def from_function(cls, f: GridFunction) -> "Variation":
        d = f.dim // 2
        return cls(f.component(slice(0, d)), f.component(slice(d, 2 * d)))

    def as_function(self) -> GridFunction:
        return self.u.concat(self.v)

    def scale(self, eps: float) -> "Variation":
        return Variation(self.u * eps, self.v * eps)

    def norm(self) -> float:
        f = self.as_function()
        return float(np.sqrt(max(l2_delta(f, f), 0.0)))


def l2_delta(f: GridFunction, g: GridFunction) -> float:
    """``int_a^b <f, g> Delta t``."""
    T = f.grid.timescale
    return float(delta_integral(f.dot(g), T.a, T.b)[0])


def apply_J(g: GridFunction) -> GridFunction:
    """``J (u, v) = (v, -u)`` applied blockwise without forming the matrix."""
    if g.dim % 2:
        raise ValueError(f"symplectic pairing needs even dimension, got {g.dim}")
    d = g.dim // 2
    return GridFunction(
        g.grid,
        np.hstack([g.values[:, d:], -g.values[:, :d]]),
        np.hstack([g.left[:, d:], -g.left[:, :d]]),
        g.flags,
    )


def l2_delta_symplectic(f: GridFunction, g: GridFunction) -> float:
    """``<f, J g>_{L2, Delta}``; antisymmetric in ``(f, g)``."""
    if f.dim % 2:
        raise ValueError(f"symplectic pairing needs even dimension, got {f.dim}")
    return l2_delta(f, apply_J(g))


def _on_path(fn, path: PhasePath) -> GridFunction:
    vals = np.asarray(fn(path.q.values, path.p.values), dtype=float)
    if path.q.left is path.q.values and path.p.left is path.p.values:
        left = vals
    else:
        left = np.asarray(fn(path.q.left, path.p.left), dtype=float)
    return GridFunction(path.grid, vals, left, path.q.flags | path.p.flags)


def _action_integrand(H: Hamiltonian, path: PhasePath, order: int) -> GridFunction:
    qd = delta_derivative_all(path.q, order)
    return path.p.dot(qd) - _on_path(H.value, path)


def action_functional(H: Hamiltonian, path: PhasePath, order: int = DEFAULT_ORDER) -> float:
    """``int_a^b [<p, q^Delta> - H(q, p)] Delta t``."""
    T = path.grid.timescale
    return float(delta_integral(_action_integrand(H, path, order), T.a, T.b)[0])


def frechet_action(H: Hamiltonian, path: PhasePath, var: Variation, order: int = DEFAULT_ORDER) -> float:
    """Directional derivative of the action along ``var``:
    ``int [p.u^Delta + v.q^Delta - H_q.u - H_p.v] Delta t``."""
    qd = delta_derivative_all(path.q, order)
    ud = delta_derivative_all(var.u, order)
    Hq = _on_path(H.grad_q, path)
    Hp = _on_path(H.grad_p, path)
    integrand = path.p.dot(ud) + var.v.dot(qd) - Hq.dot(var.u) - Hp.dot(var.v)
    T = path.grid.timescale
    return float(delta_integral(integrand, T.a, T.b)[0])


def _blocks(X: VectorField, path: PhasePath):
    vals = X.jacobian_blocks(path.q.values, path.p.values)
    if path.q.left is path.q.values and path.p.left is path.p.values:
        return vals, vals
    return vals, X.jacobian_blocks(path.q.left, path.p.left)


def _mv(M: np.ndarray, x: np.ndarray, transpose: bool = False) -> np.ndarray:
    return np.einsum("nji,nj->ni" if transpose else "nij,nj->ni", M, x)


def _linearised(X: VectorField, path: PhasePath, var: Variation, order: int, adjoint: bool) -> GridFunction:
    if path.d != X.d or var.u.dim != X.d:
        raise ValueError("dimension mismatch between field, path and variation")
    ud = delta_derivative_all(var.u, order)
    vr = rho_nabla(var.v, order)
    out = []
    for (A, B, C, D), dq, dp, u, v in (
        (_blocks(X, path)[0], ud.values, vr.values, var.u.values, var.v.values),
        (_blocks(X, path)[1], ud.left, vr.left, var.u.left, var.v.left),
    ):
        if adjoint:
            top = dq + _mv(D, u, True) - _mv(B, v, True)
            bot = dp - _mv(C, u, True) + _mv(A, v, True)
        else:
            top = dq - _mv(A, u) - _mv(B, v)
            bot = dp - _mv(C, u) - _mv(D, v)
        out.append(np.hstack([top, bot]))
    return GridFunction(path.grid, out[0], out[1], path.grid.junction_mask.copy())


def apply_DOX(X: VectorField, path: PhasePath, var: Variation, order: int = DEFAULT_ORDER) -> GridFunction:
    """Linearisation of ``O_X`` at ``path`` applied to ``var``.

    ``(u^Delta - A u - B v ; rho^Delta v^nabla - C u - D v)`` with ``A, B, C, D``
    the Jacobian blocks of ``X`` along the path. The second block uses the
    combined operator of :func:`tshelm.calculus.rho_nabla`, so it is NaN at
    scattered-to-dense junctions.
    """
    return _linearised(X, path, var, order, adjoint=False)


def apply_adjoint_DOX(X: VectorField, path: PhasePath, var: Variation, order: int = DEFAULT_ORDER) -> GridFunction:
    """``(u^Delta + D^T u - B^T v ; rho^Delta v^nabla - C^T u + A^T v)``."""
    return _linearised(X, path, var, order, adjoint=True)


def random_variation(grid, d: int, rng: np.random.Generator, n_terms: int = N_LEGENDRE) -> Variation:
    """``(u, v)`` with components ``s(1-s) sum_k c_k P_k(2s-1)``, ``s = (t-a)/(b-a)``.

    Coefficients are standard normal. The bump factor vanishes exactly at both
    ends of the scale.
    """
    if isinstance(grid, GridFunction):
        grid = grid.grid
    if not isinstance(grid, Grid):
        grid = grid.grid
    T = grid.timescale
    s = (grid.t - T.a) / (T.b - T.a)
    bump = s * (1.0 - s)
    c = rng.standard_normal((n_terms, 2 * d))
    w = bump[:, None] * legendre.legval(2.0 * s - 1.0, c).T
    return Variation(GridFunction(grid, w[:, :d]), GridFunction(grid, w[:, d:]))


def _require_pairing_domain(grid: Grid):
    bad = np.nonzero(grid.ls_rd_mask)[0]
    if len(bad):
        raise JunctionError(
            f"scattered-to-dense junction at t={float(grid.t[bad[0]])!r}: rho is not Delta-differentiable "
            "there and the linearised operator is undefined"
        )


def _trial_streams(seed: int, trials: int):
    if trials < 1:
        raise ValueError("trials must be at least 1")
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(trials)]


def selfadjointness_residual(
    X: VectorField, path: PhasePath, trials: int = 20, seed: int = 0, order: int = DEFAULT_ORDER
) -> float:
    """``max |<DO f, g>_J - <DO g, f>_J| / (||f|| ||g||)`` over random pairs."""
    _require_pairing_domain(path.grid)
    worst = 0.0
    for rng in _trial_streams(seed, trials):
        f = random_variation(path.grid, X.d, rng)
        g = random_variation(path.grid, X.d, rng)
        lhs = l2_delta_symplectic(apply_DOX(X, path, f, order), g.as_function())
        rhs = l2_delta_symplectic(apply_DOX(X, path, g, order), f.as_function())
        worst = max(worst, abs(lhs - rhs) / (f.norm() * g.norm()))
    return worst


def adjoint_consistency_residual(
    X: VectorField, path: PhasePath, trials: int = 50, seed: int = 0, order: int = DEFAULT_ORDER
) -> float:
    """``max |<DO f, g>_J - <DO* g, f>_J| / (||f|| ||g||)``; small for every X."""
    _require_pairing_domain(path.grid)
    worst = 0.0
    for rng in _trial_streams(seed, trials):
        f = random_variation(path.grid, X.d, rng)
        g = random_variation(path.grid, X.d, rng)
        lhs = l2_delta_symplectic(apply_DOX(X, path, f, order), g.as_function())
        rhs = l2_delta_symplectic(apply_adjoint_DOX(X, path, g, order), f.as_function())
        worst = max(worst, abs(lhs - rhs) / (f.norm() * g.norm()))
    return worst
