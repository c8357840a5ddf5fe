"""Phase-space vector fields and Hamiltonians.

Both are autonomous maps on ``R^d x R^d``. They evaluate on arrays of shape
``(..., d)`` and are backed either by parsed expressions, in which case all
derivatives are exact, or by plain callables, in which case derivatives come
from central differences.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .expr import Expr, differentiate, parse_expr

__all__ = ["VectorField", "Hamiltonian", "fd_jacobian", "fd_step"]


def fd_step(z: np.ndarray) -> np.ndarray:
    """Per-coordinate central-difference step ``1e-6 * max(1, |z_i|)``."""
    return 1e-6 * np.maximum(1.0, np.abs(z))


def fd_jacobian(fn: Callable[[np.ndarray], np.ndarray], z: np.ndarray) -> np.ndarray:
    """Central-difference Jacobian of ``fn`` at points ``z`` of shape (..., m).

    Returns shape (..., k, m) where ``fn`` maps (..., m) -> (..., k).
    """
    z = np.asarray(z, dtype=float)
    h = fd_step(z)
    cols = []
    for j in range(z.shape[-1]):
        e = np.zeros(z.shape)
        e[..., j] = h[..., j]
        cols.append((fn(z + e) - fn(z - e)) / (2.0 * h[..., j : j + 1]))
    return np.stack(cols, axis=-1)


def _env(q: np.ndarray, p: np.ndarray) -> dict:
    d = q.shape[-1]
    env = {f"q{i + 1}": q[..., i] for i in range(d)}
    env.update({f"p{i + 1}": p[..., i] for i in range(d)})
    env["t"] = 0.0
    return env


def _eval_all(exprs: Sequence[Expr], q: np.ndarray, p: np.ndarray) -> np.ndarray:
    env = _env(q, p)
    shape = q.shape[:-1]
    return np.stack([np.broadcast_to(np.asarray(e.evaluate(env), dtype=float), shape) for e in exprs], axis=-1)


def _split(z: np.ndarray, d: int) -> tuple[np.ndarray, np.ndarray]:
    return z[..., :d], z[..., d:]


class VectorField:
    """First-order field ``X = (X_q, X_p)`` on phase space.

    Parameters
    ----------
    d : int
        Configuration dimension.
    xq, xp : callable
        ``(q, p) -> array (..., d)``.
    jacobian : callable, optional
        ``(q, p) -> (A, B, C, D)`` with ``A = dX_q/dq``, ``B = dX_q/dp``,
        ``C = dX_p/dq``, ``D = dX_p/dp``, each of shape (..., d, d).
    name : str, optional
    """

    def __init__(self, d: int, xq, xp, jacobian=None, name: str = "", exprs=None):
        self.d = int(d)
        self._xq = xq
        self._xp = xp
        self._jac = jacobian
        self.name = name
        self.exprs = exprs

    def __repr__(self) -> str:
        kind = "expr" if self.exprs else "callable"
        return f"VectorField({self.name or '?'}, d={self.d}, {kind})"

    @classmethod
    def from_expressions(cls, xq: Sequence[str], xp: Sequence[str], name: str = "") -> "VectorField":
        if isinstance(xq, str):
            xq = [xq]
        if isinstance(xp, str):
            xp = [xp]
        d = len(xq)
        if len(xp) != d:
            raise ValueError(f"X_q has {d} components but X_p has {len(xp)}")
        eq = [parse_expr(s, d) for s in xq]
        ep = [parse_expr(s, d) for s in xp]
        qs = [f"q{i + 1}" for i in range(d)]
        ps = [f"p{i + 1}" for i in range(d)]
        blocks = [[[differentiate(e, v) for v in vs] for e in es] for es, vs in ((eq, qs), (eq, ps), (ep, qs), (ep, ps))]

        def jac(q, p):
            out = []
            for block in blocks:
                rows = [_eval_all(row, q, p) for row in block]
                out.append(np.stack(rows, axis=-2))
            return tuple(out)

        return cls(
            d,
            lambda q, p: _eval_all(eq, q, p),
            lambda q, p: _eval_all(ep, q, p),
            jac,
            name,
            exprs=(tuple(eq), tuple(ep)),
        )

    @property
    def has_analytic_jacobian(self) -> bool:
        return self._jac is not None

    def xq(self, q, p) -> np.ndarray:
        return np.asarray(self._xq(np.asarray(q, float), np.asarray(p, float)), dtype=float)

    def xp(self, q, p) -> np.ndarray:
        return np.asarray(self._xp(np.asarray(q, float), np.asarray(p, float)), dtype=float)

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        q, p = _split(z, self.d)
        return np.concatenate([self.xq(q, p), self.xp(q, p)], axis=-1)

    def jacobian_blocks(self, q, p, analytic: bool | None = None):
        """Blocks ``(dXq/dq, dXq/dp, dXp/dq, dXp/dp)`` at points (q, p)."""
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        use = self.has_analytic_jacobian if analytic is None else analytic
        if use:
            if self._jac is None:
                raise ValueError("this field has no analytic Jacobian")
            return tuple(np.asarray(b, dtype=float) for b in self._jac(q, p))
        J = fd_jacobian(self, np.concatenate([q, p], axis=-1))
        d = self.d
        return J[..., :d, :d], J[..., :d, d:], J[..., d:, :d], J[..., d:, d:]

    def __add__(self, other: "VectorField") -> "VectorField":
        return linear_combination([(1.0, self), (1.0, other)])

    def __rmul__(self, alpha: float) -> "VectorField":
        return linear_combination([(float(alpha), self)])


def linear_combination(terms: Sequence[tuple[float, VectorField]]) -> VectorField:
    """``sum_k c_k X_k``, keeping analytic Jacobians when every term has one."""
    d = terms[0][1].d
    if any(X.d != d for _, X in terms):
        raise ValueError("fields of different dimensions")
    jac = None
    if all(X.has_analytic_jacobian for _, X in terms):

        def jac(q, p):
            acc = None
            for c, X in terms:
                blocks = [c * b for b in X.jacobian_blocks(q, p)]
                acc = blocks if acc is None else [x + y for x, y in zip(acc, blocks)]
            return tuple(acc)

    return VectorField(
        d,
        lambda q, p: sum(c * X.xq(q, p) for c, X in terms),
        lambda q, p: sum(c * X.xp(q, p) for c, X in terms),
        jac,
        name=" + ".join(f"{c:g}*{X.name or 'X'}" for c, X in terms),
    )


class Hamiltonian:
    """Scalar ``H(q, p)`` with gradients and the mixed block ``d(H_q)/dp``."""

    def __init__(self, d: int, value, grad_q=None, grad_p=None, dgq_dp=None, name: str = "", expr=None):
        self.d = int(d)
        self._value = value
        self._gq = grad_q
        self._gp = grad_p
        self._gqp = dgq_dp
        self.name = name
        self.expr = expr

    def __repr__(self) -> str:
        return f"Hamiltonian({self.name or self.expr or '?'}, d={self.d})"

    @classmethod
    def from_expression(cls, src: str, d: int, name: str = "") -> "Hamiltonian":
        e = parse_expr(src, d)
        qs = [f"q{i + 1}" for i in range(d)]
        ps = [f"p{i + 1}" for i in range(d)]
        gq = [differentiate(e, v) for v in qs]
        gp = [differentiate(e, v) for v in ps]
        gqp = [[differentiate(g, v) for v in ps] for g in gq]
        return cls(
            d,
            lambda q, p: _eval_all([e], q, p)[..., 0],
            lambda q, p: _eval_all(gq, q, p),
            lambda q, p: _eval_all(gp, q, p),
            lambda q, p: np.stack([_eval_all(row, q, p) for row in gqp], axis=-2),
            name=name or src,
            expr=e,
        )

    @classmethod
    def constant(cls, d: int, c: float = 0.0) -> "Hamiltonian":
        return cls.from_expression(repr(float(c)), d, name=f"H={c:g}")

    def value(self, q, p) -> np.ndarray:
        return np.asarray(self._value(np.asarray(q, float), np.asarray(p, float)), dtype=float)

    def __call__(self, q, p) -> np.ndarray:
        return self.value(q, p)

    def grad_q(self, q, p) -> np.ndarray:
        q = np.asarray(q, float)
        p = np.asarray(p, float)
        if self._gq is not None:
            return np.asarray(self._gq(q, p), dtype=float)
        return fd_jacobian(lambda x: self.value(x, p)[..., None], q)[..., 0, :]

    def grad_p(self, q, p) -> np.ndarray:
        q = np.asarray(q, float)
        p = np.asarray(p, float)
        if self._gp is not None:
            return np.asarray(self._gp(q, p), dtype=float)
        return fd_jacobian(lambda y: self.value(q, y)[..., None], p)[..., 0, :]

    def dgrad_q_dp(self, q, p) -> np.ndarray:
        """Jacobian of ``dH/dq`` with respect to ``p``, shape (..., d, d)."""
        q = np.asarray(q, float)
        p = np.asarray(p, float)
        if self._gqp is not None:
            return np.asarray(self._gqp(q, p), dtype=float)
        return fd_jacobian(lambda y: self.grad_q(q, y), p)

    def vector_field(self) -> VectorField:
        """The Hamiltonian field ``(dH/dp, -dH/dq)``."""
        if self.expr is not None:
            d = self.d
            gp = [differentiate(self.expr, f"p{i + 1}") for i in range(d)]
            gq = [differentiate(self.expr, f"q{i + 1}") for i in range(d)]
            X = VectorField.from_expressions([g.pretty() for g in gp], [f"-({g.pretty()})" for g in gq])
            X.name = f"X[{self.name}]"
            return X
        return VectorField(self.d, self.grad_p, lambda q, p: -self.grad_q(q, p), name=f"X[{self.name}]")
