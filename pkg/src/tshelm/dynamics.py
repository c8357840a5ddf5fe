"""Hamilton equations on a time scale, in derivative and integral form.

Derivative form::

    q^Delta(t)          =  dH/dp(q(t), p(t))
    rho^Delta p^nabla(t) = -dH/dq(q(t), p(t))

Integral form, with constants ``C_q``, ``C_p``::

    q(sigma t) = C_q + int_a^{sigma t} dH/dp Delta s
    p(t)       = C_p - int_a^{sigma t} dH/dq Delta s

Stepping rule used by :func:`solve_derivative_form`:

* right-scattered ``t_k``: ``q_{k+1} = q_k + mu(t_k) H_p(q_k, p_k)``, explicit;
* right-scattered ``t_{k+1}``: ``p_{k+1} = p_k - mu(t_{k+1}) H_q(q_{k+1}, p_{k+1})``,
  implicit, solved by Newton;
* dense stretches: the classical Hamilton ODE with RK4 at the sampling step;
* dense-to-scattered junction ``r``: RK4 delivers ``p(r-)`` and the same
  implicit update ``p(r) = p(r-) - mu(r) H_q(q(r), p(r))`` applies, which is
  what the integral form prescribes there;
* scattered-to-dense junctions (``mu = 0`` reached by a jump): ``p`` is
  carried over unchanged, as the integral form requires;
* a left-scattered maximum ``b`` lies outside both equations' domains; the
  recursion is extended there with ``nu(b)`` in place of ``mu``, which is the
  value ``p(b)`` would take on the untruncated uniform scale.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .calculus import (
    DEFAULT_ORDER,
    GridFunction,
    antiderivative,
    delta_derivative_all,
    delta_integral,
    rho_nabla,
)
from .fields import Hamiltonian
from .timescale import Grid, TimeScale, as_timescale
from .variational import PhasePath

__all__ = [
    "SolverConfig",
    "Trajectory",
    "NewtonError",
    "PicardError",
    "KIND_SCATTERED",
    "KIND_DENSE",
    "KIND_JUNCTION",
    "solve_derivative_form",
    "solve_integral_form",
    "initial_constants",
    "residual_star1",
    "residual_star2",
    "energy_series",
    "DynamicEquation",
    "IntegralEquation",
    "embed_ode",
    "embed_integral_equation",
    "embed_functional",
]

KIND_SCATTERED = "scattered"
KIND_DENSE = "dense"
KIND_JUNCTION = "junction-skipped"


class NewtonError(RuntimeError):
    def __init__(self, index: int, t: float, residual: float):
        super().__init__(f"Newton did not converge at step {index} (t={t!r}), last residual {residual:.3e}")
        self.index = index
        self.t = t
        self.residual = residual


class PicardError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    newton_tol: float = 1e-12
    newton_max_iter: int = 50
    max_sweeps: int = 200
    dense_method: str = "rk4"

    def __post_init__(self):
        if not self.newton_tol > 0:
            raise ValueError("newton_tol must be positive")
        if self.newton_max_iter < 1 or self.max_sweeps < 1:
            raise ValueError("iteration limits must be positive")
        if self.dense_method != "rk4":
            raise ValueError(f"unknown dense integrator {self.dense_method!r}")


@dataclass
class Trajectory:
    """Solver output on the grid of ``T``.

    ``p_left`` holds ``p(t-)``; it differs from ``p`` only at dense-to-scattered
    junctions, where ``p`` jumps.
    """

    grid: Grid
    q: np.ndarray
    p: np.ndarray
    p_left: np.ndarray
    kind: list
    newton_iters: np.ndarray
    residual: np.ndarray
    C_q: np.ndarray
    C_p: np.ndarray
    junctions: list = field(default_factory=list)
    sweeps: int = 0

    @property
    def t(self) -> np.ndarray:
        return self.grid.t

    @property
    def d(self) -> int:
        return self.q.shape[1]

    @property
    def path(self) -> PhasePath:
        return PhasePath(GridFunction(self.grid, self.q), GridFunction(self.grid, self.p, self.p_left))

    def to_csv(self, fh=None) -> str:
        """Write ``t,kind,q1..qd,p1..pd,newton_iters,residual``; returns the text."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        d = self.d
        w.writerow(["t", "kind"] + [f"q{i + 1}" for i in range(d)] + [f"p{i + 1}" for i in range(d)]
                   + ["newton_iters", "residual"])
        for i in range(len(self.t)):
            w.writerow(
                [repr(float(self.t[i])), self.kind[i]]
                + [repr(float(x)) for x in self.q[i]]
                + [repr(float(x)) for x in self.p[i]]
                + [int(self.newton_iters[i]), repr(float(self.residual[i]))]
            )
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text


def _row(x, d: int) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (d,):
        raise ValueError(f"expected a vector of length {d}, got shape {x.shape}")
    return x


def _implicit_p(H: Hamiltonian, q, p_prev, mu, rhs, cfg: SolverConfig, index: int, t: float):
    """Solve ``p + mu H_q(q, p) = rhs`` for ``p``; returns (p, iterations, residual)."""
    d = len(p_prev)
    p = p_prev.copy()
    scale = lambda x: cfg.newton_tol * max(1.0, float(np.max(np.abs(x))))
    F = p + mu * H.grad_q(q, p) - rhs
    res = float(np.max(np.abs(F)))
    if res <= 0.1 * scale(p):
        return p, 0, res
    for it in range(1, cfg.newton_max_iter + 1):
        J = np.eye(d) + mu * H.dgrad_q_dp(q, p)
        try:
            step = np.linalg.solve(J, F)
        except np.linalg.LinAlgError:
            return _damped_fixed_point(H, q, p, mu, rhs, cfg, index, t)
        p = p - step
        F = p + mu * H.grad_q(q, p) - rhs
        res = float(np.max(np.abs(F)))
        if not np.all(np.isfinite(p)):
            break
        if float(np.max(np.abs(step))) <= scale(p) or res == 0.0:
            return p, it, res
    raise NewtonError(index, t, res)


def _damped_fixed_point(H, q, p, mu, rhs, cfg, index, t, omega: float = 0.5):
    res = np.inf
    for it in range(1, 20 * cfg.newton_max_iter + 1):
        new = rhs - mu * H.grad_q(q, p)
        step = omega * (new - p)
        p = p + step
        res = float(np.max(np.abs(p + mu * H.grad_q(q, p) - rhs)))
        if float(np.max(np.abs(step))) <= cfg.newton_tol * max(1.0, float(np.max(np.abs(p)))):
            return p, it, res
    raise NewtonError(index, t, res)


def _rk4_step(H: Hamiltonian, q, p, h):
    def f(q, p):
        return H.grad_p(q, p), -H.grad_q(q, p)

    k1q, k1p = f(q, p)
    k2q, k2p = f(q + 0.5 * h * k1q, p + 0.5 * h * k1p)
    k3q, k3p = f(q + 0.5 * h * k2q, p + 0.5 * h * k2p)
    k4q, k4p = f(q + h * k3q, p + h * k3p)
    return (
        q + h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q),
        p + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p),
    )


def _kinds(g: Grid) -> list:
    kinds = []
    for i in range(len(g)):
        if g.junction_mask[i]:
            kinds.append(KIND_JUNCTION)
        elif g.left_scattered[i] or (i == 0 and g.right_scattered[0]):
            kinds.append(KIND_SCATTERED)
        else:
            kinds.append(KIND_DENSE)
    return kinds


def initial_constants(H: Hamiltonian, T, q0, p0) -> tuple[np.ndarray, np.ndarray]:
    """``(C_q, C_p)`` of the integral form matching initial data ``(q0, p0)``.

    ``C_q = q(a)`` and ``C_p = p(a) + mu(a) H_q(q(a), p(a))``.
    """
    T = as_timescale(T)
    q0 = _row(q0, H.d)
    p0 = _row(p0, H.d)
    return q0.copy(), p0 + T.mu(T.a) * H.grad_q(q0, p0)


def solve_derivative_form(H: Hamiltonian, T, q0, p0, cfg: SolverConfig | None = None) -> Trajectory:
    """Step the derivative-form equations from ``(q(a), p(a)) = (q0, p0)``."""
    cfg = cfg or SolverConfig()
    T = as_timescale(T)
    g = T.grid
    d = H.d
    n = len(g)
    q = np.zeros((n, d))
    p = np.zeros((n, d))
    q[0] = _row(q0, d)
    p[0] = _row(p0, d)
    p_left = p.copy()
    iters = np.zeros(n, dtype=int)
    resid = np.zeros(n)
    mu = g.mu
    junctions = []
    for i in range(n - 1):
        if not g.right_scattered[i]:
            h = g.t[i + 1] - g.t[i]
            q[i + 1], p[i + 1] = _rk4_step(H, q[i], p[i], h)
        else:
            q[i + 1] = q[i] + mu[i] * H.grad_p(q[i], p[i])
            p[i + 1] = p[i]
        p_left[i + 1] = p[i + 1]
        j = i + 1
        if g.junction_mask[j]:
            junctions.append(float(g.t[j]))
        step = mu[j] if g.right_scattered[j] else g.nu[j] if j == n - 1 and g.left_scattered[j] else 0.0
        if step > 0:
            pj, it, r = _implicit_p(H, q[j], p[j], step, p[j], cfg, j, float(g.t[j]))
            p[j], iters[j], resid[j] = pj, it, r
    C_q, C_p = initial_constants(H, T, q[0], p[0])
    # p(a) itself need not satisfy anything; left limits only matter at RS&LD points
    p_left[~g.rs_ld_mask] = p[~g.rs_ld_mask]
    return Trajectory(g, q, p, p_left, _kinds(g), iters, resid, C_q, C_p, junctions)


def _path_eval(fn, q, p, p_left, rs_ld):
    vals = np.asarray(fn(q, p), dtype=float)
    left = vals.copy()
    if rs_ld.any():
        left[rs_ld] = fn(q[rs_ld], p_left[rs_ld])
    return vals, left


def _integral_update(H: Hamiltonian, g: Grid, q, p, p_left, C_q, C_p):
    rs_ld = g.rs_ld_mask
    hp, hp_l = _path_eval(H.grad_p, q, p, p_left, rs_ld)
    hq, hq_l = _path_eval(H.grad_q, q, p, p_left, rs_ld)
    Up = antiderivative(GridFunction(g, hp, hp_l)).values
    Uq = antiderivative(GridFunction(g, hq, hq_l)).values
    q_new = C_q + Up
    p_left_new = C_p - Uq
    p_new = p_left_new - g.mu[:, None] * hq
    if g.left_scattered[-1]:
        p_new[-1] = p_new[-2] - g.nu[-1] * hq[-1]
    p_left_new[~rs_ld] = p_new[~rs_ld]
    return q_new, p_new, p_left_new


def solve_integral_form(
    H: Hamiltonian, T, C_q, C_p, cfg: SolverConfig | None = None, initial: Trajectory | None = None
) -> Trajectory:
    """Picard iteration on the integral form, with ``q(a) = C_q`` pinned.

    Sweeps start from the derivative-form trajectory with the same constants
    (or from ``initial``) and stop once successive sweeps differ by at most
    ``newton_tol`` in the max norm.
    """
    cfg = cfg or SolverConfig()
    T = as_timescale(T)
    g = T.grid
    d = H.d
    C_q = _row(C_q, d)
    C_p = _row(C_p, d)
    if initial is None:
        p0, _, _ = _implicit_p(H, C_q, C_p, T.mu(T.a), C_p, cfg, 0, T.a)
        initial = solve_derivative_form(H, T, C_q, p0, cfg)
    q, p, pl = initial.q.copy(), initial.p.copy(), initial.p_left.copy()
    diff = np.inf
    for sweep in range(1, cfg.max_sweeps + 1):
        qn, pn, pln = _integral_update(H, g, q, p, pl, C_q, C_p)
        if not (np.all(np.isfinite(qn)) and np.all(np.isfinite(pn))):
            raise PicardError(f"Picard iteration diverged at sweep {sweep}")
        diff = max(np.max(np.abs(qn - q)), np.max(np.abs(pn - p)), np.max(np.abs(pln - pl)))
        q, p, pl = qn, pn, pln
        if diff <= cfg.newton_tol:
            break
    else:
        raise PicardError(f"Picard iteration did not converge in {cfg.max_sweeps} sweeps (last change {diff:.3e})")
    traj = Trajectory(
        g, q, p, pl, _kinds(g), np.zeros(len(g), dtype=int), np.zeros(len(g)), C_q, C_p,
        [float(x) for x in g.t[g.junction_mask]], sweep,
    )
    traj.residual = _star2_pointwise(H, traj)
    return traj


def residual_star1(H: Hamiltonian, traj: Trajectory, order: int = DEFAULT_ORDER) -> float:
    """Max pointwise defect of the derivative form over the interior domain,
    junction points excluded."""
    g = traj.grid
    path = traj.path
    kk = g.timescale.restricted_domains().kk.mask(g) & ~g.junction_mask
    qd = delta_derivative_all(path.q, order).values
    pr = rho_nabla(path.p, order).values
    r1 = np.abs(qd - H.grad_p(traj.q, traj.p)).max(axis=1)
    r2 = np.abs(pr + H.grad_q(traj.q, traj.p)).max(axis=1)
    if not kk.any():
        return 0.0
    return float(max(r1[kk].max(), r2[kk].max()))


def _star2_pointwise(H: Hamiltonian, traj: Trajectory) -> np.ndarray:
    g = traj.grid
    rs_ld = g.rs_ld_mask
    hp, hp_l = _path_eval(H.grad_p, traj.q, traj.p, traj.p_left, rs_ld)
    hq, hq_l = _path_eval(H.grad_q, traj.q, traj.p, traj.p_left, rs_ld)
    Up = antiderivative(GridFunction(g, hp, hp_l)).values
    Uq = antiderivative(GridFunction(g, hq, hq_l)).values
    n = len(g)
    sig = np.where(g.right_scattered, np.minimum(np.arange(n) + 1, n - 1), np.arange(n))
    r_q = np.abs(traj.q[sig] - traj.C_q - Up[sig]).max(axis=1)
    r_p = np.abs(traj.p - traj.C_p + Uq[sig]).max(axis=1)
    out = np.maximum(r_q, r_p)
    upper = g.timescale.restricted_domains().upper.mask(g)
    out[~upper] = 0.0
    return out


def residual_star2(H: Hamiltonian, traj: Trajectory) -> float:
    """Max pointwise defect of the integral form over ``T^kappa``."""
    return float(_star2_pointwise(H, traj).max())


def energy_series(H: Hamiltonian, traj: Trajectory) -> list:
    e = H.value(traj.q, traj.p)
    return [(float(t), float(v)) for t, v in zip(traj.t, e)]


# --- embeddings ------------------------------------------------------------


def _field_rows(f: Callable, t, x) -> np.ndarray:
    return np.asarray(f(t, x), dtype=float).reshape(np.shape(x))


@dataclass(frozen=True)
class DynamicEquation:
    """``x^Delta(t) = f(t, x(t))`` on ``T``."""

    f: Callable
    T: TimeScale

    def solve(self, x0) -> GridFunction:
        g = self.T.grid
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        x = np.zeros((len(g), len(x0)))
        x[0] = x0
        t = g.t
        for i in range(len(g) - 1):
            if g.right_scattered[i]:
                x[i + 1] = x[i] + g.mu[i] * _field_rows(self.f, t[i], x[i])
                continue
            h = t[i + 1] - t[i]
            k1 = _field_rows(self.f, t[i], x[i])
            k2 = _field_rows(self.f, t[i] + 0.5 * h, x[i] + 0.5 * h * k1)
            k3 = _field_rows(self.f, t[i] + 0.5 * h, x[i] + 0.5 * h * k2)
            k4 = _field_rows(self.f, t[i] + h, x[i] + h * k3)
            x[i + 1] = x[i] + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        return GridFunction(g, x)

    def residual(self, x: GridFunction, order: int = DEFAULT_ORDER) -> float:
        g = x.grid
        dom = g.timescale.restricted_domains().upper.mask(g)
        xd = delta_derivative_all(x, order).values
        fx = np.stack([_field_rows(self.f, t, row) for t, row in zip(g.t, x.values)])
        return float(np.abs(xd - fx)[dom].max())


def embed_ode(f: Callable, T) -> DynamicEquation:
    """Replace ``x' = f(t, x)`` by ``x^Delta = f(t, x)`` on ``T``."""
    return DynamicEquation(f, as_timescale(T))


@dataclass(frozen=True)
class IntegralEquation:
    """``x(t) = x_a + int_a^{sigma t} f(s, x(s)) Delta s`` on ``T``.

    ``x_a`` is the constant of the equation; ``x(a)`` differs from it by
    ``mu(a) f(a, x(a))`` when ``a`` is right-scattered.
    """

    f: Callable
    T: TimeScale

    def _update(self, x: GridFunction, x_a: np.ndarray) -> GridFunction:
        g = x.grid
        fv = np.stack([_field_rows(self.f, t, row) for t, row in zip(g.t, x.values)])
        fl = fv.copy()
        rs_ld = g.rs_ld_mask
        for i in np.nonzero(rs_ld)[0]:
            fl[i] = _field_rows(self.f, g.t[i], x.left[i])
        U = antiderivative(GridFunction(g, fv, fl)).values
        left = x_a + U
        vals = left + g.mu[:, None] * fv
        left[~rs_ld] = vals[~rs_ld]
        return GridFunction(g, vals, left)

    def solve(self, x_a, tol: float = 1e-12, max_sweeps: int = 200) -> GridFunction:
        g = self.T.grid
        x_a = np.atleast_1d(np.asarray(x_a, dtype=float))
        x = GridFunction(g, np.tile(x_a, (len(g), 1)))
        for _ in range(max_sweeps):
            new = self._update(x, x_a)
            diff = max(np.max(np.abs(new.values - x.values)), np.max(np.abs(new.left - x.left)))
            x = new
            if diff <= tol:
                return x
        raise PicardError(f"integral equation did not converge in {max_sweeps} sweeps")

    def residual(self, x: GridFunction, x_a) -> float:
        x_a = np.atleast_1d(np.asarray(x_a, dtype=float))
        g = x.grid
        dom = g.timescale.restricted_domains().upper.mask(g)
        new = self._update(x, x_a)
        return float(np.abs(new.values - x.values)[dom].max())


def embed_integral_equation(f: Callable, T) -> IntegralEquation:
    """Replace ``x(t) = x_a + int_a^t f`` by its Delta-integral form on ``T``."""
    return IntegralEquation(f, as_timescale(T))


def embed_functional(L: Callable, T, order: int = DEFAULT_ORDER) -> Callable:
    """``x -> int_a^{sigma(upper)} L(s, x(s), x^Delta(s)) Delta s``.

    ``L`` is row-vectorised: ``L(t[N], x[N, n], v[N, n]) -> [N]``. ``upper``
    defaults to ``rho(b)``, so the integral runs over the whole scale.
    """
    T = as_timescale(T)

    def functional(x: GridFunction, upper: float | None = None) -> float:
        g = x.grid
        xd = delta_derivative_all(x, order)
        vals = np.asarray(L(g.t, x.values, xd.values), dtype=float)
        left = vals
        if g.rs_ld_mask.any():
            left = np.asarray(L(g.t, x.left, xd.left), dtype=float)
        top = T.rho(T.b) if upper is None else float(upper)
        return float(delta_integral(GridFunction(g, vals, left), T.a, T.sigma(top))[0])

    return functional
