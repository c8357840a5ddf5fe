"""Delta/nabla differentiation and Delta-integration of grid functions.

Grid functions are rd-continuous: they are continuous at right-dense points
but may jump at a right-scattered point ``r`` closing a dense segment. Such
points keep a separate left limit, which is what the dense numerics (finite
differences, Simpson quadrature) see at the end of the segment.

At right-scattered points every derivative is the exact difference quotient
built from the structural graininess; on dense segments derivatives use
finite-difference stencils and integrals use composite Simpson.
"""
from __future__ import annotations

import math
from functools import lru_cache
from typing import Callable

import numpy as np

from .timescale import Grid, TimeScale, TimeScaleDomainError, restricted_domains

__all__ = [
    "JunctionError",
    "GridFunction",
    "Antiderivative",
    "delta_derivative",
    "nabla_derivative",
    "delta_derivative_all",
    "nabla_derivative_all",
    "delta_integral",
    "antiderivative",
    "compose_sigma",
    "compose_rho",
    "delta_of_compose_rho",
    "rho_delta",
    "sigma_nabla",
    "rho_nabla",
    "inverse_identity_residual",
    "composition_identity_residual",
    "identity_residuals",
    "ibp_residual_i",
    "ibp_residual_ii",
    "strong_dubois_reymond_witness",
    "weak_dubois_reymond_witness",
]

DEFAULT_ORDER = 4


class JunctionError(ValueError):
    """An operation needs a jump-operator derivative that fails to exist."""


def _as_grid(obj) -> Grid:
    if isinstance(obj, Grid):
        return obj
    if isinstance(obj, TimeScale):
        return obj.grid
    raise TypeError(f"expected a TimeScale or Grid, got {type(obj).__name__}")


class GridFunction:
    """Values of an ``R^n``-valued function on the grid of a time scale.

    Parameters
    ----------
    grid : Grid or TimeScale
    values : array_like, shape (N,) or (N, n)
    left : array_like, optional
        Left limits, same shape as ``values``. Only entries at right-scattered
        ends of dense segments may differ from ``values``.
    flags : array_like of bool, optional
        Quality flags; a set flag marks a value the caller should not trust
        (junction points of the time scale).
    """

    __array_priority__ = 100

    def __init__(self, grid, values, left=None, flags=None):
        self.grid = _as_grid(grid)
        v = np.asarray(values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] != len(self.grid) or v.shape[1] < 1:
            raise ValueError(f"values of shape {v.shape} do not fit a grid of {len(self.grid)} points")
        self.values = v
        if left is None:
            self.left = v
        else:
            lv = np.asarray(left, dtype=float).reshape(v.shape)
            self.left = lv
        self.flags = np.zeros(len(self.grid), dtype=bool) if flags is None else np.asarray(flags, dtype=bool)

    @classmethod
    def sample(cls, ts, fn: Callable, dim: int | None = None) -> "GridFunction":
        """Evaluate a vectorised ``fn(t)`` on the grid."""
        grid = _as_grid(ts)
        v = np.asarray(fn(grid.t), dtype=float)
        if v.ndim == 0:
            v = np.full(len(grid), float(v))
        if v.ndim == 2 and v.shape[0] != len(grid) and v.shape[1] == len(grid):
            v = v.T
        if dim is not None:
            v = v.reshape(len(grid), dim)
        return cls(grid, v)

    @classmethod
    def constant(cls, ts, value) -> "GridFunction":
        grid = _as_grid(ts)
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(grid, np.tile(value, (len(grid), 1)))

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def t(self) -> np.ndarray:
        return self.grid.t

    def __len__(self) -> int:
        return len(self.grid)

    def __repr__(self) -> str:
        return f"GridFunction(n={self.dim}, points={len(self.grid)})"

    def at(self, t: float) -> np.ndarray:
        return self.values[self.grid.index(t)]

    def has_jumps(self) -> bool:
        return self.left is not self.values and not np.array_equal(self.left, self.values, equal_nan=True)

    def component(self, k) -> "GridFunction":
        k = np.atleast_1d(np.arange(self.dim)[k])
        return GridFunction(self.grid, self.values[:, k], self.left[:, k], self.flags)

    def _check(self, other: "GridFunction"):
        if other.grid is not self.grid and not np.array_equal(other.grid.t, self.grid.t):
            raise ValueError("grid functions live on different grids")

    def _binary(self, other, op):
        if isinstance(other, GridFunction):
            self._check(other)
            return GridFunction(
                self.grid, op(self.values, other.values), op(self.left, other.left), self.flags | other.flags
            )
        other = np.asarray(other, dtype=float)
        return GridFunction(self.grid, op(self.values, other), op(self.left, other), self.flags)

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return self._binary(other, lambda x, y: y - x)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._binary(other, np.divide)

    def __neg__(self):
        return GridFunction(self.grid, -self.values, -self.left, self.flags)

    def dot(self, other: "GridFunction") -> "GridFunction":
        """Pointwise Euclidean inner product, a scalar grid function."""
        self._check(other)
        if self.dim != other.dim:
            raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")
        return GridFunction(
            self.grid,
            np.einsum("ij,ij->i", self.values, other.values),
            np.einsum("ij,ij->i", self.left, other.left),
            self.flags | other.flags,
        )

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "GridFunction":
        """Apply a row-vectorised map to values and left limits."""
        v = np.asarray(fn(self.values), dtype=float)
        lv = v if self.left is self.values else np.asarray(fn(self.left), dtype=float)
        return GridFunction(self.grid, v, lv, self.flags)

    def concat(self, other: "GridFunction") -> "GridFunction":
        self._check(other)
        return GridFunction(
            self.grid,
            np.hstack([self.values, other.values]),
            np.hstack([self.left, other.left]),
            self.flags | other.flags,
        )

    def dense_view(self, seg) -> np.ndarray:
        """Values on a dense segment with the left limit at its right end."""
        start, stop, _ = seg
        y = self.values[start:stop].copy()
        y[-1] = self.left[stop - 1]
        return y


class Antiderivative(GridFunction):
    """Delta-antiderivative ``U(t) = int_a^t u`` normalised by ``U(a) = 0``."""

    def __init__(self, grid, values, integrand: GridFunction):
        super().__init__(grid, values)
        self.integrand = integrand
        self.base_point = self.grid.t[0]


@lru_cache(maxsize=None)
def _stencil(offsets: tuple[int, ...]) -> np.ndarray:
    """First-derivative weights (unit spacing) for the given integer offsets."""
    k = len(offsets)
    A = np.vander(np.asarray(offsets, dtype=float), k, increasing=True).T
    rhs = np.zeros(k)
    rhs[1] = 1.0
    return np.linalg.solve(A, rhs)


def _stencil_offsets(j: int, m: int, order: int) -> tuple[int, ...]:
    half = order // 2
    lo = min(max(j - half, 0), m - order)
    return tuple(range(lo - j, lo - j + order + 1))


def _segment_derivative(y: np.ndarray, h: float, order: int) -> np.ndarray:
    m = len(y) - 1
    out = np.empty_like(y)
    half = order // 2
    centre = _stencil(tuple(range(-half, half + 1)))
    # weights are applied to differences y[j + o] - y[j], so constants
    # differentiate to exactly zero
    if m >= order:
        inner = slice(half, m - half + 1)
        base = y[inner]
        acc = np.zeros_like(base)
        for w, off in zip(centre, range(-half, half + 1)):
            if off:
                acc += w * (y[half + off : m - half + 1 + off] - base)
        out[inner] = acc
    for j in list(range(half)) + list(range(m - half + 1, m + 1)):
        offs = _stencil_offsets(j, m, order)
        w = _stencil(offs)
        out[j] = w @ (y[[j + o for o in offs]] - y[j])
    return out / h


def _dense_derivative(f: GridFunction, order: int) -> np.ndarray:
    """Classical derivative on every dense segment (NaN elsewhere)."""
    if order not in (2, 4):
        raise ValueError("finite-difference order must be 2 or 4")
    out = np.full(f.values.shape, np.nan)
    for seg in f.grid.dense:
        start, stop, h = seg
        out[start:stop] = _segment_derivative(f.dense_view(seg), h, order)
    return out


def delta_derivative_all(f: GridFunction, order: int = DEFAULT_ORDER) -> GridFunction:
    """``f^Delta`` on ``T^kappa``; NaN outside it, junction points flagged.

    Right-scattered points get the exact quotient ``(f(sigma t) - f(t)) / mu``.
    At a right-scattered end ``r`` of a dense segment the left limit of the
    result is the one-sided classical derivative of the dense branch.
    """
    g = f.grid
    dense = _dense_derivative(f, order)
    rs = g.right_scattered
    vals = dense.copy()
    idx = np.nonzero(rs)[0]
    vals[idx] = (f.values[idx + 1] - f.values[idx]) / g.mu[idx][:, None]
    if g.left_scattered[-1]:
        vals[-1] = np.nan
    left = vals.copy()
    left[g.rs_ld_mask] = dense[g.rs_ld_mask]
    return GridFunction(g, vals, left, g.junction_mask.copy())


def nabla_derivative_all(f: GridFunction, order: int = DEFAULT_ORDER) -> GridFunction:
    """``f^nabla`` on ``T_kappa``; NaN outside it, junction points flagged."""
    g = f.grid
    dense = _dense_derivative(f, order)
    ls = g.left_scattered
    vals = dense.copy()
    idx = np.nonzero(ls)[0]
    vals[idx] = (f.values[idx] - f.values[idx - 1]) / g.nu[idx][:, None]
    if g.right_scattered[0]:
        vals[0] = np.nan
    return GridFunction(g, vals, None, g.junction_mask.copy())


def _require(mask_subset, grid: Grid, t: float, name: str) -> int:
    if t not in mask_subset:
        raise TimeScaleDomainError(f"t={t!r} is outside the domain of the {name}")
    return grid.index(t)


def delta_derivative(f: GridFunction, t: float, order: int = DEFAULT_ORDER) -> np.ndarray:
    i = _require(restricted_domains(f.grid.timescale).upper, f.grid, t, "Delta-derivative")
    return delta_derivative_all(f, order).values[i]


def nabla_derivative(f: GridFunction, t: float, order: int = DEFAULT_ORDER) -> np.ndarray:
    i = _require(restricted_domains(f.grid.timescale).lower, f.grid, t, "nabla-derivative")
    return nabla_derivative_all(f, order).values[i]


def compose_sigma(f: GridFunction) -> GridFunction:
    """``f o sigma``; its left limit at a jump point is the left limit of ``f``."""
    g = f.grid
    idx = np.nonzero(g.right_scattered)[0]
    vals = f.values.copy()
    vals[idx] = f.values[idx + 1]
    left = vals.copy()
    left[g.rs_ld_mask] = f.left[g.rs_ld_mask]
    return GridFunction(g, vals, left, f.flags)


def compose_rho(f: GridFunction) -> GridFunction:
    g = f.grid
    idx = np.nonzero(g.left_scattered)[0]
    vals = f.values.copy()
    vals[idx] = f.values[idx - 1]
    left = vals.copy()
    rsld = np.nonzero(g.rs_ld_mask)[0]
    left[rsld] = f.left[rsld]
    return GridFunction(g, vals, left, f.flags)


def delta_of_compose_rho(f: GridFunction, order: int = DEFAULT_ORDER) -> GridFunction:
    """``(f o rho)^Delta``.

    ``f o rho`` jumps at the left-scattered start ``l`` of a dense stretch, where
    its right limit is ``f(l)``; dense stencils difference that branch, while
    scattered points use the exact quotient of the true composition.
    """
    g = f.grid
    fr = compose_rho(f)
    branch = fr.values.copy()
    branch[g.ls_rd_mask] = f.values[g.ls_rd_mask]
    out = delta_derivative_all(GridFunction(g, branch, fr.left), order)
    vals = out.values.copy()
    idx = np.nonzero(g.right_scattered)[0]
    vals[idx] = (fr.values[idx + 1] - fr.values[idx]) / g.mu[idx][:, None]
    vals[g.ls_rd_mask] = np.nan
    return GridFunction(g, vals, out.left, out.flags)


def rho_delta(ts, order: int = DEFAULT_ORDER) -> GridFunction:
    """``rho^Delta``: exact quotient at right-scattered points, finite
    differences of ``rho`` on dense stretches, NaN where it does not exist."""
    g = _as_grid(ts)
    # on a dense segment rho(s) = s except at a left-scattered start, where the
    # finite differences must see the right branch
    branch = np.where(g.ls_rd_mask, g.t, g.rho)
    out = delta_derivative_all(GridFunction(g, branch), order)
    vals, left = out.values.copy(), out.left.copy()
    idx = np.nonzero(g.right_scattered)[0]
    vals[idx, 0] = (g.rho[idx + 1] - g.rho[idx]) / g.mu[idx]
    vals[g.ls_rd_mask] = np.nan
    left[g.ls_rd_mask] = np.nan
    return GridFunction(g, vals, left, out.flags)


def sigma_nabla(ts, order: int = DEFAULT_ORDER) -> GridFunction:
    g = _as_grid(ts)
    # sigma is the identity on the dense branch to the left of a jump point
    s = GridFunction(g, g.sigma, g.t)
    out = nabla_derivative_all(s, order)
    vals = out.values.copy()
    vals[g.rs_ld_mask] = np.nan
    return GridFunction(g, vals, None, out.flags)


def rho_nabla(f: GridFunction, order: int = DEFAULT_ORDER) -> GridFunction:
    """The product ``rho^Delta * f^nabla`` as a single operator.

    At right-scattered points it equals ``(f(t) - f(rho t)) / mu(t)``, which
    is defined even where one factor alone is not (the minimum ``a`` and
    dense-to-scattered junctions, where ``rho^Delta = 0``). NaN at
    scattered-to-dense junctions and at a left-scattered maximum ``b``.
    """
    g = f.grid
    rd = rho_delta(g, order)
    nb = nabla_derivative_all(f, order)
    dense = _dense_derivative(f, order)
    vals = rd.values * nb.values
    left = rd.left * dense
    idx = np.nonzero(g.right_scattered)[0]
    vals[idx] = (f.values[idx] - compose_rho(f).values[idx]) / g.mu[idx][:, None]
    plain = ~g.rs_ld_mask
    left[plain] = vals[plain]
    vals[g.ls_rd_mask] = np.nan
    left[g.ls_rd_mask] = np.nan
    if g.left_scattered[-1]:
        vals[-1] = left[-1] = np.nan
    return GridFunction(g, vals, left, g.junction_mask.copy())


def _dense_piece(y: np.ndarray, j0: int, j1: int, h: float) -> np.ndarray:
    """Composite Simpson over local indices ``j0..j1`` of a dense view."""
    k = j1 - j0
    if k <= 0:
        return np.zeros(y.shape[1])
    total = np.zeros(y.shape[1])
    even = k - (k % 2)
    if even:
        seg = y[j0 : j0 + even + 1]
        total += h / 3.0 * (seg[0] + seg[-1] + 4.0 * seg[1:-1:2].sum(axis=0) + 2.0 * seg[2:-1:2].sum(axis=0))
    if k % 2:
        total += _single_interval(y, j1 - 1, h)
    return total


def _single_interval(y: np.ndarray, j: int, h: float) -> np.ndarray:
    """Integral over ``[x_j, x_{j+1}]`` from the quadratic through 3 nodes."""
    if j >= 1:
        return h / 12.0 * (-y[j - 1] + 8.0 * y[j] + 5.0 * y[j + 1])
    return h / 12.0 * (5.0 * y[j] + 8.0 * y[j + 1] - y[j + 2])


def _pieces(f: GridFunction, i0: int, i1: int) -> list[np.ndarray]:
    g = f.grid
    parts = []
    for seg in g.dense:
        start, stop, h = seg
        lo, hi = max(start, i0), min(stop - 1, i1)
        if hi > lo:
            parts.append(_dense_piece(f.dense_view(seg), lo - start, hi - start, h))
    rs = np.nonzero(g.right_scattered[i0:i1])[0] + i0
    if len(rs):
        parts.extend(g.mu[rs][:, None] * f.values[rs])
    return parts


def delta_integral(f: GridFunction, c: float, d: float) -> np.ndarray:
    """``int_c^d f(t) Delta t`` for grid points ``c, d`` (oriented).

    Scattered points contribute ``mu(t) f(t)`` exactly; dense stretches are
    integrated with composite Simpson on the sampling grid.
    """
    g = f.grid
    i0, i1 = g.index(c), g.index(d)
    if i0 > i1:
        return -delta_integral(f, d, c)
    parts = _pieces(f, i0, i1)
    if not parts:
        return np.zeros(f.dim)
    stack = np.vstack(parts)
    if np.isnan(stack).any():
        raise JunctionError(f"integrand undefined somewhere in [{c}, {d}) (junction point)")
    return np.array([math.fsum(col) for col in stack.T])


def antiderivative(f: GridFunction) -> Antiderivative:
    """``U(t) = int_a^t f Delta tau`` at every grid point, ``U(a) = 0``."""
    g = f.grid
    n, dim = len(g), f.dim
    U = np.zeros((n, dim))
    dense_start = {seg[0]: seg for seg in g.dense}
    total = np.zeros(dim)
    comp = np.zeros(dim)

    def add(x):
        nonlocal total, comp
        # Neumaier compensated running sum
        s = total + x
        big = np.abs(total) >= np.abs(x)
        comp = comp + np.where(big, (total - s) + x, (x - s) + total)
        total = s

    i = 0
    while i < n:
        if i in dense_start:
            start, stop, h = dense_start[i]
            y = f.dense_view(dense_start[i])
            m = stop - start - 1
            local = np.zeros((m + 1, dim))
            pair = h / 3.0 * (y[0:-2:2] + 4.0 * y[1:-1:2] + y[2::2])
            local[2::2] = np.cumsum(pair, axis=0)
            for j in range(1, m + 1, 2):
                local[j] = local[j - 1] + _single_interval(y, j - 1, h)
            base = total + comp
            U[start:stop] = base + local
            add(local[-1])
            i = stop - 1
            if g.right_scattered[i]:
                add(g.mu[i] * f.values[i])
            i += 1
            if i < n:
                U[i] = total + comp
            continue
        U[i] = total + comp
        if g.right_scattered[i]:
            add(g.mu[i] * f.values[i])
        i += 1
    return Antiderivative(g, U, f)


def _kk_index(ts, t: float) -> tuple[Grid, int]:
    T = ts if isinstance(ts, TimeScale) else ts.timescale
    g = T.grid
    if t not in restricted_domains(T).kk:
        raise TimeScaleDomainError(f"t={t!r} is outside T^kappa_kappa")
    i = g.index(t)
    if g.junction_mask[i]:
        raise JunctionError(f"t={t!r} is a junction point; the identity is undefined there")
    return g, i


def inverse_identity_residual(T: TimeScale, t: float, order: int = DEFAULT_ORDER) -> float:
    """``|rho^Delta(t) sigma^nabla(t) - 1|`` at a non-junction ``t`` of ``T^k_k``."""
    g, i = _kk_index(T, t)
    if g.right_scattered[i] and g.left_scattered[i]:
        # both factors are graininess ratios; form the product as one fraction
        num_r = g.rho[i + 1] - g.rho[i]
        num_s = g.sigma[i] - g.sigma[i - 1]
        return abs((num_r * num_s) / (g.mu[i] * g.nu[i]) - 1.0)
    rd = rho_delta(g, order).values[i, 0]
    sn = sigma_nabla(g, order).values[i, 0]
    return abs(rd * sn - 1.0)


def composition_identity_residual(
    f: GridFunction, T: TimeScale | None = None, t: float | None = None, *, dual: bool = False,
    order: int = DEFAULT_ORDER,
) -> float:
    """Residual of ``(f o sigma)^nabla = sigma^nabla f^Delta`` at ``t``.

    With ``dual=True`` checks ``(f o rho)^Delta = rho^Delta f^nabla`` instead.
    """
    T = f.grid.timescale if T is None else T
    g, i = _kk_index(T, t)
    if not dual:
        lhs = nabla_derivative_all(compose_sigma(f), order).values[i]
        rhs = sigma_nabla(g, order).values[i, 0] * delta_derivative_all(f, order).values[i]
    else:
        lhs = delta_of_compose_rho(f, order).values[i]
        rhs = rho_delta(g, order).values[i, 0] * nabla_derivative_all(f, order).values[i]
    return float(np.max(np.abs(lhs - rhs)))


def ibp_residual_i(f: GridFunction, g: GridFunction, c: float, d: float, order: int = DEFAULT_ORDER) -> float:
    """``|int f.g^Delta - ([f.g]_c^d - int f^Delta.(g o sigma))|``."""
    lhs = delta_integral(f.dot(delta_derivative_all(g, order)), c, d)[0]
    ic, id_ = f.grid.index(c), f.grid.index(d)
    bracket = float(f.values[id_] @ g.values[id_] - f.values[ic] @ g.values[ic])
    rhs = bracket - delta_integral(delta_derivative_all(f, order).dot(compose_sigma(g)), c, d)[0]
    return abs(lhs - rhs)


def ibp_residual_ii(f: GridFunction, g: GridFunction, c: float, d: float, order: int = DEFAULT_ORDER) -> float:
    """``|int f.g^Delta - ([(f o rho).g]_c^d - int rho^Delta f^nabla . g)|``."""
    grid = f.grid
    ic, id_ = sorted((grid.index(c), grid.index(d)))
    bad = np.nonzero(grid.ls_rd_mask[ic:id_])[0]
    if len(bad):
        raise JunctionError(
            f"rho is not Delta-differentiable at t={grid.t[ic + bad[0]]!r} inside [{c}, {d})"
        )
    lhs = delta_integral(f.dot(delta_derivative_all(g, order)), c, d)[0]
    fr = compose_rho(f)
    i0, i1 = grid.index(c), grid.index(d)
    bracket = float(fr.values[i1] @ g.values[i1] - fr.values[i0] @ g.values[i0])
    rhs = bracket - delta_integral(rho_nabla(f, order).dot(g), c, d)[0]
    return abs(lhs - rhs)


def strong_dubois_reymond_witness(q: GridFunction) -> GridFunction:
    """A variation ``w`` with ``w(a) = w(b) = 0`` and ``w^Delta = q - mean(q)``.

    Then ``int q.w^Delta = int |q - mean(q)|^2``, which is positive unless
    ``q`` is constant on ``T^kappa``.
    """
    g = q.grid
    T = g.timescale
    mean = delta_integral(q, T.a, T.b) / (T.b - T.a)
    w = antiderivative(q - mean)
    vals = w.values.copy()
    # remove the quadrature residue so that w(b) = 0 holds exactly
    vals[-1] = 0.0
    return GridFunction(g, vals)


def weak_dubois_reymond_witness(q: GridFunction) -> GridFunction:
    """``w(t) = (t - a)^2 (t - b)^2 q(t)``."""
    g = q.grid
    T = g.timescale
    r = ((g.t - T.a) ** 2 * (g.t - T.b) ** 2)[:, None]
    return GridFunction(g, r * q.values, r * q.left, q.flags)


def identity_residuals(T: TimeScale, f: GridFunction | None = None, order: int = DEFAULT_ORDER) -> dict:
    """Vectorised identity residuals at every non-junction point of ``T^k_k``.

    Returns arrays ``t``, ``doubly_scattered`` (bool), ``inverse``
    (``|rho^Delta sigma^nabla - 1|``) and, when ``f`` is given,
    ``composition`` and ``composition_dual``.
    """
    g = T.grid
    mask = restricted_domains(T).kk.mask(g) & ~g.junction_mask
    ds = g.right_scattered & g.left_scattered
    inv = np.abs(rho_delta(g, order).values[:, 0] * sigma_nabla(g, order).values[:, 0] - 1.0)
    idx = np.nonzero(ds & mask)[0]
    num_r = g.rho[idx + 1] - g.rho[idx]
    num_s = g.sigma[idx] - g.sigma[idx - 1]
    inv[idx] = np.abs((num_r * num_s) / (g.mu[idx] * g.nu[idx]) - 1.0)
    out = {"t": g.t[mask], "doubly_scattered": ds[mask], "inverse": inv[mask]}
    if f is not None:
        lhs = nabla_derivative_all(compose_sigma(f), order).values
        rhs = sigma_nabla(g, order).values * delta_derivative_all(f, order).values
        out["composition"] = np.abs(lhs - rhs).max(axis=1)[mask]
        lhs = delta_of_compose_rho(f, order).values
        rhs = rho_delta(g, order).values * nabla_derivative_all(f, order).values
        out["composition_dual"] = np.abs(lhs - rhs).max(axis=1)[mask]
    return out
