"""Helmholtz conditions for first-order fields and Hamiltonian reconstruction.

A field ``X = (X_q, X_p)`` derives from a Hamiltonian exactly when, at every
phase point,

* ``dX_q/dq + (dX_p/dp)^T = 0``,
* ``dX_q/dp`` and ``dX_p/dq`` are symmetric.

These conditions contain no time-scale quantity, so the verdict depends on
the field alone. When they hold, ``H`` is recovered as the line integral of
``p.X_q - q.X_p`` along the ray ``{lambda z}``.
"""
from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import qmc

from .expr import EvaluationError
from .fields import Hamiltonian, VectorField

__all__ = [
    "HAMILTONIAN",
    "NOT_HAMILTONIAN",
    "HelmholtzReport",
    "HelmholtzEvaluationError",
    "NotHamiltonianError",
    "ReconstructedHamiltonian",
    "jacobian_blocks",
    "sample_box",
    "check_conditions",
    "reconstruct",
    "roundtrip_residual",
    "REPORT_SCHEMA",
]

HAMILTONIAN = "hamiltonian"
NOT_HAMILTONIAN = "not_hamiltonian"

ANALYTIC_TOL = 1e-8
FD_TOL = 1e-5
MAX_FAILURE_FRACTION = 0.10


class HelmholtzEvaluationError(RuntimeError):
    pass


class NotHamiltonianError(ValueError):
    pass


REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "HelmholtzReport",
    "type": "object",
    "required": [
        "verdict",
        "trace_violation",
        "asym_qp",
        "asym_pq",
        "tolerance",
        "n_samples",
        "n_failed",
        "worst_point",
    ],
    "properties": {
        "verdict": {"enum": [HAMILTONIAN, NOT_HAMILTONIAN]},
        "trace_violation": {"type": "number", "minimum": 0},
        "asym_qp": {"type": "number", "minimum": 0},
        "asym_pq": {"type": "number", "minimum": 0},
        "tolerance": {"type": "number", "exclusiveMinimum": 0},
        "n_samples": {"type": "integer", "minimum": 1},
        "n_failed": {"type": "integer", "minimum": 0},
        "jacobian": {"enum": ["analytic", "finite-difference"]},
        "sampling": {"type": "string"},
        "worst_point": {
            "type": "object",
            "required": ["coords", "condition", "violation"],
            "properties": {
                "coords": {"type": "array", "items": {"type": "number"}},
                "condition": {"enum": ["trace", "asym_qp", "asym_pq"]},
                "violation": {"type": "number", "minimum": 0},
            },
        },
    },
}


@dataclass
class HelmholtzReport:
    verdict: str
    trace_violation: float
    asym_qp: float
    asym_pq: float
    tolerance: float
    n_samples: int
    n_failed: int
    jacobian: str
    sampling: str
    worst_point: dict = field(default_factory=dict)

    @property
    def is_hamiltonian(self) -> bool:
        return self.verdict == HAMILTONIAN

    @property
    def max_violation(self) -> float:
        return max(self.trace_violation, self.asym_qp, self.asym_pq)

    def to_dict(self) -> dict:
        return asdict(self)

    def summary(self) -> str:
        return (
            f"verdict: {self.verdict}\n"
            f"  trace violation   max|dXq/dq + (dXp/dp)^T| = {self.trace_violation:.3e}\n"
            f"  asymmetry dXq/dp  max|B - B^T|             = {self.asym_qp:.3e}\n"
            f"  asymmetry dXp/dq  max|C - C^T|             = {self.asym_pq:.3e}\n"
            f"  tolerance {self.tolerance:.1e}, {self.n_samples} samples "
            f"({self.n_failed} failed), {self.jacobian} Jacobians"
        )


def jacobian_blocks(X: VectorField, z, analytic: bool | None = None):
    """The four ``d x d`` blocks of ``DX`` at the phase point(s) ``z = (q, p)``."""
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != 2 * X.d:
        raise ValueError(f"phase point has {z.shape[-1]} coordinates, expected {2 * X.d}")
    blocks = X.jacobian_blocks(z[..., : X.d], z[..., X.d :], analytic=analytic)
    for b in blocks:
        if not np.all(np.isfinite(b)):
            raise HelmholtzEvaluationError(f"non-finite Jacobian of {X!r} at {z.tolist()}")
    return blocks


def _box_bounds(box, dim: int) -> tuple[np.ndarray, np.ndarray]:
    if box is None:
        box = (-1.0, 1.0)
    arr = np.asarray(box, dtype=float)
    if arr.shape == (2,):
        return np.full(dim, arr[0]), np.full(dim, arr[1])
    if arr.shape == (dim, 2):
        return arr[:, 0].copy(), arr[:, 1].copy()
    raise ValueError(f"box must be (lo, hi) or {dim} (lo, hi) pairs")


def sample_box(box, dim: int, n: int, seed: int = 0) -> np.ndarray:
    """``n`` scrambled Sobol points in the box, reproducible from ``seed``."""
    lo, hi = _box_bounds(box, dim)
    sampler = qmc.Sobol(d=dim, scramble=True, seed=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # non power-of-two sizes
        u = sampler.random(n)
    return qmc.scale(u, lo, hi) if np.any(hi > lo) else np.tile(lo, (n, 1))


def _blocks_with_failures(X: VectorField, pts: np.ndarray, analytic: bool):
    d = X.d
    try:
        with np.errstate(all="ignore"):
            blocks = X.jacobian_blocks(pts[:, :d], pts[:, d:], analytic=analytic)
        blocks = [np.asarray(b, dtype=float) for b in blocks]
        ok = np.all([np.isfinite(b).all(axis=(-2, -1)) for b in blocks], axis=0)
        return blocks, ok
    except (EvaluationError, FloatingPointError, ValueError, ZeroDivisionError):
        pass
    blocks = [np.full((len(pts), d, d), np.nan) for _ in range(4)]
    ok = np.zeros(len(pts), dtype=bool)
    for i, z in enumerate(pts):
        try:
            bs = X.jacobian_blocks(z[:d], z[d:], analytic=analytic)
        except (EvaluationError, FloatingPointError, ValueError, ZeroDivisionError):
            continue
        if all(np.isfinite(b).all() for b in bs):
            for k in range(4):
                blocks[k][i] = bs[k]
            ok[i] = True
    return blocks, ok


def check_conditions(
    X: VectorField,
    box=None,
    n_samples: int = 128,
    tol: float | None = None,
    seed: int = 0,
    analytic: bool | None = None,
) -> HelmholtzReport:
    """Evaluate the three Helmholtz conditions on low-discrepancy samples.

    Samples where the Jacobian cannot be evaluated are skipped and counted;
    more than 10% failures raise :class:`HelmholtzEvaluationError`.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    use_analytic = X.has_analytic_jacobian if analytic is None else analytic
    if tol is None:
        tol = ANALYTIC_TOL if use_analytic else FD_TOL
    pts = sample_box(box, 2 * X.d, n_samples, seed)
    (A, B, C, D), ok = _blocks_with_failures(X, pts, use_analytic)
    n_failed = int((~ok).sum())
    if n_failed > MAX_FAILURE_FRACTION * n_samples:
        raise HelmholtzEvaluationError(
            f"{n_failed} of {n_samples} samples could not be evaluated for {X!r}"
        )
    A, B, C, D = (x[ok] for x in (A, B, C, D))
    good = pts[ok]
    per = np.stack(
        [
            np.abs(A + np.swapaxes(D, -1, -2)).max(axis=(-2, -1)),
            np.abs(B - np.swapaxes(B, -1, -2)).max(axis=(-2, -1)),
            np.abs(C - np.swapaxes(C, -1, -2)).max(axis=(-2, -1)),
        ]
    )
    worst = per.max(axis=1)
    k, i = np.unravel_index(np.argmax(per), per.shape)
    names = ("trace", "asym_qp", "asym_pq")
    verdict = HAMILTONIAN if worst.max() <= tol else NOT_HAMILTONIAN
    lo, hi = _box_bounds(box, 2 * X.d)
    return HelmholtzReport(
        verdict=verdict,
        trace_violation=float(worst[0]),
        asym_qp=float(worst[1]),
        asym_pq=float(worst[2]),
        tolerance=float(tol),
        n_samples=int(n_samples),
        n_failed=n_failed,
        jacobian="analytic" if use_analytic else "finite-difference",
        sampling=f"scrambled Sobol, seed {seed}, box lo={lo.tolist()} hi={hi.tolist()}",
        worst_point={
            "coords": [float(x) for x in good[i]],
            "condition": names[k],
            "violation": float(per[k, i]),
        },
    )


class ReconstructedHamiltonian(Hamiltonian):
    """``H(q, p) = int_0^1 [p.X_q(lq, lp) - q.X_p(lq, lp)] dl`` by Gauss-Legendre.

    Gradients differentiate the integrand and reuse the same nodes.
    """

    def __init__(self, X: VectorField, n_nodes: int = 32):
        x, w = np.polynomial.legendre.leggauss(n_nodes)
        self.source = X
        self.n_nodes = n_nodes
        self.nodes = 0.5 * (x + 1.0)
        self.weights = 0.5 * w
        super().__init__(X.d, self._h, self._grad_q, self._grad_p, None, name=f"H[{X.name or 'X'}]")

    def _rays(self, q, p):
        lam = self.nodes.reshape((-1,) + (1,) * q.ndim)
        return lam, lam * q, lam * p

    def _h(self, q, p):
        lam, lq, lp = self._rays(q, p)
        integrand = np.sum(p * self.source.xq(lq, lp), axis=-1) - np.sum(q * self.source.xp(lq, lp), axis=-1)
        return np.tensordot(self.weights, integrand, axes=1)

    def _grad_q(self, q, p):
        lam, lq, lp = self._rays(q, p)
        A, _, C, _ = self.source.jacobian_blocks(lq, lp)
        # d/dq_j: lambda (A^T p)_j - X_p,j - lambda (C^T q)_j
        integrand = lam * np.einsum("...ij,...i->...j", A, p) - self.source.xp(lq, lp) - lam * np.einsum(
            "...ij,...i->...j", C, q
        )
        return np.tensordot(self.weights, integrand, axes=1)

    def _grad_p(self, q, p):
        lam, lq, lp = self._rays(q, p)
        _, B, _, D = self.source.jacobian_blocks(lq, lp)
        integrand = self.source.xq(lq, lp) + lam * np.einsum("...ij,...i->...j", B, p) - lam * np.einsum(
            "...ij,...i->...j", D, q
        )
        return np.tensordot(self.weights, integrand, axes=1)


def reconstruct(
    X: VectorField,
    n_nodes: int = 32,
    *,
    box=None,
    check: bool = True,
    tol: float | None = None,
    seed: int = 0,
) -> ReconstructedHamiltonian:
    """Hamiltonian of ``X`` from the lambda-integral.

    With ``check=True`` the Helmholtz conditions are verified on ``box`` first
    and a non-Hamiltonian field raises :class:`NotHamiltonianError`; pass
    ``check=False`` to build the (meaningless) integral anyway for diagnostics.
    The field must be finite on every ray ``{lambda z}`` from the sampled box;
    this is validated and a singular ray raises rather than being regularised.
    """
    if n_nodes < 1:
        raise ValueError("n_nodes must be positive")
    if check:
        rep = check_conditions(X, box, tol=tol, seed=seed)
        if not rep.is_hamiltonian:
            raise NotHamiltonianError(
                f"{X!r} fails the Helmholtz conditions (max violation {rep.max_violation:.3e})"
            )
    H = ReconstructedHamiltonian(X, n_nodes)
    pts = sample_box(box, 2 * X.d, 128, seed)
    lam = H.nodes[:, None, None]
    try:
        with np.errstate(divide="raise", invalid="raise", over="raise", under="ignore"):
            vals = X(lam * pts[None])
    except (EvaluationError, FloatingPointError, ZeroDivisionError) as exc:
        raise HelmholtzEvaluationError(f"{X!r} is not evaluable on the rays of the box: {exc}") from None
    if not np.all(np.isfinite(vals)):
        raise HelmholtzEvaluationError(f"{X!r} is not finite on the rays of the box")
    return H


def roundtrip_residual(X: VectorField, H: Hamiltonian, box=None, n_samples: int = 128, seed: int = 0) -> float:
    """``max ||grad_p H - X_q||_inf + ||grad_q H + X_p||_inf`` over samples."""
    pts = sample_box(box, 2 * X.d, n_samples, seed)
    q, p = pts[:, : X.d], pts[:, X.d :]
    r1 = np.abs(H.grad_p(q, p) - X.xq(q, p)).max(axis=-1)
    r2 = np.abs(H.grad_q(q, p) + X.xp(q, p)).max(axis=-1)
    return float(np.max(r1 + r2))


def catalog_check(fields: Sequence[VectorField], **kw) -> list[HelmholtzReport]:
    return [check_conditions(X, **kw) for X in fields]
