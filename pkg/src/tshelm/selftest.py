"""Catalog acceptance checks, shared by the ``selftest`` verb and the test suite.

Every check returns a :class:`CheckResult` holding the measured quantity, the
threshold it is compared with, and the verdict. Nothing here reads clocks, so
two runs with the same seed give identical results.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .calculus import GridFunction, ibp_residual_i, ibp_residual_ii, identity_residuals
from .catalog import CATALOG
from .dynamics import (
    SolverConfig,
    residual_star1,
    residual_star2,
    solve_derivative_form,
    solve_integral_form,
)
from .expr import differentiate, parse_expr, random_expression
from .fields import Hamiltonian
from .helmholtz import check_conditions, reconstruct, roundtrip_residual, sample_box
from .timescale import TimeScale, random_timescale
from .variational import PhasePath, frechet_action, l2_delta, random_variation, selfadjointness_residual

__all__ = [
    "CheckResult",
    "MIXED_SCALE",
    "check_identities",
    "check_ibp",
    "check_catalog",
    "check_reconstruction",
    "check_selfadjointness",
    "check_solver_reductions",
    "check_critical_point",
    "check_star_equivalence",
    "check_parser",
    "run_selftest",
    "bisection_oracle",
]

# dense stretch, then scattered points; the only junction is dense-to-scattered
MIXED_SCALE = ([(0.0, 0.5), 0.6, 0.7, 0.8, 0.9, 1.0], 1e-3)
NONLINEAR_H = "(q1^2 + p1^2)/2 + 0.1*q1^2*p1^2"


@dataclass
class CheckResult:
    name: str
    value: float
    threshold: float
    passed: bool
    detail: str = ""

    def __post_init__(self):
        self.value = float(self.value)
        self.threshold = float(self.threshold)
        self.passed = bool(self.passed)

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] {self.name}: {self.value:.3e} (threshold {self.threshold:.1e}) {self.detail}".rstrip()


def _mixed_scale() -> TimeScale:
    segs, h = MIXED_SCALE
    return TimeScale(segs, h)


def _test_function(g) -> GridFunction:
    return GridFunction.sample(g, lambda t: np.sin(3.0 * t) + t**2)


def check_identities(seed: int = 0, n_scales: int = 100) -> list[CheckResult]:
    """Inverse and composition identities on random mixed scales."""
    rng = np.random.default_rng(seed)
    ds_worst = dense_worst = comp_worst = 0.0
    n_ds = n_dense = 0
    for _ in range(n_scales):
        T = random_timescale(rng, int(rng.integers(3, 51)), 0.0, 1.0, 0.5, 1e-3)
        r = identity_residuals(T, _test_function(T.grid))
        ds = r["doubly_scattered"]
        if ds.any():
            ds_worst = max(ds_worst, float(r["inverse"][ds].max()))
        if (~ds).any():
            dense_worst = max(dense_worst, float(r["inverse"][~ds].max()))
        n_ds += int(ds.sum())
        n_dense += int((~ds).sum())
        comp_worst = max(comp_worst, float(r["composition"].max()), float(r["composition_dual"].max()))
    return [
        CheckResult("inverse identity, doubly scattered", ds_worst, 0.0, ds_worst == 0.0, f"({n_ds} points)"),
        CheckResult("inverse identity, dense", dense_worst, 1e-10, dense_worst <= 1e-10, f"({n_dense} points)"),
        CheckResult("composition identities", comp_worst, 1e-6, comp_worst <= 1e-6),
    ]


def _ibp_scale(rng) -> TimeScale:
    # at least one dense stretch and one scattered point
    while True:
        T = random_timescale(rng, int(rng.integers(3, 12)), 0.0, 1.0, 0.5, 1e-2)
        g = T.grid
        if g.dense and (g.right_scattered.any()):
            return T


def _ii_ranges(g) -> list[tuple[float, float]]:
    """Maximal ranges whose half-open interior holds no scattered-to-dense junction."""
    t = g.t
    starts = [0] + [i + 1 for i in np.nonzero(g.ls_rd_mask)[0]]
    out = []
    for s in starts:
        if s >= len(t) - 1:
            continue
        nxt = np.nonzero(g.ls_rd_mask[s:])[0]
        e = s + nxt[0] if len(nxt) else len(t) - 1
        if e > s:
            out.append((float(t[s]), float(t[e])))
    return out


def _random_smooth(g, rng) -> GridFunction:
    c = rng.standard_normal(4)
    w = rng.uniform(0.5, 4.0)
    return GridFunction.sample(g, lambda t: c[0] + c[1] * t + c[2] * np.sin(w * t) + c[3] * np.cos(2.0 * t))


def check_ibp(seed: int = 0, n_scales: int = 10, n_pairs: int = 50) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    worst_i = worst_ii = 0.0
    for _ in range(n_scales):
        T = _ibp_scale(rng)
        g = T.grid
        h2 = T.dense_step**2
        ranges = _ii_ranges(g)
        for _ in range(n_pairs):
            f, gg = _random_smooth(g, rng), _random_smooth(g, rng)
            scale = max(1e-10, 10.0 * h2 * np.sqrt(l2_delta(f, f) * l2_delta(gg, gg)))
            worst_i = max(worst_i, ibp_residual_i(f, gg, T.a, T.b) / scale)
            for c, d in ranges:
                worst_ii = max(worst_ii, ibp_residual_ii(f, gg, c, d) / scale)
    return [
        CheckResult("integration by parts (i), relative to bound", worst_i, 1.0, worst_i <= 1.0),
        CheckResult("integration by parts (ii), relative to bound", worst_ii, 1.0, worst_ii <= 1.0),
    ]


def check_catalog(seed: int = 0) -> list[CheckResult]:
    wrong = []
    damped = None
    for e in CATALOG:
        rep = check_conditions(e.field(), tol=1e-8, seed=seed)
        if rep.is_hamiltonian != e.hamiltonian:
            wrong.append(e.name)
        if e.name == "damped":
            damped = rep.trace_violation
    dev = abs(damped - 0.1)
    return [
        CheckResult("catalog misclassifications", float(len(wrong)), 0.0, not wrong, ", ".join(wrong)),
        CheckResult("damped trace violation minus 0.1", dev, 1e-8, dev <= 1e-8),
    ]


def check_reconstruction(seed: int = 0, n_samples: int = 128) -> list[CheckResult]:
    rt = val = 0.0
    for e in CATALOG:
        if not e.hamiltonian:
            continue
        X = e.field()
        H = reconstruct(X, 32, seed=seed)
        rt = max(rt, roundtrip_residual(X, H, n_samples=n_samples, seed=seed))
        z = sample_box(None, 2 * e.d, n_samples, seed + 1)
        q, p = z[:, : e.d], z[:, e.d :]
        val = max(val, float(np.abs(H(q, p) - e.exact_value(q, p)).max()))
    return [
        CheckResult("round-trip residual", rt, 1e-8, rt <= 1e-8),
        CheckResult("reconstructed H vs closed form", val, 1e-10, val <= 1e-10),
    ]


def _reference_path(T: TimeScale, d: int) -> PhasePath:
    g = T.grid
    q = np.stack([np.cos(g.t + 0.3 * k) for k in range(d)], axis=1)
    p = np.stack([-np.sin(g.t + 0.3 * k) for k in range(d)], axis=1)
    return PhasePath.from_arrays(g, q, p)


def check_selfadjointness(seed: int = 0, trials: int = 20) -> list[CheckResult]:
    T = _mixed_scale()
    res = {}
    for e in CATALOG:
        if e.name in ("harmonic", "pendulum", "coupled", "damped"):
            res[e.name] = selfadjointness_residual(e.field(), _reference_path(T, e.d), trials, seed)
    ham = max(res["harmonic"], res["pendulum"], res["coupled"])
    ratio = res["damped"] / max(ham, 1e-6)
    return [
        CheckResult("self-adjointness, Hamiltonian fields", ham, 1e-6, ham <= 1e-6),
        CheckResult("damped residual / max(Hamiltonian, 1e-6)", ratio, 100.0, ratio >= 100.0),
    ]


def bisection_oracle(q0: float, p0: float, h: float, n: int, gamma: float = 0.1) -> np.ndarray:
    """Explicit q step, then ``p_{k+1} + h H_q(q_{k+1}, p_{k+1}) = p_k`` by bisection,
    for ``H = (q^2 + p^2)/2 + gamma q^2 p^2``."""

    def Hq(q, p):
        return q + 2.0 * gamma * q * p * p

    def Hp(q, p):
        return p + 2.0 * gamma * q * q * p

    out = [(q0, p0)]
    q, p = q0, p0
    for _ in range(n):
        q = q + h * Hp(q, p)
        lo, hi = p - 1.0, p + 1.0
        g = lambda x: x + h * Hq(q, x) - p
        glo = g(lo)
        while hi - lo > 1e-14:
            mid = 0.5 * (lo + hi)
            gm = g(mid)
            if mid in (lo, hi):
                break
            if (gm > 0) == (glo > 0):
                lo, glo = mid, gm
            else:
                hi = mid
        p = 0.5 * (lo + hi)
        out.append((q, p))
    return np.array(out)


def check_solver_reductions() -> list[CheckResult]:
    T = TimeScale.uniform(0.0, 1.0, 0.1)
    H = Hamiltonian.from_expression(NONLINEAR_H, 1)
    tr = solve_derivative_form(H, T, [0.8], [0.3])
    ref = bisection_oracle(0.8, 0.3, 0.1, len(T.grid) - 1)
    disc = float(max(np.abs(tr.q[:, 0] - ref[:, 0]).max(), np.abs(tr.p[:, 0] - ref[:, 1]).max()))
    Tc = TimeScale.interval(0.0, 1.0, 1e-3)
    hc = solve_derivative_form(Hamiltonian.from_expression("(q1^2 + p1^2)/2", 1), Tc, [1.0], [0.0])
    t = Tc.grid.t
    cont = float(max(np.abs(hc.q[:, 0] - np.cos(t)).max(), np.abs(hc.p[:, 0] + np.sin(t)).max()))
    return [
        CheckResult("discrete solver vs bisection recursion", disc, 1e-12, disc <= 1e-12),
        CheckResult("continuous solver vs (cos t, -sin t)", cont, 1e-6, cont <= 1e-6),
    ]


def _scales_for_dynamics():
    return [("0.1Z", TimeScale.uniform(0.0, 1.0, 0.1)), ("mixed", _mixed_scale())]


def check_critical_point(seed: int = 0, n_var: int = 50) -> list[CheckResult]:
    H = Hamiltonian.from_expression(NONLINEAR_H, 1)
    out = []
    for label, T in _scales_for_dynamics():
        tr = solve_derivative_form(H, T, [0.8], [0.3])
        path = tr.path
        bound = max(1e-6, 10.0 * T.dense_step**2) if T.grid.dense else 1e-6
        worst = 0.0
        for rng in (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_var)):
            var = random_variation(T.grid, 1, rng)
            worst = max(worst, abs(frechet_action(H, path, var)) / var.norm())
        out.append(CheckResult(f"critical point on {label}", worst, bound, worst <= bound))
    return out


def check_star_equivalence() -> list[CheckResult]:
    H = Hamiltonian.from_expression(NONLINEAR_H, 1)
    out = []
    for label, T in _scales_for_dynamics():
        cfg = SolverConfig()
        tr = solve_derivative_form(H, T, [0.8], [0.3], cfg)
        ti = solve_integral_form(H, T, tr.C_q, tr.C_p, cfg)
        bound = max(1e-8, 10.0 * T.dense_step**4) if T.grid.dense else 1e-8
        r2 = residual_star2(H, tr)
        r1 = residual_star1(H, ti)
        out.append(CheckResult(f"integral-form residual of derivative solver on {label}", r2, bound, r2 <= bound))
        out.append(CheckResult(f"derivative-form residual of integral solver on {label}", r1, bound, r1 <= bound))
    return out


def _fd5(fn, z, j, h=1e-3):
    e = np.zeros_like(z)
    e[j] = h
    return (fn(z - 2 * e) - 8 * fn(z - e) + 8 * fn(z + e) - fn(z + 2 * e)) / (12 * h)


def check_parser(seed: int = 0, n_trees: int = 200) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    not_idempotent = 0
    d = 2
    names = ["q1", "q2", "p1", "p2"]
    for _ in range(n_trees):
        e = random_expression(rng, d, 4)
        s1 = e.pretty()
        s2 = parse_expr(s1, d).pretty()
        if parse_expr(s2, d).pretty() != s2 or s1 != s2:
            not_idempotent += 1
        z = rng.uniform(-1, 1, 2 * d)
        fn = lambda x: float(e.evaluate(dict(zip(names, x), t=0.0)))
        for j, v in enumerate(names):
            a = float(differentiate(e, v).evaluate(dict(zip(names, z), t=0.0)))
            fd = _fd5(fn, z, j)
            worst = max(worst, abs(a - fd) / max(1.0, abs(a)))
    return [
        CheckResult("derivative vs finite differences (relative)", worst, 1e-7, worst <= 1e-7),
        CheckResult("pretty/parse round-trip failures", float(not_idempotent), 0.0, not_idempotent == 0),
    ]


def run_selftest(seed: int = 0, out: str | Path | None = None, quick: bool = False) -> tuple[bool, list[CheckResult]]:
    """Run every check; with ``out`` set, write ``selftest.json`` and a sample
    trajectory there. ``quick`` trims sample counts, not thresholds."""
    k = 5 if quick else 1
    groups = [
        ("operator identities", check_identities(seed, 100 // k)),
        ("integration by parts", check_ibp(seed, 10 // k, 50 // k)),
        ("helmholtz catalog", check_catalog(seed)),
        ("reconstruction", check_reconstruction(seed)),
        ("self-adjointness", check_selfadjointness(seed)),
        ("solver reductions", check_solver_reductions()),
        ("critical point", check_critical_point(seed, 50 // k)),
        ("integral and derivative forms", check_star_equivalence()),
        ("parser", check_parser(seed, 200 // k)),
    ]
    results = [r for _, rs in groups for r in rs]
    ok = all(r.passed for r in results)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        doc = {
            "seed": seed,
            "quick": quick,
            "passed": ok,
            "groups": [{"group": name, "checks": [asdict(r) for r in rs]} for name, rs in groups],
        }
        (out / "selftest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        H = Hamiltonian.from_expression(NONLINEAR_H, 1)
        tr = solve_derivative_form(H, _mixed_scale(), [0.8], [0.3])
        (out / "trajectory_mixed.csv").write_text(tr.to_csv())
    return ok, results
