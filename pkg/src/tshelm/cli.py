"""Command-line interface: ``tshelm {check,reconstruct,simulate,calculus,selftest}``.

Machine-readable output goes to ``--out DIR`` when given, otherwise to stdout;
the human summary then goes to stderr so pipelines see only data.

Exit status: 0 success, 1 ``check`` verdict not_hamiltonian (or a failed
selftest), 2 errors.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .calculus import GridFunction, JunctionError, ibp_residual_i, ibp_residual_ii, identity_residuals
from .config import ConfigError, RunConfig, load_config
from .dynamics import (
    NewtonError,
    PicardError,
    energy_series,
    initial_constants,
    residual_star1,
    residual_star2,
    solve_derivative_form,
    solve_integral_form,
)
from .expr import EvaluationError, ParseError
from .helmholtz import (
    HelmholtzEvaluationError,
    NotHamiltonianError,
    check_conditions,
    reconstruct,
    roundtrip_residual,
)
from .selftest import _ii_ranges, run_selftest
from .timescale import TimeScaleDomainError

EXIT_OK, EXIT_VERDICT, EXIT_ERROR = 0, 1, 2
MAX_GRID_ROWS = 1_000_000


class _Output:
    def __init__(self, cfg: RunConfig):
        self.dir = Path(cfg.out) if cfg.out else None
        if self.dir is not None:
            self.dir.mkdir(parents=True, exist_ok=True)
        self.info = sys.stdout if self.dir is not None else sys.stderr

    def artifact(self, name: str, text: str, primary: bool = False):
        if self.dir is not None:
            (self.dir / name).write_text(text)
        elif primary:
            sys.stdout.write(text)

    def say(self, text: str):
        print(text, file=self.info)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _num(x) -> str:
    return repr(float(x))


def _box(cfg: RunConfig):
    return cfg.box


def cmd_check(cfg: RunConfig, out: _Output) -> int:
    X = cfg.vector_field()
    if cfg.timescale is not None:
        cfg.time_scale()  # validated, but the conditions never look at it
    rep = check_conditions(X, _box(cfg), cfg.samples, cfg.tol, cfg.seed)
    if cfg.format == "json":
        out.artifact("report.json", _dumps(rep.to_dict()), primary=True)
    else:
        w = rep.worst_point
        out.artifact(
            "report.csv",
            _csv(
                ["verdict", "trace_violation", "asym_qp", "asym_pq", "tolerance", "n_samples", "n_failed",
                 "jacobian", "worst_condition", "worst_violation", "worst_coords"],
                [[rep.verdict, _num(rep.trace_violation), _num(rep.asym_qp), _num(rep.asym_pq), _num(rep.tolerance),
                  rep.n_samples, rep.n_failed, rep.jacobian, w["condition"], _num(w["violation"]),
                  " ".join(_num(c) for c in w["coords"])]],
            ),
            primary=True,
        )
    out.say(rep.summary())
    return EXIT_OK if rep.is_hamiltonian else EXIT_VERDICT


def cmd_reconstruct(cfg: RunConfig, out: _Output) -> int:
    X = cfg.vector_field()
    H = reconstruct(X, cfg.nodes, box=_box(cfg), check=not cfg.force, tol=cfg.tol, seed=cfg.seed)
    res = roundtrip_residual(X, H, _box(cfg), cfg.samples, cfg.seed)
    dim = 2 * X.d
    if cfg.grid_points**dim > MAX_GRID_ROWS:
        raise ConfigError(f"grid_points^{dim} exceeds {MAX_GRID_ROWS} rows; lower grid_points")
    lo, hi = np.broadcast_to(np.asarray(cfg.box, dtype=float).reshape(-1, 2), (dim, 2)).T
    axes = [np.linspace(l, h, cfg.grid_points) for l, h in zip(lo, hi)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
    vals = H(pts[:, : X.d], pts[:, X.d :])
    names = [f"q{i + 1}" for i in range(X.d)] + [f"p{i + 1}" for i in range(X.d)]
    rows = [[_num(x) for x in z] + [_num(v)] for z, v in zip(pts, vals)]
    summary = {
        "nodes": cfg.nodes,
        "roundtrip_residual": res,
        "checked": not cfg.force,
        "grid_points": cfg.grid_points,
        "box": {"lo": lo.tolist(), "hi": hi.tolist()},
    }
    grid_csv = _csv(names + ["H"], rows)
    if out.dir is not None:
        out.artifact("hamiltonian.csv", grid_csv)
        out.artifact("reconstruct.json", _dumps(summary))
    elif cfg.format == "csv":
        out.artifact("hamiltonian.csv", grid_csv, primary=True)
    else:
        out.artifact("reconstruct.json", _dumps({**summary, "columns": names + ["H"], "rows": rows}), primary=True)
    out.say(f"reconstructed H with {cfg.nodes} nodes; round-trip residual {res:.3e}")
    return EXIT_OK


def _hamiltonian_for(cfg: RunConfig):
    if cfg.hamiltonian is not None:
        return cfg.hamiltonian_obj()
    X = cfg.vector_field()
    return reconstruct(X, cfg.nodes, box=_box(cfg), check=not cfg.force, tol=cfg.tol, seed=cfg.seed)


def cmd_simulate(cfg: RunConfig, out: _Output) -> int:
    H = _hamiltonian_for(cfg)
    T = cfg.time_scale()
    d = H.d
    q0 = cfg.q0 if cfg.q0 is not None else [1.0] + [0.0] * (d - 1)
    p0 = cfg.p0 if cfg.p0 is not None else [0.0] * d
    solver = cfg.solver()
    if cfg.form == "derivative":
        tr = solve_derivative_form(H, T, q0, p0, solver)
    else:
        C_q, C_p = initial_constants(H, T, q0, p0)
        tr = solve_integral_form(H, T, C_q, C_p, solver)
    r1, r2 = residual_star1(H, tr), residual_star2(H, tr)
    energy = energy_series(H, tr)
    e = np.array([v for _, v in energy])
    summary = {
        "form": cfg.form,
        "d": d,
        "timescale": cfg.timescale,
        "points": len(tr.t),
        "junctions": [{"t": j.t, "kind": j.kind} for j in T.admissibility_report()],
        "C_q": tr.C_q.tolist(),
        "C_p": tr.C_p.tolist(),
        "residual_star1": r1,
        "residual_star2": r2,
        "energy_drift": float(np.max(np.abs(e - e[0]))),
        "picard_sweeps": tr.sweeps,
    }
    traj_csv = tr.to_csv()
    if out.dir is not None:
        out.artifact("trajectory.csv", traj_csv)
        out.artifact("energy.csv", _csv(["t", "H"], [[_num(t), _num(v)] for t, v in energy]))
        out.artifact("simulate.json", _dumps(summary))
    elif cfg.format == "csv":
        out.artifact("trajectory.csv", traj_csv, primary=True)
    else:
        out.artifact("simulate.json", _dumps(summary), primary=True)
    out.say(
        f"{cfg.form}-form solve on {len(tr.t)} points: derivative-form residual {r1:.3e}, "
        f"integral-form residual {r2:.3e}, energy drift {summary['energy_drift']:.3e}"
    )
    return EXIT_OK


def cmd_calculus(cfg: RunConfig, out: _Output) -> int:
    T = cfg.time_scale()
    g = T.grid
    junction = {j.t: j.kind for j in T.admissibility_report()}
    rows = []
    for t in T.structural_points():
        c = T.classify(t)
        rows.append([_num(t), c.right, c.left, _num(T.sigma(t)), _num(T.rho(t)), _num(T.mu(t)), _num(T.nu(t)),
                     junction.get(t, "")])
    f = GridFunction.sample(g, lambda t: np.sin(3.0 * t) + t**2)
    h = GridFunction.sample(g, lambda t: np.cos(2.0 * t))
    r = identity_residuals(T, f)
    ds = r["doubly_scattered"]

    def worst(a):
        return float(a.max()) if len(a) else None

    ii = [ibp_residual_ii(f, h, c, d) for c, d in _ii_ranges(g)]
    ident = {
        "inverse_doubly_scattered": worst(r["inverse"][ds]),
        "inverse_dense": worst(r["inverse"][~ds]),
        "composition": worst(r["composition"]),
        "composition_dual": worst(r["composition_dual"]),
        "ibp_i": ibp_residual_i(f, h, T.a, T.b),
        "ibp_ii": max(ii) if ii else None,
        "test_functions": ["sin(3t) + t^2", "cos(2t)"],
    }
    header = ["t", "right", "left", "sigma", "rho", "mu", "nu", "junction"]
    table = _csv(header, rows)
    doc = {"points": [dict(zip(header, row)) for row in rows], "identities": ident}
    if out.dir is not None:
        out.artifact("calculus.csv", table)
        out.artifact("calculus.json", _dumps(doc))
    elif cfg.format == "csv":
        out.artifact("calculus.csv", table, primary=True)
    else:
        out.artifact("calculus.json", _dumps(doc), primary=True)
    out.say(
        "identity residuals: "
        + ", ".join(f"{k} {v:.2e}" for k, v in ident.items() if isinstance(v, float))
    )
    return EXIT_OK


def cmd_selftest(cfg: RunConfig, out: _Output) -> int:
    ok, results = run_selftest(cfg.seed, cfg.out, quick=cfg.quick)
    for r in results:
        print(r.line())
    print("selftest passed" if ok else "selftest FAILED")
    return EXIT_OK if ok else EXIT_VERDICT


COMMANDS = {
    "check": cmd_check,
    "reconstruct": cmd_reconstruct,
    "simulate": cmd_simulate,
    "calculus": cmd_calculus,
    "selftest": cmd_selftest,
}


def _box_arg(text: str):
    try:
        vals = [float(x) for x in text.replace(";", ",").split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"box must be 'lo,hi' or 'lo1,hi1,lo2,hi2,...', got {text!r}") from None
    if len(vals) < 2 or len(vals) % 2:
        raise argparse.ArgumentTypeError("box needs an even number of bounds")
    return vals if len(vals) == 2 else [vals[i : i + 2] for i in range(0, len(vals), 2)]


def _vec_arg(text: str):
    try:
        return [float(x) for x in text.replace(";", ",").split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML run configuration")
    common.add_argument("--seed", type=int, help="sampling seed (default 0)")
    common.add_argument("--tol", type=float, help="Helmholtz tolerance (default 1e-8 analytic, 1e-5 finite differences)")
    common.add_argument("--out", metavar="DIR", help="write artifacts to DIR instead of stdout")
    common.add_argument("--format", choices=("json", "csv"), help="stdout format (default json)")
    common.add_argument("--timescale", metavar="LITERAL", help="e.g. 'union: [0, 0.5]; 0.6; 1; dense_step: 1e-3'")
    common.add_argument("--catalog", metavar="NAME", help="use a catalog field (harmonic, pendulum, ...)")
    common.add_argument("--xq", metavar="EXPRS", help="X_q components separated by ';'")
    common.add_argument("--xp", metavar="EXPRS", help="X_p components separated by ';' (write --xp=-q1)")
    common.add_argument("--hamiltonian", metavar="EXPR", help="Hamiltonian expression in q1.., p1..")
    common.add_argument("--box", type=_box_arg, help="sampling box, 'lo,hi' for every coordinate (write --box=-1,1)")
    common.add_argument("--samples", type=int, help="Sobol sample count (default 128)")

    ap = argparse.ArgumentParser(prog="tshelm", description="Hamiltonian systems on time scales.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("check", parents=[common], help="test the Helmholtz conditions of a field")
    p = sub.add_parser("reconstruct", parents=[common], help="rebuild H from a Hamiltonian field")
    p.add_argument("--nodes", type=int, help="Gauss-Legendre nodes (default 32)")
    p.add_argument("--grid-points", type=int, dest="grid_points", help="grid points per coordinate (default 11)")
    p.add_argument("--force", action="store_true", default=None, help="skip the Helmholtz check")
    p = sub.add_parser("simulate", parents=[common], help="solve the Hamilton equations on a time scale")
    p.add_argument("--q0", type=_vec_arg, help="initial q, comma-separated")
    p.add_argument("--p0", type=_vec_arg, help="initial p, comma-separated")
    p.add_argument("--form", choices=("derivative", "integral"))
    p.add_argument("--nodes", type=int, help="nodes when H is reconstructed from a field")
    p.add_argument("--force", action="store_true", default=None)
    sub.add_parser("calculus", parents=[common], help="jump operators and identity residuals of a time scale")
    p = sub.add_parser("selftest", parents=[common], help="run the catalog acceptance checks")
    p.add_argument("--quick", action="store_true", default=None, help="reduced sample counts, same thresholds")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if any(getattr(args, k) is not None for k in ("catalog", "xq", "xp", "hamiltonian")):
            # a field given on the command line replaces the one from the file
            cfg.catalog = cfg.xq = cfg.xp = cfg.hamiltonian = None
        keys = ("seed", "tol", "out", "format", "timescale", "catalog", "xq", "xp", "hamiltonian", "box",
                "samples", "nodes", "grid_points", "force", "q0", "p0", "form", "quick")
        cfg = cfg.override(**{k: getattr(args, k, None) for k in keys})
        return COMMANDS[args.command](cfg, _Output(cfg))
    except (
        ConfigError,
        ParseError,
        EvaluationError,
        TimeScaleDomainError,
        JunctionError,
        HelmholtzEvaluationError,
        NotHamiltonianError,
        NewtonError,
        PicardError,
        OSError,
    ) as exc:
        msg = str(exc)
        if isinstance(exc, NotHamiltonianError):
            msg += "; pass --force to reconstruct anyway"
        print(f"tshelm {args.command}: error: {msg}", file=sys.stderr)
        return EXIT_ERROR
    except ValueError as exc:
        print(f"tshelm {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
