"""A nonlinear oscillator that runs continuously, then in discrete kicks.

The scale is [0, 0.5] followed by the points 0.6, ..., 1. The derivative-form
solve is checked against the integral form, and the action is shown to be
stationary along the solution.

    python3 demos/hybrid_oscillator.py [out.csv]
"""
import sys

import numpy as np

from tshelm.dynamics import energy_series, residual_star1, residual_star2, solve_derivative_form, solve_integral_form
from tshelm.fields import Hamiltonian
from tshelm.timescale import TimeScale
from tshelm.variational import frechet_action, random_variation


def main(out=None):
    H = Hamiltonian.from_expression("(q1^2 + p1^2)/2 + 0.1*q1^2*p1^2", 1)
    T = TimeScale([(0.0, 0.5), 0.6, 0.7, 0.8, 0.9, 1.0], dense_step=1e-3)
    print("junctions:", ", ".join(f"t={j.t} ({j.kind})" for j in T.admissibility_report()))

    tr = solve_derivative_form(H, T, [0.8], [0.3])
    ti = solve_integral_form(H, T, tr.C_q, tr.C_p)
    print(f"derivative-form solve: integral-form residual {residual_star2(H, tr):.2e}")
    print(f"integral-form solve:   derivative-form residual {residual_star1(H, ti):.2e}")
    print(f"max |q_deriv - q_int| = {np.abs(tr.q - ti.q).max():.2e}")

    print("\n   t      kind                q          p          H")
    energy = dict(energy_series(H, tr))
    for i, t in enumerate(tr.t):
        if tr.kind[i] != "dense" or i % 100 == 0:
            print(f"{t:5.2f}  {tr.kind[i]:<17}{tr.q[i, 0]:10.6f} {tr.p[i, 0]:10.6f} {energy[t]:10.6f}")

    rng = np.random.default_rng(0)
    worst = max(
        abs(frechet_action(H, tr.path, v)) / v.norm()
        for v in (random_variation(T.grid, 1, rng) for _ in range(20))
    )
    print(f"\nlargest |dS[var]| / |var| over 20 variations: {worst:.2e}")

    if out:
        with open(out, "w") as fh:
            tr.to_csv(fh)
        print(f"trajectory written to {out}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else None)
