"""Classify the reference fields and rebuild H for the Hamiltonian ones.

    python3 demos/helmholtz_catalog.py
"""
import numpy as np

from tshelm.catalog import CATALOG
from tshelm.helmholtz import check_conditions, reconstruct, roundtrip_residual, sample_box


def main():
    print(f"{'field':<22}{'verdict':<17}{'trace':>10}{'asym qp':>10}{'asym pq':>10}{'round trip':>12}")
    for entry in CATALOG:
        X = entry.field()
        rep = check_conditions(X)
        if rep.is_hamiltonian:
            H = reconstruct(X)
            rt = f"{roundtrip_residual(X, H):12.1e}"
        else:
            rt = f"{'-':>12}"
        print(f"{entry.name:<22}{rep.verdict:<17}{rep.trace_violation:10.1e}{rep.asym_qp:10.1e}"
              f"{rep.asym_pq:10.1e}{rt}")

    # reconstruction quality against the closed form, as the node count grows
    entry = next(e for e in CATALOG if e.name == "pendulum")
    z = sample_box(None, 2, 256, seed=0)
    q, p = z[:, :1], z[:, 1:]
    print("\npendulum, max |H_rec - H| by Gauss-Legendre nodes:")
    for n in (2, 4, 8, 16, 32):
        err = np.abs(reconstruct(entry.field(), n)(q, p) - entry.exact_value(q, p)).max()
        print(f"  {n:3d} nodes  {err:.2e}")


if __name__ == "__main__":
    main()
