"""Jump operators, derivatives and integrals on a small mixed time scale.

    python3 demos/calculus_tour.py
"""
import numpy as np

from tshelm.calculus import GridFunction, delta_derivative, delta_integral, ibp_residual_i, nabla_derivative
from tshelm.timescale import TimeScale


def main():
    T = TimeScale([(0.0, 1.0), 1.5, 2.0, (2.5, 3.0)], dense_step=1e-3)
    print(f"{'t':>5} {'class':<40}{'sigma':>7}{'rho':>7}{'mu':>7}{'nu':>7}")
    for t in T.structural_points():
        print(f"{t:5.2f} {str(T.classify(t)):<40}{T.sigma(t):7.2f}{T.rho(t):7.2f}{T.mu(t):7.2f}{T.nu(t):7.2f}")

    f = GridFunction.sample(T, lambda t: t**2)
    print("\nf(t) = t^2")
    for t in (0.5, 1.0, 1.5, 2.0):
        print(f"  f^Delta({t}) = {delta_derivative(f, t)[0]:.6f}")
    for t in (0.5, 1.5, 2.5):
        print(f"  f^nabla({t}) = {nabla_derivative(f, t)[0]:.6f}")
    # 1/3 on [0,1], then mu-weighted values at 1, 1.5, 2, then the last interval
    exact = 1 / 3 + 0.5 * (1 + 2.25 + 4) + (27 - 2.5**3) / 3
    print(f"  int_0^3 f = {delta_integral(f, 0, 3)[0]:.10f}  (by hand {exact:.10f})")

    g = GridFunction.sample(T, np.cos)
    print(f"\nintegration by parts residual for t^2 and cos t: {ibp_residual_i(f, g, 0, 3):.2e}")


if __name__ == "__main__":
    main()
