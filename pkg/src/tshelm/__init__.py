"""Hamiltonian systems on time scales: calculus, Helmholtz conditions, solvers."""

__version__ = "0.1.0"

from .calculus import (
    GridFunction,
    JunctionError,
    antiderivative,
    delta_derivative,
    delta_derivative_all,
    delta_integral,
    nabla_derivative,
    nabla_derivative_all,
    rho_nabla,
)
from .dynamics import (
    SolverConfig,
    Trajectory,
    embed_functional,
    embed_integral_equation,
    embed_ode,
    energy_series,
    residual_star1,
    residual_star2,
    solve_derivative_form,
    solve_integral_form,
)
from .expr import parse_expr, differentiate
from .fields import Hamiltonian, VectorField
from .helmholtz import HelmholtzReport, check_conditions, jacobian_blocks, reconstruct, roundtrip_residual
from .timescale import TimeScale, TimeScaleDomainError
from .variational import (
    PhasePath,
    Variation,
    action_functional,
    apply_adjoint_DOX,
    apply_DOX,
    frechet_action,
    l2_delta,
    l2_delta_symplectic,
    random_variation,
    selfadjointness_residual,
)

__all__ = [
    "GridFunction",
    "JunctionError",
    "antiderivative",
    "delta_derivative",
    "delta_derivative_all",
    "delta_integral",
    "nabla_derivative",
    "nabla_derivative_all",
    "rho_nabla",
    "SolverConfig",
    "Trajectory",
    "embed_functional",
    "embed_integral_equation",
    "embed_ode",
    "energy_series",
    "residual_star1",
    "residual_star2",
    "solve_derivative_form",
    "solve_integral_form",
    "parse_expr",
    "differentiate",
    "Hamiltonian",
    "VectorField",
    "HelmholtzReport",
    "check_conditions",
    "jacobian_blocks",
    "reconstruct",
    "roundtrip_residual",
    "TimeScale",
    "TimeScaleDomainError",
    "PhasePath",
    "Variation",
    "action_functional",
    "apply_adjoint_DOX",
    "apply_DOX",
    "frechet_action",
    "l2_delta",
    "l2_delta_symplectic",
    "random_variation",
    "selfadjointness_residual",
]
