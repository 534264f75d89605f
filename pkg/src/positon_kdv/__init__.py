"""KdV evolution of a Wigner-von Neumann potential through Hankel-operator
Fredholm determinants, with an independent pseudospectral oracle."""

from .kdv import (FieldGrid, PointResult, Q_closed, Q_eps, SolutionSingularity, SolverOptions,
                  evaluate_field, positon, soliton, solve_point, tau_full, u0, u1, u_eps, u_total)
from .scattering import Params, approx_family, reflection, solve_kappa, transmission

__version__ = "0.1.0"

__all__ = [
    "FieldGrid", "Params", "PointResult", "Q_closed", "Q_eps", "SolutionSingularity",
    "SolverOptions", "approx_family", "evaluate_field", "positon", "reflection", "soliton",
    "solve_kappa", "solve_point", "tau_full", "transmission", "u0", "u1", "u_eps", "u_total",
]
