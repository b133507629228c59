"""Ground states and nodal solutions of critical semilinear problems on cylinder-type domains.

Modules: geometry (domains and grids), calculus (fields, stencil, quadrature,
CG), spectral (cross-section eigenpairs), energy (functional and Nehari
scaling), solvers (descent on the Nehari set, radial shooting), testfunctions
(instantons, cutoffs, energy-gap experiments), decay (envelopes and fits), cli.
"""
from .calculus import Field, Integrals, integrals, laplacian, poisson_solve
from .energy import ProblemParams, energy, nehari_scale, residual
from .geometry import DomainSpec, GridSpec, ball_domain, discretize, make_cross_section
from .solvers import SolveConfig, ground_state, nodal_solution, radial_shooting
from .spectral import principal_eigenpair

__version__ = "0.1.0"

__all__ = [
    "Field", "Integrals", "integrals", "laplacian", "poisson_solve", "ProblemParams", "energy",
    "nehari_scale", "residual", "DomainSpec", "GridSpec", "ball_domain", "discretize",
    "make_cross_section", "SolveConfig", "ground_state", "nodal_solution", "radial_shooting",
    "principal_eigenpair",
]
