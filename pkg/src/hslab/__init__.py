"""Numerical laboratory for the Hardy-Sobolev inequality on compact manifolds.

Modules
-------
bubbles        extremals of the Euclidean inequality and the constants built from them
geometry       metric models in normal coordinates, sphere moments, curvature checks
radial_solver  radial minimisation of the quotient on round spheres, threshold sweeps
pohozaev       Pohozaev boundary and curvature terms, blow-up asymptotics along ladders
green_mass     Green's function of Delta + h on S^3 and its mass
cli            experiment runner with JSON/CSV reports
"""

from .bubbles import Bubble, ProblemParams, best_constant_quadrature, cns, critical_exponent
from .geometry import ManifoldModel, load_model
from .radial_solver import RadialProblem, minimize, sweep_threshold

__version__ = "0.1.0"

__all__ = [
    "Bubble",
    "ProblemParams",
    "ManifoldModel",
    "RadialProblem",
    "best_constant_quadrature",
    "cns",
    "critical_exponent",
    "load_model",
    "minimize",
    "sweep_threshold",
]
