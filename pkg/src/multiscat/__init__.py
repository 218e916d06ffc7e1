"""Multiple scattering of time-harmonic waves by several obstacles.

Spectral-element subdomain solves with a Dirichlet-to-Neumann closure on
artificial circles, coupled through purely outgoing Hankel expansions and
solved with matrix-free GMRES.
"""

from .geometry import ArtificialDisk, BoundaryCondition, ScattererSpec
from .multiscatter import FieldEvaluator, MultipleScatteringSolver, bc_residual, solve_scene
from .scenes import SceneConfig, parse_scene, refraction_eval

__version__ = "0.1.0"

__all__ = [
    "ArtificialDisk",
    "BoundaryCondition",
    "FieldEvaluator",
    "MultipleScatteringSolver",
    "SceneConfig",
    "ScattererSpec",
    "bc_residual",
    "parse_scene",
    "refraction_eval",
    "solve_scene",
]
