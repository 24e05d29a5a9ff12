"""Meshfree strong-form PINN solver on level-set geometries.

Trains dense tanh MLP discretizations against strong-form PDE residuals on
2D/3D geometries defined by level sets, with Dirichlet/Neumann/Robin
boundary conditions enforced through constrained-optimization strategies
(standard penalty, learning-rate annealing, self-adaptive penalties,
min-max Lagrange multipliers, and an Augmented Lagrangian outer/inner loop),
verified end to end with manufactured solutions.
"""

from . import cli, enforce, geometry, losses, metrics, mlp, optim, physics, vtkio

__all__ = [
    "cli",
    "enforce",
    "geometry",
    "losses",
    "metrics",
    "mlp",
    "optim",
    "physics",
    "vtkio",
]

__version__ = "0.1.0"
