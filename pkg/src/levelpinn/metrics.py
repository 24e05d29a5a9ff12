"""Relative L1 error measures against manufactured solutions.

Interior and boundary errors are quadrature ratios
integral |u - u_hat| / integral |u| on the training grids, with Euclidean
norms per point for vector-valued fields.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import BoundaryPartition, InteriorGrid
from .mlp import MODE_VALUE, MlpParams, forward_stack
from .physics import ProblemSpec, solution_jets

__all__ = ["ErrorReport", "interior_error", "boundary_error", "error_report"]


class DegenerateDataError(ValueError):
    """Vanishing error-measure denominator."""


@dataclass
class ErrorReport:
    interior_error: float
    boundary_error: float
    n_interior: int
    n_boundary: int


def _solution_values(params: MlpParams, spec: ProblemSpec, points: np.ndarray,
                     chunk: int = 8192) -> np.ndarray:
    out = np.empty((len(points), spec.field_dim))
    for lo in range(0, len(points), chunk):
        xc = points[lo : lo + chunk]
        raw = forward_stack(params, xc, MODE_VALUE, keep=False).out
        out[lo : lo + len(xc)] = solution_jets(spec, xc, raw).value
    return out


def interior_error(params: MlpParams, spec: ProblemSpec, interior: InteriorGrid) -> float:
    """integral |u - u_hat| dx / integral |u| dx on the interior grid."""
    if spec.exact is None:
        raise ValueError(f"problem {spec.name} has no manufactured solution")
    u = spec.exact.value(interior.points)
    denom = float(np.linalg.norm(u, axis=1).sum())
    if denom == 0.0:
        raise DegenerateDataError("exact solution vanishes on the interior grid")
    uhat = _solution_values(params, spec, interior.points)
    num = float(np.linalg.norm(u - uhat, axis=1).sum())
    return num / denom


def boundary_error(params: MlpParams, spec: ProblemSpec,
                   partition: BoundaryPartition) -> float:
    """integral |g - u_hat| ds / integral |g| ds over the Dirichlet region."""
    quad = partition.dirichlet
    if quad.count == 0:
        raise ValueError("partition has no Dirichlet faces")
    g = spec.dirichlet_data(quad.points)
    denom = float((quad.areas * np.linalg.norm(g, axis=1)).sum())
    if denom == 0.0:
        raise DegenerateDataError("Dirichlet data vanishes on the boundary grid")
    uhat = _solution_values(params, spec, quad.points)
    num = float((quad.areas * np.linalg.norm(g - uhat, axis=1)).sum())
    return num / denom


def error_report(params: MlpParams, spec: ProblemSpec, interior: InteriorGrid,
                 partition: BoundaryPartition) -> ErrorReport:
    return ErrorReport(
        interior_error=interior_error(params, spec, interior),
        boundary_error=boundary_error(params, spec, partition),
        n_interior=interior.count,
        n_boundary=partition.count,
    )
