"""Level-set geometry: interior quadrature grids and triangulated boundaries.

A geometry is the negative region of a scalar level-set field on an
axis-aligned bounding box (the unit cube by default).  Interior integration
points are the strictly-negative nodes of a uniform background grid with a
uniform volume weight; the boundary is triangulated from the zero
isocontour with the classic marching-cubes tables, giving per-facet
centroids, outward unit normals, and area weights that are then split into
Dirichlet and Neumann/Robin regions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._mc_tables import CORNER_OFFSETS, EDGE_CORNERS, EDGE_TABLE, TRI_TABLE

__all__ = [
    "LevelSet",
    "BackgroundGrid",
    "InteriorGrid",
    "SurfaceMesh",
    "SurfaceQuadrature",
    "BoundaryPartition",
    "InvalidResolutionError",
    "EmptyGeometryError",
    "EmptySurfaceError",
    "unit_cube",
    "background_grid",
    "interior_grid",
    "marching_cubes",
    "partition_boundary",
    "surface_integral",
    "circle_boundary",
]


class InvalidResolutionError(ValueError):
    """Background grid resolution below two points per axis."""


class EmptyGeometryError(ValueError):
    """Level set has no strictly-negative points on the grid."""


class EmptySurfaceError(ValueError):
    """Level set does not change sign on the grid."""


def unit_cube(dim: int = 3) -> np.ndarray:
    """Bounding box [0,1]^dim as a (2, dim) array of (lo, hi) corners."""
    return np.array([[0.0] * dim, [1.0] * dim])


@dataclass
class LevelSet:
    """Scalar field defining a geometry by its sign: inside where phi < 0.

    phi takes an (n, dim) batch of points and returns (n,) values; the
    bounding box is a (2, dim) array of lower/upper corners.
    """

    phi: Callable[[np.ndarray], np.ndarray]
    box: np.ndarray = field(default_factory=unit_cube)

    def __post_init__(self):
        self.box = np.asarray(self.box, dtype=float)
        if self.box.ndim != 2 or self.box.shape[0] != 2:
            raise ValueError("box must be a (2, dim) array of corners")
        if np.any(self.box[1] <= self.box[0]):
            raise ValueError("box upper corner must exceed lower corner")

    @property
    def dim(self) -> int:
        return self.box.shape[1]

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(self.phi(np.asarray(points, dtype=float)))


@dataclass
class BackgroundGrid:
    """Uniform grid over a box, endpoints included, axis-major ordering."""

    points: np.ndarray  # (n^dim, dim)
    spacing: np.ndarray  # (dim,)
    n: int
    box: np.ndarray

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))


@dataclass
class InteriorGrid:
    """Interior integration points with their uniform volume element."""

    points: np.ndarray  # (N, dim)
    delta_v: float

    @property
    def count(self) -> int:
        return len(self.points)

    @property
    def volume(self) -> float:
        return self.count * self.delta_v


@dataclass
class SurfaceQuadrature:
    """Boundary integration points with outward normals and area weights."""

    points: np.ndarray  # (M, dim)
    normals: np.ndarray  # (M, dim)
    areas: np.ndarray  # (M,)

    @property
    def count(self) -> int:
        return len(self.points)

    @property
    def total_area(self) -> float:
        return float(self.areas.sum())


@dataclass
class SurfaceMesh:
    """Triangulated zero isocontour with per-facet quadrature data."""

    vertices: np.ndarray  # (V, 3)
    faces: np.ndarray  # (F, 3) vertex indices
    centroids: np.ndarray  # (F, 3)
    normals: np.ndarray  # (F, 3) outward unit normals
    areas: np.ndarray  # (F,)
    n_degenerate: int = 0  # zero-area faces dropped during construction

    @property
    def count(self) -> int:
        return len(self.faces)

    @property
    def total_area(self) -> float:
        return float(self.areas.sum())

    def normal_closure(self) -> float:
        """|sum_j dA_j n_j| / sum_j dA_j; near zero for a closed surface."""
        return float(
            np.linalg.norm((self.areas[:, None] * self.normals).sum(axis=0))
            / self.areas.sum()
        )

    def quadrature(self) -> SurfaceQuadrature:
        return SurfaceQuadrature(self.centroids, self.normals, self.areas)


@dataclass
class BoundaryPartition:
    """Disjoint split of the boundary quadrature into BC regions."""

    dirichlet: SurfaceQuadrature
    neumann_or_robin: SurfaceQuadrature

    @property
    def count(self) -> int:
        return self.dirichlet.count + self.neumann_or_robin.count


def background_grid(n: int, box: np.ndarray | None = None) -> BackgroundGrid:
    """n points per axis at box_min + (i/(n-1))*(box_max-box_min), axis-major."""
    if n < 2:
        raise InvalidResolutionError(f"need at least 2 points per axis, got {n}")
    box = unit_cube() if box is None else np.asarray(box, dtype=float)
    dim = box.shape[1]
    axes = [np.linspace(box[0, k], box[1, k], n) for k in range(dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.reshape(-1) for m in mesh], axis=1)
    spacing = (box[1] - box[0]) / (n - 1)
    return BackgroundGrid(points=points, spacing=spacing, n=n, box=box)


def interior_grid(ls: LevelSet, grid: BackgroundGrid) -> InteriorGrid:
    """Keep the strictly-negative grid points; delta_v is the grid cell volume."""
    if len(grid.points) == 0:
        raise ValueError("background grid is empty")
    phi = ls(grid.points)
    mask = phi < 0.0
    if not mask.any():
        raise EmptyGeometryError("level set is non-negative on the whole grid")
    return InteriorGrid(points=grid.points[mask], delta_v=grid.cell_volume)


def _interp_edge_vertices(lo_lin, hi_lin, phi_flat, coords_of):
    """Linear zero crossing on grid edges, in canonical lo->hi orientation."""
    phi_lo = phi_flat[lo_lin]
    phi_hi = phi_flat[hi_lin]
    t = phi_lo / (phi_lo - phi_hi)
    p_lo = coords_of(lo_lin)
    p_hi = coords_of(hi_lin)
    return p_lo + t[:, None] * (p_hi - p_lo)


def marching_cubes(ls: LevelSet, n: int) -> SurfaceMesh:
    """Triangulate the zero isocontour on an n^3 grid over the level-set box.

    Classic 15-case lookup with linear interpolation along grid edges.
    Shared edge vertices are merged, facet normals are oriented outward by
    the sign of the level-set gradient (central differences at the grid
    spacing), and zero-area facets are dropped.
    """
    if ls.dim != 3:
        raise ValueError("marching cubes operates on 3D level sets")
    if n < 2:
        raise InvalidResolutionError(f"need at least 2 points per axis, got {n}")

    box = ls.box
    axes = [np.linspace(box[0, k], box[1, k], n) for k in range(3)]
    spacing = (box[1] - box[0]) / (n - 1)
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
    phi = ls(pts).reshape(n, n, n)
    phi_flat = phi.reshape(-1)

    inside = phi < 0.0
    if not inside.any() or inside.all():
        raise EmptySurfaceError("level set does not change sign on the grid")

    # case index per cell from the signs at its 8 corners
    m = n - 1
    case = np.zeros((m, m, m), dtype=np.int32)
    for bit, (ox, oy, oz) in enumerate(CORNER_OFFSETS):
        corner_inside = inside[ox : ox + m, oy : oy + m, oz : oz + m]
        case |= corner_inside.astype(np.int32) << bit

    edge_mask = np.asarray(EDGE_TABLE, dtype=np.int32)[case]
    active = np.nonzero(edge_mask.reshape(-1))[0]
    if len(active) == 0:
        raise EmptySurfaceError("no cells crossed by the isocontour")
    cell_ijk = np.stack(np.unravel_index(active, (m, m, m)), axis=1)
    cell_case = case.reshape(-1)[active]

    # global linear ids of the 8 corners of each active cell
    corner_lin = np.empty((len(active), 8), dtype=np.int64)
    for c, (ox, oy, oz) in enumerate(CORNER_OFFSETS):
        corner_lin[:, c] = (
            (cell_ijk[:, 0] + ox) * n * n + (cell_ijk[:, 1] + oy) * n + (cell_ijk[:, 2] + oz)
        )

    def coords_of(lin):
        i, rem = np.divmod(lin, n * n)
        j, k = np.divmod(rem, n)
        return box[0] + np.stack([i, j, k], axis=1) * spacing

    # emit per-triangle corner edge keys, grouped by cube case
    tri_lo_parts, tri_hi_parts = [], []
    for c in np.unique(cell_case):
        rows = np.nonzero(cell_case == c)[0]
        tri_edges = TRI_TABLE[c]
        corners = corner_lin[rows]
        for e in tri_edges:  # one entry per triangle corner, in fan order
            a, b = EDGE_CORNERS[e]
            ga, gb = corners[:, a], corners[:, b]
            tri_lo_parts.append(np.minimum(ga, gb))
            tri_hi_parts.append(np.maximum(ga, gb))
    # interleave back to (n_corners_total,) in triangle order per case group;
    # the global face ordering is case-grouped, which is fine for quadrature
    lo = np.concatenate([np.stack(tri_lo_parts[i : i + 3], axis=1).reshape(-1)
                         for i in range(0, len(tri_lo_parts), 3)])
    hi = np.concatenate([np.stack(tri_hi_parts[i : i + 3], axis=1).reshape(-1)
                         for i in range(0, len(tri_hi_parts), 3)])

    # merge shared edge vertices via the canonical (lo, hi) key
    keys = lo * (n**3) + hi
    uniq_keys, inverse = np.unique(keys, return_inverse=True)
    uniq_lo, uniq_hi = np.divmod(uniq_keys, n**3)
    vertices = _interp_edge_vertices(uniq_lo, uniq_hi, phi_flat, coords_of)
    faces = inverse.reshape(-1, 3)

    v0 = vertices[faces[:, 0]]
    v1 = vertices[faces[:, 1]]
    v2 = vertices[faces[:, 2]]
    cross = np.cross(v1 - v0, v2 - v0)
    areas = 0.5 * np.linalg.norm(cross, axis=1)
    keep = areas > 1e-14
    n_degenerate = int((~keep).sum())
    faces = faces[keep]
    cross = cross[keep]
    areas = areas[keep]
    centroids = (v0[keep] + v1[keep] + v2[keep]) / 3.0

    normals = cross / (2.0 * areas[:, None])
    # orient outward: the level-set gradient points from inside to outside
    h = spacing.min()
    grad = np.empty_like(centroids)
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        grad[:, k] = (ls(centroids + e) - ls(centroids - e)) / (2 * h)
    flip = (normals * grad).sum(axis=1) < 0.0
    normals[flip] *= -1.0

    return SurfaceMesh(
        vertices=vertices,
        faces=faces,
        centroids=centroids,
        normals=normals,
        areas=areas,
        n_degenerate=n_degenerate,
    )


def partition_boundary(
    mesh: SurfaceMesh | SurfaceQuadrature, predicate: Callable[[np.ndarray], str]
) -> BoundaryPartition:
    """Assign each facet by its centroid: 'dirichlet' or anything else (flux)."""
    quad = mesh.quadrature() if isinstance(mesh, SurfaceMesh) else mesh
    tags = np.array([predicate(p) == "dirichlet" for p in quad.points])
    def subset(mask):
        return SurfaceQuadrature(
            quad.points[mask], quad.normals[mask], quad.areas[mask]
        )
    return BoundaryPartition(dirichlet=subset(tags), neumann_or_robin=subset(~tags))


def surface_integral(
    mesh: SurfaceMesh | SurfaceQuadrature, integrand: Callable[[np.ndarray], np.ndarray]
) -> float:
    """Quadrature sum_j integrand(S_j) * dA_j over facet centroids."""
    quad = mesh.quadrature() if isinstance(mesh, SurfaceMesh) else mesh
    vals = np.asarray(integrand(quad.points), dtype=float).reshape(-1)
    if vals.shape != (quad.count,):
        raise ValueError("integrand must return one value per centroid")
    if not np.all(np.isfinite(vals)):
        bad = int(np.nonzero(~np.isfinite(vals))[0][0])
        raise FloatingPointError(
            f"non-finite integrand value at point {quad.points[bad]}"
        )
    return float(vals @ quad.areas)


def circle_boundary(
    n_points: int, radius: float = 1.0, center: tuple[float, float] = (0.0, 0.0)
) -> SurfaceQuadrature:
    """Equally spaced points on a circle with radial outward normals.

    Arc-length weights 2*pi*r/n; used for 2D problems where the boundary is
    parameterized directly instead of extracted from a level set.
    """
    if n_points < 1:
        raise ValueError("need at least one boundary point")
    theta = 2.0 * np.pi * np.arange(n_points) / n_points
    normals = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    points = np.asarray(center) + radius * normals
    areas = np.full(n_points, 2.0 * np.pi * radius / n_points)
    return SurfaceQuadrature(points=points, normals=normals, areas=areas)
