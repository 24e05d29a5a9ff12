import numpy as np
import pytest

from levelpinn.geometry import (
    EmptyGeometryError,
    EmptySurfaceError,
    InvalidResolutionError,
    LevelSet,
    background_grid,
    circle_boundary,
    interior_grid,
    marching_cubes,
    partition_boundary,
    surface_integral,
    unit_cube,
)
from levelpinn.physics import (
    branch_level_set,
    pipe_level_set,
    sphere_level_set,
    tabletop_level_set,
)

BALL_VOLUME = 4.0 / 3.0 * np.pi * 0.4**3
SPHERE_AREA = 4.0 * np.pi * 0.4**2


# ------------------------------------------------------------- background grid

def test_grid_n2_unit_square_corners():
    grid = background_grid(2, np.array([[0.0, 0.0], [1.0, 1.0]]))
    expected = {(0, 0), (0, 1), (1, 0), (1, 1)}
    assert {tuple(p) for p in grid.points} == expected


def test_grid_n75_cube_count():
    grid = background_grid(75)
    assert len(grid.points) == 75**3
    assert np.allclose(grid.spacing, 1.0 / 74.0)


def test_grid_n3_interval():
    grid = background_grid(3, np.array([[0.0], [1.0]]))
    assert np.allclose(grid.points.reshape(-1), [0.0, 0.5, 1.0])


def test_grid_invalid_resolution():
    with pytest.raises(InvalidResolutionError):
        background_grid(1)


def test_grid_axis_major_ordering():
    grid = background_grid(2, np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]]))
    # last axis varies fastest
    assert np.allclose(grid.points[0], [0, 0, 0])
    assert np.allclose(grid.points[1], [0, 0, 1])
    assert np.allclose(grid.points[4], [1, 0, 0])


# ------------------------------------------------------------- interior grid

def test_interior_empty_raises():
    ls = LevelSet(lambda p: np.ones(len(p)))
    with pytest.raises(EmptyGeometryError):
        interior_grid(ls, background_grid(10))


def test_interior_ball_volume():
    ls = sphere_level_set(0.4)
    interior = interior_grid(ls, background_grid(75))
    assert interior.volume == pytest.approx(BALL_VOLUME, rel=0.01)


def test_interior_branch_count():
    interior = interior_grid(branch_level_set(), background_grid(75))
    assert abs(interior.count - 82537) <= 0.01 * 82537


def test_interior_strictly_negative():
    ls = sphere_level_set(0.4)
    interior = interior_grid(ls, background_grid(21))
    assert np.all(ls(interior.points) < 0.0)


def test_interior_refinement_monotone_convergence():
    ls = sphere_level_set(0.4)
    vols = [interior_grid(ls, background_grid(n)).volume for n in (25, 50, 100)]
    steps = [abs(vols[1] - vols[0]), abs(vols[2] - vols[1])]
    assert steps[1] <= steps[0]
    assert abs(vols[2] - BALL_VOLUME) < abs(vols[0] - BALL_VOLUME)


# ------------------------------------------------------------- marching cubes

@pytest.fixture(scope="module")
def sphere_mesh():
    return marching_cubes(sphere_level_set(0.4), 75)


def test_sphere_area(sphere_mesh):
    assert sphere_mesh.total_area == pytest.approx(SPHERE_AREA, rel=0.02)


def test_sphere_normals_unit(sphere_mesh):
    norms = np.linalg.norm(sphere_mesh.normals, axis=1)
    assert np.allclose(norms, 1.0, atol=1e-12)


def test_sphere_normals_outward(sphere_mesh):
    ls = sphere_level_set(0.4)
    h = 1.0 / 74.0
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
    radial = sphere_mesh.centroids - 0.5
    dots = (sphere_mesh.normals * radial).sum(axis=1)
    assert np.all(dots > 0.0)


def test_sphere_closure(sphere_mesh):
    assert sphere_mesh.normal_closure() <= 1e-3


def test_sphere_positive_areas(sphere_mesh):
    assert np.all(sphere_mesh.areas > 0.0)


def test_centroids_near_isocontour(sphere_mesh):
    ls = sphere_level_set(0.4)
    phi_c = np.abs(ls(sphere_mesh.centroids))
    # |phi| at a centroid is bounded by its variation across one grid cell
    h = 1.0 / 74.0
    lipschitz = 2.0 * (0.5 * np.sqrt(3.0) + 0.4)  # max |grad phi| on the cube
    assert phi_c.max() <= lipschitz * h * np.sqrt(3.0)


def test_flat_plane_mesh():
    ls = LevelSet(lambda p: p[:, 2] - 0.5)
    mesh = marching_cubes(ls, 21)
    assert mesh.total_area == pytest.approx(1.0, abs=1e-6)
    assert np.allclose(mesh.normals, [0.0, 0.0, 1.0], atol=1e-12)


def test_branch_surface_count():
    mesh = marching_cubes(branch_level_set(), 75)
    assert abs(mesh.count - 33160) <= 0.02 * 33160


def test_no_sign_change_raises():
    ls = LevelSet(lambda p: np.ones(len(p)))
    with pytest.raises(EmptySurfaceError):
        marching_cubes(ls, 10)


def test_vertices_on_isocontour(sphere_mesh):
    radii = np.linalg.norm(sphere_mesh.vertices - 0.5, axis=1)
    # linear interpolation keeps vertices within O(h^2) of the exact sphere
    assert np.abs(radii - 0.4).max() < 2e-4


# ------------------------------------------------------------- partition

def test_partition_all_dirichlet(sphere_mesh):
    part = partition_boundary(sphere_mesh, lambda p: "dirichlet")
    assert part.neumann_or_robin.count == 0
    assert part.dirichlet.count == sphere_mesh.count


def test_partition_exhaustive_disjoint():
    mesh = marching_cubes(tabletop_level_set(), 40)
    part = partition_boundary(mesh, lambda p: "dirichlet" if p[2] < 0.5 else "robin")
    assert part.count == mesh.count


def test_partition_sphere_hemispheres(sphere_mesh):
    part = partition_boundary(
        sphere_mesh, lambda p: "dirichlet" if p[2] < 0.5 else "neumann"
    )
    a_d = part.dirichlet.total_area
    a_n = part.neumann_or_robin.total_area
    assert a_d == pytest.approx(a_n, rel=0.02)


# ------------------------------------------------------------- integrals

def test_integral_flat_plane_unity():
    ls = LevelSet(lambda p: p[:, 2] - 0.5)
    mesh = marching_cubes(ls, 21)
    assert surface_integral(mesh, lambda p: np.ones(len(p))) == pytest.approx(
        1.0, abs=1e-6
    )


def test_integral_sphere_area(sphere_mesh):
    val = surface_integral(sphere_mesh, lambda p: np.ones(len(p)))
    assert val == pytest.approx(SPHERE_AREA, rel=0.02)


def test_integral_zero(sphere_mesh):
    assert surface_integral(sphere_mesh, lambda p: np.zeros(len(p))) == 0.0


def test_integral_nonfinite_raises(sphere_mesh):
    def bad(p):
        v = np.ones(len(p))
        v[0] = np.nan
        return v

    with pytest.raises(FloatingPointError):
        surface_integral(sphere_mesh, bad)


# ------------------------------------------------------------- reference counts

@pytest.mark.parametrize(
    "make_ls,n_interior,n_surface",
    [
        (branch_level_set, 82537, 33160),
        (tabletop_level_set, 117486, 47720),
        (pipe_level_set, 83164, 45168),
    ],
    ids=["branch", "tabletop", "pipe"],
)
def test_reference_point_counts(make_ls, n_interior, n_surface):
    ls = make_ls()
    interior = interior_grid(ls, background_grid(75))
    tol_i = 0.01 if make_ls is branch_level_set else 0.02
    assert abs(interior.count - n_interior) <= tol_i * n_interior
    mesh = marching_cubes(ls, 75)
    assert abs(mesh.count - n_surface) <= 0.02 * n_surface


# ------------------------------------------------------------- circle boundary

def test_circle_boundary_arc_weights():
    quad = circle_boundary(500)
    assert quad.count == 500
    assert quad.total_area == pytest.approx(2 * np.pi, rel=1e-12)
    assert np.allclose(np.linalg.norm(quad.points, axis=1), 1.0)
    assert np.allclose((quad.points * quad.normals).sum(axis=1), 1.0)
