"""Legacy ASCII VTK writers for meshes and point-cloud fields.

Hand-inspectable output with zero dependencies: POLYDATA for triangulated
surfaces and UNSTRUCTURED_GRID vertex clouds for interior fields.
"""

from __future__ import annotations

import numpy as np

__all__ = ["write_polydata", "write_point_cloud"]


def _write_header(f, title: str, dataset: str):
    f.write("# vtk DataFile Version 2.0\n")
    f.write(f"{title}\n")
    f.write("ASCII\n")
    f.write(f"DATASET {dataset}\n")


def _as_points3(points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    if points.shape[1] == 3:
        return points
    padded = np.zeros((len(points), 3))
    padded[:, : points.shape[1]] = points
    return padded


def write_polydata(
    path,
    vertices: np.ndarray,
    faces: np.ndarray,
    cell_data: dict[str, np.ndarray] | None = None,
    title: str = "surface mesh",
):
    """Triangulated surface as POLYDATA with optional per-face scalar fields."""
    vertices = _as_points3(vertices)
    faces = np.asarray(faces, dtype=int)
    with open(path, "w") as f:
        _write_header(f, title, "POLYDATA")
        f.write(f"POINTS {len(vertices)} double\n")
        for p in vertices:
            f.write(f"{p[0]:.10g} {p[1]:.10g} {p[2]:.10g}\n")
        f.write(f"POLYGONS {len(faces)} {4 * len(faces)}\n")
        for a, b, c in faces:
            f.write(f"3 {a} {b} {c}\n")
        if cell_data:
            f.write(f"CELL_DATA {len(faces)}\n")
            for name, values in cell_data.items():
                values = np.asarray(values, dtype=float)
                if values.ndim == 1:
                    f.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                    for v in values:
                        f.write(f"{v:.10g}\n")
                else:
                    f.write(f"VECTORS {name} double\n")
                    for v in _as_points3(values):
                        f.write(f"{v[0]:.10g} {v[1]:.10g} {v[2]:.10g}\n")


def write_point_cloud(
    path,
    points: np.ndarray,
    point_data: dict[str, np.ndarray] | None = None,
    title: str = "point cloud",
):
    """Vertex cloud as UNSTRUCTURED_GRID with per-point scalars/vectors."""
    points = _as_points3(points)
    n = len(points)
    with open(path, "w") as f:
        _write_header(f, title, "UNSTRUCTURED_GRID")
        f.write(f"POINTS {n} double\n")
        for p in points:
            f.write(f"{p[0]:.10g} {p[1]:.10g} {p[2]:.10g}\n")
        f.write(f"CELLS {n} {2 * n}\n")
        for i in range(n):
            f.write(f"1 {i}\n")
        f.write(f"CELL_TYPES {n}\n")
        f.write("\n".join(["1"] * n) + "\n")
        if point_data:
            f.write(f"POINT_DATA {n}\n")
            for name, values in point_data.items():
                values = np.asarray(values, dtype=float)
                if values.ndim == 1 or values.shape[1] == 1:
                    flat = values.reshape(-1)
                    f.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                    for v in flat:
                        f.write(f"{v:.10g}\n")
                else:
                    f.write(f"VECTORS {name} double\n")
                    for v in _as_points3(values):
                        f.write(f"{v[0]:.10g} {v[1]:.10g} {v[2]:.10g}\n")
