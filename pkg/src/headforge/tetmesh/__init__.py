"""Tetrahedral grids, marching-tets extraction, mesh utilities and I/O."""
from .fitting import (
    FitReport,
    TemplateFitError,
    WindingAmbiguityError,
    fit_template,
    mesh_sdf,
    point_mesh_distance,
    sample_training_points,
    winding_numbers,
)
from .grid import TetGrid
from .io import MeshIOError, read_obj, read_ply, write_obj, write_ply
from .marching import marching_tets
from .mesh import SurfaceMesh, is_watertight, laplacian_energy
from .shapes import ellipsoid_sdf, flat_shaded, icosphere, sphere_sdf

__all__ = [
    "TetGrid", "marching_tets", "SurfaceMesh", "is_watertight", "laplacian_energy",
    "read_obj", "write_obj", "read_ply", "write_ply", "MeshIOError",
    "fit_template", "FitReport", "TemplateFitError", "WindingAmbiguityError",
    "mesh_sdf", "winding_numbers", "point_mesh_distance", "sample_training_points",
    "sphere_sdf", "ellipsoid_sdf", "icosphere", "flat_shaded",
]
