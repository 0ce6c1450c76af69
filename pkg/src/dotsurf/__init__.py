"""Dynamic optimal transport on triangle meshes via a cone-constrained ALM."""

from .discretization import Discretization, TimeGrid, normalize_density
from .mesh import (
    MeshError,
    TriMesh,
    compute_geometry,
    generate_grid_mesh,
    generate_icosphere,
    load_mesh,
    validate_mesh,
)
from .solver import (
    Problem,
    SolverConfig,
    compute_residuals,
    extract_solution,
    init_state,
    solve_loop,
    step,
)

__version__ = "0.1.0"

__all__ = [
    "Discretization",
    "MeshError",
    "Problem",
    "SolverConfig",
    "TimeGrid",
    "TriMesh",
    "compute_geometry",
    "compute_residuals",
    "extract_solution",
    "generate_grid_mesh",
    "generate_icosphere",
    "init_state",
    "load_mesh",
    "normalize_density",
    "solve_loop",
    "step",
    "validate_mesh",
]
