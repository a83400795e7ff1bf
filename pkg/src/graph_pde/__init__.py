"""
graph-pde
Pose, solve and verify nonlinear elliptic equations on weighted directed graphs
"""

from .config import VERSION, GraphPDEConfig, Scheme, SolverConfig

__version__ = VERSION

from .exceptions import (BoundaryVertexError, GraphPDEError, GraphValidationError, LemmaViolationError,
                         NotANeighborError, PreconditionError, SolverError, SpecError, UnknownNameError)
from .graph_core import (UNREACHABLE, Graph, VertexField, distance_to_boundary, geometric_grid, grid_graph,
                         load_field, load_graph, path_distance, path_graph, random_digraph, random_tree,
                         require_valid, save_field, save_graph, validate)
from .operators import (OperatorKind, OperatorSpec, classify_ellipticity, evaluate, gradient, homogeneity_check,
                        local_max_kind, make_spec, resolve)
from .solvers import (SolveReport, SolveStatus, detect_infeasibility, fixed_point_map_T, solve, solve_eikonal,
                      solve_fixed_point, solve_gauss_seidel)
from .verify import comparison_check, comparison_fuzz, counterexample_catalog, harnack_check, propagate_max
from .fd_bridge import run_consistency

__all__ = [
    "GraphPDEConfig",
    "Scheme",
    "SolverConfig",
    "GraphPDEError",
    "GraphValidationError",
    "NotANeighborError",
    "BoundaryVertexError",
    "SpecError",
    "SolverError",
    "PreconditionError",
    "UnknownNameError",
    "LemmaViolationError",
    "UNREACHABLE",
    "Graph",
    "VertexField",
    "validate",
    "require_valid",
    "path_distance",
    "distance_to_boundary",
    "geometric_grid",
    "grid_graph",
    "path_graph",
    "random_tree",
    "random_digraph",
    "load_graph",
    "save_graph",
    "load_field",
    "save_field",
    "OperatorKind",
    "OperatorSpec",
    "make_spec",
    "resolve",
    "gradient",
    "evaluate",
    "local_max_kind",
    "homogeneity_check",
    "classify_ellipticity",
    "SolveStatus",
    "SolveReport",
    "fixed_point_map_T",
    "solve_fixed_point",
    "solve_gauss_seidel",
    "solve_eikonal",
    "solve",
    "detect_infeasibility",
    "comparison_check",
    "propagate_max",
    "harnack_check",
    "counterexample_catalog",
    "comparison_fuzz",
    "run_consistency",
]
