"""
Finite-Difference Bridge
Grid graphs that realize finite-difference stencils, and consistency studies
for the second difference, upwind |u_x|, wide-stencil infinity Laplacian and
smallest-Hessian-eigenvalue schemes
"""

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .config import GraphPDEConfig
from .exceptions import UnknownNameError
from .graph_core import Graph, VertexField, geometric_grid, lattice_points
from .operators import eikonal_minus, eikonal_plus, inf_laplacian, laplacian

logger = logging.getLogger(__name__)

Fn1D = Callable[[np.ndarray], np.ndarray]
Fn2D = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class FunctionCase1D:
    u: Fn1D
    d2u: Fn1D
    du: Fn1D
    point: float


@dataclass(frozen=True)
class FunctionCase2D:
    u: Fn2D
    grad: Callable[[float, float], np.ndarray]
    hessian: Callable[[float, float], np.ndarray]
    center: Tuple[float, float]


FUNCTIONS_1D: Dict[str, FunctionCase1D] = {
    'linear': FunctionCase1D(lambda x: x, lambda x: 0 * x, lambda x: 1 + 0 * x, 0.0),
    'quadratic': FunctionCase1D(lambda x: x ** 2, lambda x: 2 + 0 * x, lambda x: 2 * x, 0.0),
    'quartic': FunctionCase1D(lambda x: x ** 4, lambda x: 12 * x ** 2, lambda x: 4 * x ** 3, 1.0),
    'sin': FunctionCase1D(np.sin, lambda x: -np.sin(x), np.cos, 1.0),
    'neg_abs': FunctionCase1D(lambda x: -np.abs(x), lambda x: 0 * x, lambda x: -np.sign(x), 0.0),
}

FUNCTIONS_2D: Dict[str, FunctionCase2D] = {
    'xsq': FunctionCase2D(lambda x, y: x ** 2,
                          lambda x, y: np.array([2 * x, 0.0]),
                          lambda x, y: np.array([[2.0, 0.0], [0.0, 0.0]]), (1.0, 0.0)),
    'linear': FunctionCase2D(lambda x, y: x + 2 * y,
                             lambda x, y: np.array([1.0, 2.0]),
                             lambda x, y: np.zeros((2, 2)), (0.0, 0.0)),
    'hyperbolic': FunctionCase2D(lambda x, y: x ** 2 - y ** 2,
                                 lambda x, y: np.array([2 * x, -2 * y]),
                                 lambda x, y: np.array([[2.0, 0.0], [0.0, -2.0]]), (1.0, 1.0)),
    'ellipse': FunctionCase2D(lambda x, y: x ** 2 + 4 * y ** 2,
                              lambda x, y: np.array([2 * x, 8 * y]),
                              lambda x, y: np.array([[2.0, 0.0], [0.0, 8.0]]), (0.0, 0.0)),
    'saddle': FunctionCase2D(lambda x, y: x * y,
                             lambda x, y: np.array([y, x]),
                             lambda x, y: np.array([[0.0, 1.0], [1.0, 0.0]]), (0.0, 0.0)),
}


def function_1d(name: str) -> FunctionCase1D:
    try:
        return FUNCTIONS_1D[name]
    except KeyError:
        raise UnknownNameError(f"unknown 1-D test function {name!r} (known: {sorted(FUNCTIONS_1D)})") from None


def function_2d(name: str) -> FunctionCase2D:
    try:
        return FUNCTIONS_2D[name]
    except KeyError:
        raise UnknownNameError(f"unknown 2-D test function {name!r} (known: {sorted(FUNCTIONS_2D)})") from None


# -- error tables ------------------------------------------------------------

def fit_order(steps: Sequence[float], errors: Sequence[float], floor: float = GraphPDEConfig.ROUNDOFF_FLOOR) -> float:
    """Least-squares slope of log error against log step; NaN when errors sit at round-off"""
    steps, errors = np.asarray(steps, dtype=float), np.asarray(errors, dtype=float)
    keep = errors > floor
    if keep.sum() < 2:
        return math.nan
    slope, _ = np.polyfit(np.log(steps[keep]), np.log(errors[keep]), 1)
    return float(slope)


def is_decreasing(errors: Sequence[float], floor: float = GraphPDEConfig.ROUNDOFF_FLOOR) -> bool:
    """Each error no larger than the previous one, up to the round-off floor"""
    errors = list(errors)
    return all(b <= max(a, floor) for a, b in zip(errors, errors[1:]))


def _table(steps: Sequence[float], values: Sequence[float], exact: float) -> pd.DataFrame:
    df = pd.DataFrame({'step': np.asarray(steps, dtype=float), 'value': np.asarray(values, dtype=float)})
    df['exact'] = exact
    df['error'] = (df['value'] - exact).abs()
    df['fitted_order'] = fit_order(df['step'], df['error'])
    return df


# -- 1-D schemes -------------------------------------------------------------

def second_difference(u: Fn1D, x0: float, h: float) -> float:
    return float((u(x0 + h) - 2 * u(x0) + u(x0 - h)) / h ** 2)


def second_difference_consistency(u: Fn1D, d2u: Fn1D, steps: Sequence[float], x0: float = 0.0) -> pd.DataFrame:
    """|(u(x+h) - 2u(x) + u(x-h))/h^2 - u''(x)| per step"""
    values = [second_difference(u, x0, h) for h in steps]
    return _table(steps, values, float(d2u(np.float64(x0))))


def abs_gradient_scheme(u: Fn1D, x0: float, h: float, sign: str = "plus") -> float:
    """Upwind (1/h) max (plus) or min (minus) of the one-sided differences"""
    left, right = u(x0 - h) - u(x0), u(x0 + h) - u(x0)
    pick = max if sign == "plus" else min
    return float(pick(right, left) / h)


def abs_gradient_consistency(u: Fn1D, du: Fn1D, steps: Sequence[float], x0: float = 0.0,
                             sign: str = "plus") -> pd.DataFrame:
    """Error of the monotone scheme for |u_x| (plus) or -|u_x| (minus)"""
    exact = abs(float(du(np.float64(x0))))
    if sign == "minus":
        exact = -exact
    values = [abs_gradient_scheme(u, x0, h, sign) for h in steps]
    return _table(steps, values, exact)


# -- 2-D schemes -------------------------------------------------------------

def circle_directions(count: int, half: bool = False) -> np.ndarray:
    """Unit vectors at equally spaced angles over [0, 2pi), or [0, pi) when half"""
    span = math.pi if half else 2 * math.pi
    theta = span * np.arange(count) / count
    return np.column_stack([np.cos(theta), np.sin(theta)])


def normalized_inf_laplacian(fn: FunctionCase2D, center: Sequence[float]) -> float:
    """<D2u grad u, grad u> / |grad u|^2"""
    grad = fn.grad(*center)
    norm2 = float(grad @ grad)
    if norm2 == 0:
        raise ValueError("normalized infinity Laplacian is undefined at a zero-gradient point")
    return float(grad @ fn.hessian(*center) @ grad / norm2)


def ball_scheme(u: Fn2D, center: Sequence[float], r: float, directions: int) -> float:
    """(max + min - 2u(x)) / r^2 over k points of the circle of radius r"""
    cx, cy = center
    dirs = circle_directions(directions)
    ring = u(cx + r * dirs[:, 0], cy + r * dirs[:, 1])
    return float((np.max(ring) + np.min(ring) - 2 * u(np.float64(cx), np.float64(cy))) / r ** 2)


def inf_laplacian_ball_consistency(fn: FunctionCase2D, radii: Sequence[float],
                                   directions: int = GraphPDEConfig.BALL_DIRECTIONS,
                                   center: Optional[Sequence[float]] = None) -> pd.DataFrame:
    """
    Ball-scheme estimate of the normalized infinity Laplacian per radius, with
    the angular-resolution part reported as the change under 4x more directions.
    """
    center = fn.center if center is None else tuple(center)
    exact = normalized_inf_laplacian(fn, center)
    values = [ball_scheme(fn.u, center, r, directions) for r in radii]
    fine = [ball_scheme(fn.u, center, r, 4 * directions) for r in radii]
    df = _table(radii, values, exact)
    df['directions'] = directions
    df['direction_error'] = np.abs(np.asarray(values) - np.asarray(fine))
    df['decreasing'] = is_decreasing(df['error'])
    return df


def lambda1_scheme(u: Fn2D, center: Sequence[float], h: float,
                   directions: int = GraphPDEConfig.LAMBDA1_DIRECTIONS) -> float:
    """Smallest directional second difference over angles pi*j/k"""
    if directions < 2:
        raise ValueError("lambda1 scheme needs at least 2 directions")
    cx, cy = center
    dirs = circle_directions(directions, half=True)
    forward = u(cx + h * dirs[:, 0], cy + h * dirs[:, 1])
    backward = u(cx - h * dirs[:, 0], cy - h * dirs[:, 1])
    second = (forward - 2 * u(np.float64(cx), np.float64(cy)) + backward) / h ** 2
    return float(np.min(second))


def lambda1_consistency(fn: FunctionCase2D, steps: Sequence[float],
                        directions: int = GraphPDEConfig.LAMBDA1_DIRECTIONS,
                        center: Optional[Sequence[float]] = None) -> pd.DataFrame:
    center = fn.center if center is None else tuple(center)
    exact = float(np.linalg.eigvalsh(fn.hessian(*center))[0])
    values = [lambda1_scheme(fn.u, center, h, directions) for h in steps]
    df = _table(steps, values, exact)
    df['directions'] = directions
    return df


# -- stencil grids -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StencilGrid:
    """Point set plus stencil directions; grid_to_graph turns it into a geometric graph"""

    dimension: int
    step: float
    directions: np.ndarray
    points: Tuple[Tuple[float, ...], ...]
    wide: bool = False

    @cached_property
    def graph(self) -> Graph:
        return grid_to_graph(self)

    @property
    def coordinates(self) -> Dict[str, Tuple[float, ...]]:
        return dict(self.graph.coordinates or {})

    def sample(self, u: Callable[..., np.ndarray]) -> VertexField:
        """Evaluate a test function at every vertex"""
        coords = self.graph.coordinates
        values = [float(u(*map(np.float64, coords[v]))) for v in self.graph.vertices]
        return VertexField(self.graph.vertices, values)


def stencil_grid(shape: Sequence[int], h: float, origin: Optional[Sequence[float]] = None) -> StencilGrid:
    """Axis stencil on a lattice of the given shape with spacing h"""
    dim = len(shape)
    base = np.zeros(dim) if origin is None else np.asarray(origin, dtype=float)
    points = tuple(tuple(base + np.asarray(p)) for p in lattice_points(shape, h))
    return StencilGrid(dim, h, h * np.eye(dim), points)


def ball_stencil(center: Sequence[float], r: float, directions: int = GraphPDEConfig.BALL_DIRECTIONS) -> StencilGrid:
    """Wide stencil: the center and k points on the circle of radius r"""
    if directions % 2:
        raise ValueError("ball stencil needs an even number of directions")
    c = np.asarray(center, dtype=float)
    half = r * circle_directions(directions)[: directions // 2]
    ring = [tuple(c + v) for v in half] + [tuple(c - v) for v in half]
    return StencilGrid(2, r, half, (tuple(c),) + tuple(ring), wide=True)


def grid_to_graph(stencil: StencilGrid) -> Graph:
    """Geometric graph of the stencil: neighbors x +/- v_j with weights 1/|v_j|"""
    return geometric_grid(stencil.directions, stencil.points, regular=True, independent=not stencil.wide)


# Factor that turns a graph operator on a stencil graph into the classical
# scheme value: the graph gradient carries one power of 1/h, second-order
# stencils carry two.
GRAPH_SCALING = {
    'laplacian': lambda h: 1.0 / h,
    'eikonal_plus': lambda h: 1.0,
    'eikonal_minus': lambda h: 1.0,
    'inf_laplacian': lambda h: 2.0 / h,
}

_GRAPH_OPERATORS = {
    'laplacian': laplacian,
    'eikonal_plus': eikonal_plus,
    'eikonal_minus': eikonal_minus,
    'inf_laplacian': inf_laplacian,
}


def graph_scheme_value(stencil: StencilGrid, u: Callable[..., np.ndarray], vertex: str, operator: str) -> float:
    """Graph operator at a stencil vertex, rescaled to the finite-difference scheme"""
    if operator not in _GRAPH_OPERATORS:
        raise UnknownNameError(f"no stencil scaling for operator {operator!r}")
    field = stencil.sample(u)
    raw = _GRAPH_OPERATORS[operator](stencil.graph, field, vertex)
    scale = GRAPH_SCALING[operator](stencil.step)
    return raw if scale == 1.0 else raw * scale


SCHEMES = ('second-diff', 'abs-gradient', 'abs-gradient-minus', 'inf-laplacian-ball', 'lambda1')


def run_consistency(scheme: str, function: str, steps: Sequence[float],
                    directions: Optional[int] = None) -> pd.DataFrame:
    """Dispatch a named consistency study"""
    if scheme == 'second-diff':
        fn = function_1d(function)
        return second_difference_consistency(fn.u, fn.d2u, steps, fn.point)
    if scheme in ('abs-gradient', 'abs-gradient-minus'):
        fn = function_1d(function)
        sign = "minus" if scheme.endswith("minus") else "plus"
        return abs_gradient_consistency(fn.u, fn.du, steps, fn.point, sign)
    if scheme == 'inf-laplacian-ball':
        fn = function_2d(function)
        return inf_laplacian_ball_consistency(fn, steps, directions or GraphPDEConfig.BALL_DIRECTIONS)
    if scheme == 'lambda1':
        fn = function_2d(function)
        return lambda1_consistency(fn, steps, directions or GraphPDEConfig.LAMBDA1_DIRECTIONS)
    raise UnknownNameError(f"unknown scheme {scheme!r} (known: {', '.join(SCHEMES)})")
