"""
Dirichlet Solvers
Fixed-point iteration of the existence map T, Gauss-Seidel local solves,
label-setting for eikonal equations, and infeasibility diagnostics
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from .config import Scheme, SolverConfig
from .exceptions import GraphValidationError, SolverError, SpecError
from .graph_core import Graph, VertexField, connected_to_boundary, distance_to_boundary, field_values, require_valid
from .operators import (Coefficients, OperatorKind, OperatorSpec, homogeneity_weight, local_residual, make_spec,
                        residual_array, residual_norm, resolve)

logger = logging.getLogger(__name__)


class SolveStatus(str, Enum):
    CONVERGED = "converged"
    MAX_ITER = "max_iter"
    STAGNATED = "stagnated"
    INFEASIBLE_DETECTED = "infeasible_detected"


@dataclass
class SolveReport:
    solution: VertexField
    residual_inf_norm: float
    iterations: int
    status: SolveStatus
    residual_history: List[Tuple[int, float]] = field(default_factory=list)
    scheme: str = Scheme.FIXED_POINT_T.value
    diagnosis: Optional[str] = None
    residual_floor: Optional[float] = None
    lipschitz_constant: Optional[float] = None

    @property
    def converged(self) -> bool:
        return self.status is SolveStatus.CONVERGED

    def to_dict(self) -> Dict[str, Any]:
        """JSON document; the solution itself goes to a field CSV"""
        return {
            'status': self.status.value,
            'residual_inf_norm': self.residual_inf_norm,
            'iterations': self.iterations,
            'scheme': self.scheme,
            'diagnosis': self.diagnosis,
            'residual_floor': self.residual_floor,
            'lipschitz_constant': self.lipschitz_constant,
            'residual_history_points': len(self.residual_history),
        }

    def history_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.residual_history, columns=['iteration', 'residual'])


def _decimate(history: List[float], points: int) -> List[Tuple[int, float]]:
    if len(history) <= points:
        return [(i, r) for i, r in enumerate(history)]
    idx = np.unique(np.linspace(0, len(history) - 1, points).round().astype(int))
    return [(int(i), history[i]) for i in idx]


class _Monitor:
    """Stopping rules shared by the iterative solvers"""

    def __init__(self, config: SolverConfig):
        self.config = config
        self.history: List[float] = []
        self.best = math.inf
        self.best_at = 0

    def record(self, iteration: int, norm: float, values: np.ndarray) -> Optional[Tuple[SolveStatus, str]]:
        self.history.append(norm)
        if norm < self.best:
            self.best, self.best_at = norm, iteration
        if norm <= self.config.tolerance:
            return SolveStatus.CONVERGED, None
        if not np.all(np.isfinite(values)) or np.max(np.abs(values)) > self.config.divergence_bound:
            return SolveStatus.INFEASIBLE_DETECTED, "iterates left every bounded set"
        if iteration - self.best_at >= self.config.stagnation_window:
            return SolveStatus.STAGNATED, (f"no residual improvement over {self.config.stagnation_window} "
                                           f"iterations; floor {self.best:.6g}")
        if iteration >= self.config.max_iterations:
            return SolveStatus.MAX_ITER, None
        return None


def _config(config: Optional[SolverConfig], **overrides: Any) -> SolverConfig:
    config = config or SolverConfig()
    return config.model_copy(update=overrides) if overrides else config


def initial_guess(graph: Graph, gvals: np.ndarray, config: SolverConfig, initial: Optional[Any] = None) -> np.ndarray:
    """Boundary = g; interior from a warm start, the configured constant, or the midrange of g"""
    mask = graph.interior_mask
    if initial is not None:
        values = field_values(graph, initial)
    else:
        boundary = gvals[~mask]
        start = config.initial_value
        if start is None:
            start = (boundary.min() + boundary.max()) / 2
        values = np.full(graph.n, float(start))
    values[~mask] = gvals[~mask]
    return values


def fixed_point_constant(coeffs: Coefficients, graph: Graph) -> float:
    """L = max over interior x and neighbors y of W(x) w_xy, plus the zeroth-order coefficient"""
    weight = homogeneity_weight(coeffs)
    L = 0.0
    for block in graph.blocks:
        local = weight[block.rows] * block.weights.max(axis=1) + coeffs.lam[block.rows]
        L = max(L, float(local.max()))
    return L


def _apply_T(coeffs: Coefficients, graph: Graph, values: np.ndarray, gvals: np.ndarray, L: float,
             residual: Optional[np.ndarray] = None) -> np.ndarray:
    res = residual_array(coeffs, graph, values, gvals) if residual is None else residual
    out = values + res / L
    out[~graph.interior_mask] = gvals[~graph.interior_mask]
    return out


def fixed_point_map_T(spec: Union[OperatorSpec, Coefficients], graph: Graph, u: Any,
                      g: Optional[Any] = None) -> VertexField:
    """T(u) = u + F(u)/L on interior vertices, g on the boundary"""
    coeffs = spec if isinstance(spec, Coefficients) else resolve(spec, graph)
    L = fixed_point_constant(coeffs, graph)
    if L == 0:
        raise SolverError("L = 0: the operator ignores the gradient and any extension of g solves it")
    gvals = graph.boundary_array(g)
    return VertexField(graph.vertices, _apply_T(coeffs, graph, field_values(graph, u), gvals, L))


def _finish(graph: Graph, values: np.ndarray, monitor: _Monitor, iterations: int, status: SolveStatus,
            diagnosis: Optional[str], scheme: Scheme, L: Optional[float] = None) -> SolveReport:
    config = monitor.config
    report = SolveReport(
        solution=VertexField(graph.vertices, values),
        residual_inf_norm=monitor.history[-1],
        iterations=iterations,
        status=status,
        residual_history=_decimate(monitor.history, config.history_points),
        scheme=Scheme(scheme).value,
        diagnosis=diagnosis,
        residual_floor=monitor.best if status is not SolveStatus.CONVERGED else None,
        lipschitz_constant=L,
    )
    logger.info(f"{report.scheme}: {status.value} after {iterations} iterations, "
                f"residual {report.residual_inf_norm:.3e}")
    return report


def solve_fixed_point(spec: Union[OperatorSpec, Coefficients], graph: Graph, g: Optional[Any] = None,
                      config: Optional[SolverConfig] = None, initial: Optional[Any] = None) -> SolveReport:
    """Damped Picard iteration u <- (1 - theta) u + theta T(u)"""
    require_valid(graph)
    config = _config(config)
    coeffs = spec if isinstance(spec, Coefficients) else resolve(spec, graph)
    gvals = graph.boundary_array(g)
    values = initial_guess(graph, gvals, config, initial)
    monitor = _Monitor(config)
    L = fixed_point_constant(coeffs, graph)

    if L == 0:
        res = residual_array(coeffs, graph, values, gvals)
        status = monitor.record(0, residual_norm(graph, res), values)
        return _finish(graph, values, monitor, 0, status[0] if status and status[0] is SolveStatus.CONVERGED
                       else SolveStatus.STAGNATED, "L = 0: operator independent of the gradient",
                       Scheme.FIXED_POINT_T, L)

    check_range = config.debug_checks and not coeffs.has_source and not coeffs.has_lam
    low, high = values.min(), values.max()
    theta = config.damping
    mask = graph.interior_mask
    logger.info(f"Fixed-point solve: {len(graph.interior)} interior vertices, L = {L:g}, theta = {theta:g}")

    iteration = 0
    while True:
        res = residual_array(coeffs, graph, values, gvals)
        outcome = monitor.record(iteration, residual_norm(graph, res), values)
        if outcome is not None:
            return _finish(graph, values, monitor, iteration, outcome[0], outcome[1], Scheme.FIXED_POINT_T, L)
        values = np.where(mask, values + theta * res / L, gvals)
        iteration += 1
        if check_range:
            inner = values[mask]
            if inner.min() < low - 1e-12 * (1 + abs(low)) or inner.max() > high + 1e-12 * (1 + abs(high)):
                raise SolverError(f"iterate {iteration} left the range [{low}, {high}]")
        if iteration % 10000 == 0:
            logger.debug(f"iteration {iteration}: residual {monitor.history[-1]:.3e}")


# -- Gauss-Seidel ------------------------------------------------------------

def _breakpoints(weights: np.ndarray, nbr_values: np.ndarray) -> np.ndarray:
    """Values of u(x) where the order of the gradient entries can change"""
    wu = weights * nbr_values
    points = [nbr_values]
    dw = weights[:, None] - weights[None, :]
    i, j = np.nonzero(np.triu(dw != 0, k=1))
    if i.size:
        points.append((wu[i] - wu[j]) / (weights[i] - weights[j]))
    pts = np.unique(np.concatenate(points))
    return pts[np.isfinite(pts)]


def local_solve(coeffs: Coefficients, row: int, weights: np.ndarray, nbr_values: np.ndarray,
                current: float, vertex: str = "") -> float:
    """
    Solve phi(t) = 0 for the value at one interior vertex with neighbors frozen.

    phi is nonincreasing and piecewise linear in t. When its zero set is an
    interval, the current value is clipped into it.
    """
    def phi(ts: np.ndarray) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        P = weights[None, :] * (nbr_values[None, :] - ts[:, None])
        return local_residual(coeffs, np.full(len(ts), row), ts, P)

    b = _breakpoints(weights, nbr_values)
    vals = phi(b)
    span = max(1.0, float(np.max(np.abs(b))))

    def tail(edge: float, value: float, step: float) -> float:
        other = float(phi(np.array([edge + step]))[0])
        if other == value:
            raise SolverError("local equation has no root", vertex)
        return edge - value * step / (other - value)

    zeros = np.flatnonzero(vals == 0)
    if zeros.size:
        lo, hi = b[zeros[0]], b[zeros[-1]]
        if zeros[0] == 0 and phi(np.array([b[0] - span]))[0] == 0:
            lo = -math.inf
        if zeros[-1] == len(b) - 1 and phi(np.array([b[-1] + span]))[0] == 0:
            hi = math.inf
        return float(min(max(current, lo), hi))
    if vals[0] < 0:
        return tail(b[0], vals[0], -span)
    if vals[-1] > 0:
        return tail(b[-1], vals[-1], span)
    k = int(np.argmax(vals < 0))
    t0, t1, f0, f1 = b[k - 1], b[k], vals[k - 1], vals[k]
    return float(t0 + f0 * (t1 - t0) / (f0 - f1))


def solve_gauss_seidel(spec: Union[OperatorSpec, Coefficients], graph: Graph, g: Optional[Any] = None,
                       config: Optional[SolverConfig] = None, initial: Optional[Any] = None) -> SolveReport:
    """Sweep interior vertices in insertion order, solving each local equation exactly"""
    require_valid(graph)
    config = _config(config)
    coeffs = spec if isinstance(spec, Coefficients) else resolve(spec, graph)
    gvals = graph.boundary_array(g)
    values = initial_guess(graph, gvals, config, initial)
    monitor = _Monitor(config)
    theta = config.damping

    plan = []
    for x in graph.interior:
        ys = graph.neighbors(x)
        plan.append((x, graph.index[x], np.array([graph.index[y] for y in ys], dtype=int),
                     np.array([graph.adjacency[x][y] for y in ys], dtype=float)))
    logger.info(f"Gauss-Seidel solve: {len(plan)} interior vertices, theta = {theta:g}")

    sweep = 0
    while True:
        res = residual_array(coeffs, graph, values, gvals)
        outcome = monitor.record(sweep, residual_norm(graph, res), values)
        if outcome is not None:
            return _finish(graph, values, monitor, sweep, outcome[0], outcome[1], Scheme.GAUSS_SEIDEL_LOCAL)
        for x, row, nbr, w in plan:
            target = local_solve(coeffs, row, w, values[nbr], values[row], x)
            values[row] = target if theta == 1 else (1 - theta) * values[row] + theta * target
        sweep += 1


# -- eikonal -----------------------------------------------------------------

AUX_SUFFIX = "#aux"


def eikonal_auxiliary_graph(graph: Graph, g: np.ndarray, h: np.ndarray, shift: float, sign: str) -> Graph:
    """
    Rescaled, boundary-reduced graph whose distance to the boundary gives the solution.

    Interior weights become w_xy / h(x). A boundary vertex with shifted value
    g' != 0 turns interior with a single edge to a new boundary vertex at
    distance |g'|.
    """
    offsets = (g - shift) if sign == "minus" else (shift - g)
    vertices = list(graph.vertices)
    boundary = []
    edges = []
    for x in graph.vertices:
        i = graph.index[x]
        if x in graph.boundary:
            if offsets[i] == 0:
                boundary.append(x)
            else:
                aux = x + AUX_SUFFIX
                vertices.append(aux)
                boundary.append(aux)
                edges.append((x, aux, 1.0 / offsets[i]))
            continue
        for y in graph.neighbors(x):
            edges.append((x, y, graph.adjacency[x][y] / h[i]))
    return Graph.build(vertices, boundary, edges)


def solve_eikonal(graph: Graph, g: Optional[Any] = None, h: Optional[Any] = None, sign: str = "plus",
                  config: Optional[SolverConfig] = None) -> SolveReport:
    """
    Exact solution of |grad u|^+ = h (sign plus) or |grad u|^- = -h (sign minus)
    by shortest paths on the auxiliary graph.
    """
    if sign not in ("plus", "minus"):
        raise SpecError(f"sign must be 'plus' or 'minus', got {sign!r}")
    require_valid(graph)
    config = _config(config)
    ok, stranded = connected_to_boundary(graph)
    if not ok:
        raise GraphValidationError([f"not connected to boundary: {stranded}"])

    gvals = graph.boundary_array(g)
    mask = graph.interior_mask
    if h is None:
        hvals = np.ones(graph.n)
    elif np.isscalar(h):
        hvals = np.full(graph.n, float(h))
    else:
        hvals = field_values(graph, h) if not isinstance(h, dict) else np.array(
            [float(h.get(v, 1.0)) for v in graph.vertices])
    if np.any(hvals[mask] <= 0):
        bad = [x for x, hv in zip(graph.interior, hvals[mask]) if hv <= 0]
        raise SpecError(f"eikonal source must be positive on interior vertices; fails at {bad}")

    boundary = gvals[~mask]
    shift = min(0.0, float(boundary.min())) if sign == "minus" else max(0.0, float(boundary.max()))
    aux = eikonal_auxiliary_graph(graph, gvals, hvals, shift, sign)
    distance = distance_to_boundary(aux)[: graph.n]
    if not np.all(np.isfinite(distance)):
        raise GraphValidationError(["vertex disconnected from boundary in auxiliary graph"])

    values = distance + shift if sign == "minus" else shift - distance
    values[~mask] = gvals[~mask]

    if sign == "plus":
        spec = make_spec(OperatorKind.EIKONAL_PLUS, source=0.0)
        offset = hvals
    else:
        spec = make_spec(OperatorKind.EIKONAL_MINUS, source=0.0)
        offset = -hvals
    res = residual_array(resolve(spec, graph), graph, values, gvals)
    res = np.where(mask, res - offset, res)

    monitor = _Monitor(config)
    norm = residual_norm(graph, res)
    monitor.record(0, norm, values)
    status = SolveStatus.CONVERGED if norm <= config.tolerance else SolveStatus.STAGNATED
    diagnosis = None if status is SolveStatus.CONVERGED else "label-setting residual above tolerance (round-off)"
    return _finish(graph, values, monitor, 1, status, diagnosis, Scheme.EIKONAL_LABEL_SETTING)


def eikonal_source(coeffs: Coefficients, graph: Graph) -> Tuple[str, np.ndarray]:
    """Sign and positive source h of a spec that label-setting can solve"""
    mask = graph.interior_mask
    active = [n for n in ("w0", "w1", "lam") if np.any(getattr(coeffs, n)[mask])] + list(coeffs.custom)
    plus, minus = coeffs.wplus[mask], coeffs.wminus[mask]
    if active or (np.any(plus) and np.any(minus)):
        raise SpecError("label-setting needs a pure eikonal operator")
    if np.any(plus):
        if not np.all(plus == 1):
            raise SpecError("label-setting needs unit wplus")
        return "plus", coeffs.source
    if not np.all(minus == 1):
        raise SpecError("label-setting needs unit wminus")
    return "minus", -coeffs.source


def solve(spec: Union[OperatorSpec, Coefficients], graph: Graph, g: Optional[Any] = None,
          config: Optional[SolverConfig] = None, initial: Optional[Any] = None) -> SolveReport:
    """Dispatch on config.scheme"""
    config = _config(config)
    scheme = Scheme(config.scheme)
    if scheme is Scheme.GAUSS_SEIDEL_LOCAL:
        return solve_gauss_seidel(spec, graph, g, config, initial)
    if scheme is Scheme.EIKONAL_LABEL_SETTING:
        coeffs = spec if isinstance(spec, Coefficients) else resolve(spec, graph)
        sign, h = eikonal_source(coeffs, graph)
        return solve_eikonal(graph, g, h, sign, config)
    return solve_fixed_point(spec, graph, g, config, initial)


def detect_infeasibility(spec: Union[OperatorSpec, Coefficients], graph: Graph, g: Optional[Any] = None,
                         config: Optional[SolverConfig] = None, initial: Optional[Any] = None) -> SolveReport:
    """
    Run the configured iterative solver and flag a residual that stalls above
    a floor, or iterates that escape. A diagnostic, not a proof of nonexistence.
    """
    config = _config(config)
    if Scheme(config.scheme) is Scheme.EIKONAL_LABEL_SETTING:
        config = _config(config, scheme=Scheme.FIXED_POINT_T)
    report = solve(spec, graph, g, config, initial)
    if report.status is SolveStatus.STAGNATED:
        report.status = SolveStatus.INFEASIBLE_DETECTED
        report.diagnosis = f"residual stalled at floor {report.residual_floor:.6g}; {report.diagnosis}"
    if report.status is SolveStatus.INFEASIBLE_DETECTED:
        logger.warning(f"Infeasibility detected: {report.diagnosis}")
    return report
