"""
Well-posedness Checks
Comparison principle, maximum-set propagation, Harnack-type dichotomy,
the counterexample catalog and randomized comparison fuzzing
"""

import logging
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from tqdm import tqdm

from .config import GraphPDEConfig, Scheme, SolverConfig
from .exceptions import GraphValidationError, LemmaViolationError, PreconditionError, UnknownNameError
from .graph_core import (Graph, VertexField, connected_to_boundary, field_values, graph_from_dict, grid_graph,
                         random_tree, save_field, save_graph)
from .operators import (Coefficients, HomogeneousPart, OperatorSpec, require_interior, gradient_entries,
                        residual_array, resolve)
from .solvers import SolveStatus, solve
from .utils import PathLike, write_json

logger = logging.getLogger(__name__)

SpecLike = Union[OperatorSpec, Coefficients]


def _coeffs(spec: SpecLike, graph: Graph) -> Coefficients:
    return spec if isinstance(spec, Coefficients) else resolve(spec, graph)


# -- comparison --------------------------------------------------------------

@dataclass
class ComparisonWitness:
    """Where max(u - v) is attained and how u behaves there"""

    M: float
    W: List[str]
    C: float
    Z: List[str]
    violating_vertex: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {'M': self.M, 'W': self.W, 'C': self.C, 'Z': self.Z, 'violating_vertex': self.violating_vertex}


@dataclass
class ComparisonResult:
    passed: bool
    witness: ComparisonWitness

    def to_dict(self) -> Dict[str, Any]:
        return {'passed': self.passed, 'witness': self.witness.to_dict()}


def max_set(graph: Graph, u: np.ndarray, v: np.ndarray) -> ComparisonWitness:
    """M = max(u - v), W = exact argmax set, C = max of u on W, Z = where u hits C on W"""
    diff = u - v
    M = float(diff.max())
    in_w = diff == M
    W = [x for x, hit in zip(graph.vertices, in_w) if hit]
    C = float(u[in_w].max())
    Z = [x for x in W if u[graph.index[x]] == C]
    return ComparisonWitness(M=M, W=W, C=C, Z=Z)


def _residual_ordering(coeffs: Coefficients, graph: Graph, u: np.ndarray, v: np.ndarray,
                       g: Optional[np.ndarray], tol: float, interior_only: bool = False) -> None:
    Fu = residual_array(coeffs, graph, u, g)
    Fv = residual_array(coeffs, graph, v, g)
    bad = Fu < Fv - tol
    if interior_only:
        bad &= graph.interior_mask
    if np.any(bad):
        vertices = [x for x, b in zip(graph.vertices, bad) if b]
        raise PreconditionError(f"F(u) >= F(v) fails at {vertices}", vertices)


def comparison_check(spec: SpecLike, graph: Graph, u: Any, v: Any, g: Optional[Any] = None,
                     tol: float = GraphPDEConfig.TOLERANCE) -> ComparisonResult:
    """
    Check F(u) >= F(v) everywhere implies u <= v everywhere for one pair.
    Raises PreconditionError when the hypothesis itself fails.
    """
    coeffs = _coeffs(spec, graph)
    uvals, vvals = field_values(graph, u), field_values(graph, v)
    gvals = graph.boundary_array(g)
    _residual_ordering(coeffs, graph, uvals, vvals, gvals, tol)

    boundary = ~graph.interior_mask
    if np.any(uvals[boundary] > vvals[boundary] + 2 * tol):
        raise PreconditionError("boundary ordering u <= v fails although F(u) >= F(v) on the boundary")

    witness = max_set(graph, uvals, vvals)
    passed = witness.M <= tol
    if not passed:
        interior_w = [x for x in witness.W if not graph.is_boundary(x)]
        witness.violating_vertex = (interior_w or witness.W)[0]
        logger.info(f"Comparison fails: M = {witness.M:.6g} at {witness.violating_vertex}")
    return ComparisonResult(passed, witness)


# -- maximum propagation -----------------------------------------------------

def active_neighbors(graph: Graph, u: Any, x: str) -> Tuple[str, ...]:
    """Every neighbor attaining the largest gradient entry"""
    require_interior(graph, x)
    P = gradient_entries(graph, field_values(graph, u), x)
    top = P.max()
    return tuple(y for y, p in zip(graph.neighbors(x), P) if p == top)


@dataclass
class PropagationTrace:
    M: float
    W: List[str]
    starts: List[str]
    steps: List[Tuple[str, str]] = field(default_factory=list)
    visited: List[str] = field(default_factory=list)
    reached_boundary: List[str] = field(default_factory=list)
    violations: List[Tuple[str, str]] = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return not self.violations

    def to_dict(self) -> Dict[str, Any]:
        return {'M': self.M, 'W': self.W, 'starts': self.starts,
                'steps': [list(s) for s in self.steps], 'visited': self.visited,
                'reached_boundary': self.reached_boundary,
                'violations': [list(s) for s in self.violations], 'holds': self.holds}


def propagate_max(spec: SpecLike, graph: Graph, u: Any, v: Any, g: Optional[Any] = None,
                  tol: float = GraphPDEConfig.TOLERANCE) -> PropagationTrace:
    """
    Breadth-first walk over active neighbors from every interior vertex of W.
    Every landing vertex must lie in W again; boundary vertices end a chain.
    """
    coeffs = _coeffs(spec, graph)
    mask = graph.interior_mask
    if np.any(coeffs.wplus[mask] <= 0):
        raise PreconditionError("operator needs wplus > 0 on every interior vertex")
    uvals, vvals = field_values(graph, u), field_values(graph, v)
    _residual_ordering(coeffs, graph, uvals, vvals, graph.boundary_array(g), tol, interior_only=True)
    witness = max_set(graph, uvals, vvals)
    if witness.M <= 0:
        raise PreconditionError(f"max(u - v) = {witness.M:.6g} is not positive")

    in_w = set(witness.W)
    starts = [x for x in witness.W if not graph.is_boundary(x)]
    trace = PropagationTrace(witness.M, witness.W, starts)
    seen = set(starts)
    queue = deque(starts)
    while queue:
        x = queue.popleft()
        trace.visited.append(x)
        for z in active_neighbors(graph, uvals, x):
            trace.steps.append((x, z))
            if z not in in_w:
                trace.violations.append((x, z))
                continue
            if graph.is_boundary(z):
                if z not in trace.reached_boundary:
                    trace.reached_boundary.append(z)
            elif z not in seen:
                seen.add(z)
                queue.append(z)

    if trace.violations:
        raise LemmaViolationError(f"active neighbors left W: {trace.violations}", trace)
    return trace


# -- Harnack-type dichotomy --------------------------------------------------

@dataclass
class HarnackResult:
    passed: bool
    branches: Dict[str, str]
    violations: List[str] = field(default_factory=list)
    indeterminate: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {'passed': self.passed, 'branches': self.branches,
                'violations': self.violations, 'indeterminate': self.indeterminate}


def harnack_check(spec: SpecLike, graph: Graph, u: Any, g: Optional[Any] = None,
                  tol: float = GraphPDEConfig.TOLERANCE, eps: float = GraphPDEConfig.EPS_STRICT) -> HarnackResult:
    """At every interior zero of a p-harmonious F: min grad < 0 < max grad, or grad = 0"""
    coeffs = _coeffs(spec, graph)
    mask = graph.interior_mask
    if (np.any(coeffs.wplus[mask] <= 0) or np.any(coeffs.wminus[mask] <= 0)
            or coeffs.has_lam or coeffs.has_source):
        raise PreconditionError("operator is not p-harmonious (needs wplus, wminus > 0 and no source)")

    values = field_values(graph, u)
    res = residual_array(coeffs, graph, values, graph.boundary_array(g))
    nonzero = [x for x in graph.interior if abs(res[graph.index[x]]) > tol]
    if nonzero:
        raise PreconditionError(f"residual is not zero at {nonzero}", nonzero)

    result = HarnackResult(True, {})
    for x in graph.interior:
        P = gradient_entries(graph, values, x)
        low, high = P.min(), P.max()
        if np.all(np.abs(P) <= eps):
            branch = "zero_gradient"
        elif low < -eps and high > eps:
            branch = "strict"
        elif low > eps or high < -eps:
            branch = "violated"
            result.violations.append(x)
        else:
            branch = "indeterminate"
            result.indeterminate.append(x)
        result.branches[x] = branch
    result.passed = not result.violations
    return result


# -- counterexample catalog --------------------------------------------------

K3_GRAPH: Dict[str, Any] = {
    "vertices": [
        {"id": "A", "boundary": False},
        {"id": "B", "boundary": False},
        {"id": "C", "boundary": True, "g": 0.0},
    ],
    "edges": [
        {"from": "A", "to": "B", "w": 1.0},
        {"from": "A", "to": "C", "w": 1.0},
        {"from": "B", "to": "C", "w": 1.0},
    ],
    "undirected": True,
}

K3_SPEC: Dict[str, Any] = {"kind": "eikonal_plus", "source": -1.0}

MEDIAN12_GRAPH: Dict[str, Any] = {
    "vertices": [
        {"id": "(1,1)", "boundary": False},
        {"id": "(-1,1)", "boundary": False},
        {"id": "(1,-1)", "boundary": False},
        {"id": "(-1,-1)", "boundary": False},
        {"id": "(1,2)", "boundary": True, "g": -1.0},
        {"id": "(-1,2)", "boundary": True, "g": -1.0},
        {"id": "(1,-2)", "boundary": True, "g": -1.0},
        {"id": "(-1,-2)", "boundary": True, "g": -1.0},
        {"id": "(2,1)", "boundary": True, "g": 1.0},
        {"id": "(-2,1)", "boundary": True, "g": 1.0},
        {"id": "(2,-1)", "boundary": True, "g": 1.0},
        {"id": "(-2,-1)", "boundary": True, "g": 1.0},
    ],
    "edges": [
        {"from": "(1,1)", "to": "(1,2)", "w": 1.0},
        {"from": "(1,1)", "to": "(2,1)", "w": 1.0},
        {"from": "(1,1)", "to": "(-1,1)", "w": 1.0},
        {"from": "(1,1)", "to": "(1,-1)", "w": 1.0},
        {"from": "(-1,1)", "to": "(-1,2)", "w": 1.0},
        {"from": "(-1,1)", "to": "(-2,1)", "w": 1.0},
        {"from": "(-1,1)", "to": "(-1,-1)", "w": 1.0},
        {"from": "(1,-1)", "to": "(1,-2)", "w": 1.0},
        {"from": "(1,-1)", "to": "(2,-1)", "w": 1.0},
        {"from": "(1,-1)", "to": "(-1,-1)", "w": 1.0},
        {"from": "(-1,-1)", "to": "(-1,-2)", "w": 1.0},
        {"from": "(-1,-1)", "to": "(-2,-1)", "w": 1.0},
    ],
    "undirected": True,
}

MEDIAN12_SPEC: Dict[str, Any] = {"kind": "one_laplacian"}

CATALOG_ALIASES = {
    'k3': 'k3_nonexistence',
    'k3_nonexistence': 'k3_nonexistence',
    'median12': 'median_nonuniqueness',
    'median_nonuniqueness': 'median_nonuniqueness',
}


@dataclass
class Counterexample:
    name: str
    graph: Graph
    spec: OperatorSpec
    expected: str
    graph_document: Dict[str, Any]
    fields: Dict[str, VertexField] = field(default_factory=dict)


def counterexample_catalog(name: str) -> Counterexample:
    key = CATALOG_ALIASES.get(name.strip().lower().replace("-", "_"))
    if key is None:
        raise UnknownNameError(f"unknown counterexample {name!r} (known: k3, median12)")
    if key == 'k3_nonexistence':
        graph = graph_from_dict(K3_GRAPH)
        return Counterexample(key, graph, OperatorSpec.model_validate(K3_SPEC),
                              SolveStatus.INFEASIBLE_DETECTED.value, K3_GRAPH)

    graph = graph_from_dict(MEDIAN12_GRAPH)
    fields = {}
    for label, c in (('u_plus', 1.0), ('v_minus', -1.0)):
        values = graph.boundary_array()
        values[graph.interior_mask] = c
        fields[label] = VertexField(graph.vertices, values)
    return Counterexample(key, graph, OperatorSpec.model_validate(MEDIAN12_SPEC),
                          "two distinct zero-residual fields", MEDIAN12_GRAPH, fields)


# -- comparison fuzzing ------------------------------------------------------

NO_THEOREM = "no theorem applies"


def applicable_theorem(coeffs: Coefficients, graph: Graph) -> str:
    """Which uniqueness theorem covers the operator, read off its coefficients"""
    mask = graph.interior_mask

    def positive(arr: np.ndarray) -> bool:
        return bool(np.all(arr[mask] > 0))

    if positive(coeffs.lam):
        return "proper"
    if not coeffs.has_lam:
        strict_sum = (coeffs.homogeneous is HomogeneousPart.LAPLACIAN and positive(coeffs.w0)) or (
            coeffs.homogeneous is HomogeneousPart.CUSTOM and 'laplacian' in coeffs.custom
            and positive(coeffs.custom['laplacian']))
        if strict_sum:
            return "uniformly_elliptic"
        if positive(coeffs.wplus) and positive(coeffs.wminus) and not coeffs.has_source:
            return "p_harmonious"
        if positive(coeffs.wplus) and positive(coeffs.source):
            return "positive_eikonal"
    return NO_THEOREM


def tree_family(rng: np.random.Generator) -> Graph:
    return random_tree(int(rng.integers(3, 9)), rng, weight_range=(0.5, 2.0))


def grid_family(rng: np.random.Generator) -> Graph:
    return grid_graph((int(rng.integers(3, 6)), int(rng.integers(3, 6))))


FAMILIES: Dict[str, Callable[[np.random.Generator], Graph]] = {
    'tree': tree_family,
    'grid': grid_family,
}


@dataclass
class FuzzReport:
    theorem: str
    trials: int
    violations: List[Dict[str, Any]] = field(default_factory=list)
    unconverged: int = 0
    max_excess: float = float('-inf')

    @property
    def passed(self) -> bool:
        return self.theorem == NO_THEOREM or (not self.violations and self.unconverged == 0)

    def to_dict(self) -> Dict[str, Any]:
        return {'theorem': self.theorem, 'trials': self.trials, 'passed': self.passed,
                'violations': self.violations, 'unconverged': self.unconverged,
                'max_excess': self.max_excess}


def save_bundle(directory: PathLike, graph: Graph, fields: Dict[str, Any], meta: Dict[str, Any]) -> str:
    """Graph JSON plus one field CSV per named field"""
    out = Path(directory)
    save_graph(graph, out / "graph.json")
    for name, values in fields.items():
        save_field(graph, values, out / f"{name}.csv")
    write_json(meta, out / "bundle.json")
    return str(out)


def comparison_fuzz(spec: OperatorSpec, family: Union[str, Callable[[np.random.Generator], Graph]] = "tree",
                    trials: int = GraphPDEConfig.FUZZ_TRIALS, seed: Optional[int] = None,
                    config: Optional[SolverConfig] = None, margin: float = 2 * GraphPDEConfig.TOLERANCE,
                    threads: Optional[int] = None, output_dir: Optional[PathLike] = None,
                    progress: bool = False) -> FuzzReport:
    """
    Solve with ordered boundary data g1 <= g2 on random graphs and check u1 <= u2 + margin.
    Operators covered by no uniqueness theorem are run but labeled as such.
    A covered operator fails when any trial violates the order or does not converge.
    """
    if isinstance(family, str):
        if family not in FAMILIES:
            raise UnknownNameError(f"unknown graph family {family!r} (known: {sorted(FAMILIES)})")
        family = FAMILIES[family]
    config = config or SolverConfig(tolerance=1e-12, scheme=Scheme.GAUSS_SEIDEL_LOCAL,
                                    max_iterations=10**5)
    seeds = np.random.SeedSequence(GraphPDEConfig.DEFAULT_SEED if seed is None else seed).spawn(trials)

    def trial(index: int) -> Dict[str, Any]:
        rng = np.random.default_rng(seeds[index])
        graph = family(rng)
        ok, stranded = connected_to_boundary(graph)
        if not ok:
            raise GraphValidationError([f"generated graph not connected to boundary: {stranded}"])
        coeffs = resolve(spec, graph)
        mask = graph.interior_mask
        g1 = np.where(mask, 0.0, rng.uniform(-1.0, 1.0, graph.n))
        bump = rng.uniform(0.0, 1.0, graph.n) * (rng.random() >= 0.25)
        g2 = np.where(mask, 0.0, g1 + bump)
        r1 = solve(coeffs, graph, g1, config)
        r2 = solve(coeffs, graph, g2, config)
        outcome = {'index': index, 'graph': graph, 'coeffs': coeffs, 'g1': g1, 'g2': g2,
                   'converged': r1.converged and r2.converged}
        if outcome['converged']:
            diff = r1.solution.values - r2.solution.values
            i = int(np.argmax(diff))
            outcome.update(excess=float(diff[i]), vertex=graph.vertices[i],
                           u1=r1.solution.values, u2=r2.solution.values)
        return outcome

    theorem = NO_THEOREM
    if trials:
        first = family(np.random.default_rng(seeds[0]))
        theorem = applicable_theorem(resolve(spec, first), first)
    report = FuzzReport(theorem, trials)
    workers = GraphPDEConfig.threads(threads)
    logger.info(f"Comparison fuzz: {trials} trials, theorem: {theorem}, {workers} worker(s)")

    with ThreadPoolExecutor(max_workers=workers) as pool:
        outcomes = list(tqdm(pool.map(trial, range(trials)), total=trials, desc="comparison fuzz",
                             disable=not progress))

    for outcome in outcomes:
        if not outcome['converged']:
            report.unconverged += 1
            continue
        report.max_excess = max(report.max_excess, outcome['excess'])
        if outcome['excess'] > margin:
            entry = {'trial': outcome['index'], 'vertex': outcome['vertex'], 'excess': outcome['excess']}
            if output_dir is not None:
                entry['bundle'] = save_bundle(
                    Path(output_dir) / f"trial_{outcome['index']:04d}", outcome['graph'],
                    {'g1': outcome['g1'], 'g2': outcome['g2'], 'u1': outcome['u1'], 'u2': outcome['u2']},
                    {'spec': spec.to_dict(), 'theorem': theorem, **{k: v for k, v in entry.items()}})
            report.violations.append(entry)

    if report.violations and theorem != NO_THEOREM:
        logger.error(f"Comparison violated in {len(report.violations)} of {trials} trials")
    else:
        logger.info(f"Comparison fuzz done: max excess {report.max_excess:.3e}, unconverged {report.unconverged}")
    return report
