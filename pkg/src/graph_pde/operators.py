"""
Graph Operators
Gradient, eikonal, infinity-Laplacian, median and p-harmonious operators,
the declarative OperatorSpec, and randomized structure checks
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator

from .config import GraphPDEConfig
from .exceptions import BoundaryVertexError, SpecError, UnknownNameError
from .graph_core import Graph, VertexField, field_values
from .utils import PathLike, make_rng, read_json, write_json

logger = logging.getLogger(__name__)

FieldLike = Union[float, Dict[str, float]]


# -- gradient ----------------------------------------------------------------

@dataclass(frozen=True)
class GradientVector:
    """Tangent vector at x: one weighted first difference per neighbor, in neighbor order"""

    vertex: str
    neighbors: Tuple[str, ...]
    entries: np.ndarray

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(float(p) for p in self.entries)

    def __getitem__(self, i: int) -> float:
        return float(self.entries[i])

    def as_tuple(self) -> Tuple[float, ...]:
        return tuple(float(p) for p in self.entries)


def require_interior(graph: Graph, x: str) -> None:
    if graph.is_boundary(x):
        raise BoundaryVertexError(x)
    if x not in graph.index:
        raise KeyError(f"unknown vertex {x!r}")


def gradient_entries(graph: Graph, values: np.ndarray, x: str) -> np.ndarray:
    ys = graph.neighbors(x)
    idx = np.array([graph.index[y] for y in ys], dtype=int)
    w = np.array([graph.adjacency[x][y] for y in ys], dtype=float)
    return w * (values[idx] - values[graph.index[x]])


def gradient(graph: Graph, u: Any, x: str) -> GradientVector:
    require_interior(graph, x)
    entries = gradient_entries(graph, field_values(graph, u), x)
    entries.setflags(write=False)
    return GradientVector(x, graph.neighbors(x), entries)


# Row-wise reductions over gradient batches of shape (m, d). Every operator,
# single-vertex or vectorized, goes through these so the results agree bitwise.

def _plus(P: np.ndarray) -> np.ndarray:
    return np.max(P, axis=-1)


def _minus(P: np.ndarray) -> np.ndarray:
    return np.min(P, axis=-1)


def _median(P: np.ndarray) -> np.ndarray:
    return np.median(P, axis=-1)


def _sum(P: np.ndarray) -> np.ndarray:
    """Sum over sorted entries so the result does not depend on neighbor order"""
    return np.sum(np.sort(P, axis=-1), axis=-1)


def _inf_lap(P: np.ndarray) -> np.ndarray:
    return (_plus(P) + _minus(P)) / 2


def _at_vertex(graph: Graph, u: Any, x: str, reduce) -> float:
    require_interior(graph, x)
    P = gradient_entries(graph, field_values(graph, u), x)
    return float(reduce(P[np.newaxis, :])[0])


def laplacian(graph: Graph, u: Any, x: str) -> float:
    """Sum of the gradient entries"""
    return _at_vertex(graph, u, x, _sum)


def eikonal_plus(graph: Graph, u: Any, x: str) -> float:
    return _at_vertex(graph, u, x, _plus)


def eikonal_minus(graph: Graph, u: Any, x: str) -> float:
    return _at_vertex(graph, u, x, _minus)


def inf_laplacian(graph: Graph, u: Any, x: str) -> float:
    return _at_vertex(graph, u, x, _inf_lap)


def one_laplacian(graph: Graph, u: Any, x: str) -> float:
    """Median of the gradient entries; even length takes the mean of the two middle values"""
    return _at_vertex(graph, u, x, _median)


# -- vector order and local maxima -------------------------------------------

def vector_lt(p: Sequence[float], q: Sequence[float]) -> bool:
    """Strict vector order: componentwise <= and strict in at least one component"""
    p, q = np.asarray(p), np.asarray(q)
    return bool(np.all(p <= q) and np.any(p < q))


class LocalMaxKind(str, Enum):
    NONE = "none"                        # some neighbor is higher
    FLAT = "flat"                        # every gradient entry is 0
    VECTOR_STRICT = "vector_strict"      # grad <= 0, some entry < 0, some = 0
    STRICT = "strict"                    # every gradient entry < 0


def local_max_kind(graph: Graph, u: Any, x: str) -> LocalMaxKind:
    """Classify x as a local maximum of u under both strictness notions"""
    P = gradient(graph, u, x).entries
    if np.any(P > 0):
        return LocalMaxKind.NONE
    if np.all(P < 0):
        return LocalMaxKind.STRICT
    if np.any(P < 0):
        return LocalMaxKind.VECTOR_STRICT
    return LocalMaxKind.FLAT


# -- operator spec -----------------------------------------------------------

class OperatorKind(str, Enum):
    LAPLACIAN = "laplacian"
    EIKONAL_PLUS = "eikonal_plus"
    EIKONAL_MINUS = "eikonal_minus"
    INF_LAPLACIAN = "inf_laplacian"
    ONE_LAPLACIAN = "one_laplacian"
    P_HARMONIOUS = "p_harmonious"
    NORMALIZED_P = "normalized_p"
    POSITIVE_EIKONAL = "positive_eikonal"
    TRIVIAL = "trivial"


class HomogeneousPart(str, Enum):
    NONE = "none"
    LAPLACIAN = "laplacian"
    MEDIAN = "median"
    CUSTOM = "custom"


CUSTOM_TERMS = {
    'laplacian': _sum,
    'median': _median,
    'plus': _plus,
    'minus': _minus,
}


def parse_kind(name: str) -> OperatorKind:
    """Accept CLI spellings such as 'eikonal-plus' or 'normalized-p'"""
    key = name.strip().lower().replace("-", "_")
    try:
        return OperatorKind(key)
    except ValueError:
        known = ", ".join(k.value.replace("_", "-") for k in OperatorKind)
        raise UnknownNameError(f"unknown operator {name!r} (known: {known})") from None


class OperatorSpec(BaseModel):
    """
    Declarative description of F.

    Interior residual:
        F(u)(x) = f(x, grad u) + w1*median + wplus*max + wminus*min - lam*u(x) - source(x)
    where f is the homogeneous part (w0/d(x) * sum, w0 * median, or a
    nonnegative custom combination bounded by w0). Boundary residual is g - u.
    Coefficients are constants or per-vertex mappings; None means the kind default.
    For kind trivial the residual is -u - source, i.e. g - u with source = -g.
    """

    model_config = ConfigDict(frozen=True, extra="forbid", use_enum_values=False)

    kind: OperatorKind
    p: Optional[float] = None
    w0: Optional[FieldLike] = None
    w1: Optional[FieldLike] = None
    wplus: Optional[FieldLike] = None
    wminus: Optional[FieldLike] = None
    lam: Optional[FieldLike] = None
    source: Optional[FieldLike] = None
    homogeneous_part: Optional[HomogeneousPart] = None
    custom_terms: Optional[Dict[str, FieldLike]] = None

    @field_validator("kind", mode="before")
    @classmethod
    def _kind_alias(cls, value: Any) -> Any:
        return parse_kind(value) if isinstance(value, str) else value

    @field_validator("p", mode="before")
    @classmethod
    def _parse_p(cls, value: Any) -> Any:
        if isinstance(value, str) and value.strip().lower() in ("inf", "infinity", "+inf"):
            return math.inf
        return value

    @field_validator("p")
    @classmethod
    def _p_range(cls, value: Optional[float]) -> Optional[float]:
        if value is not None and not value >= 1:
            raise ValueError("p must satisfy 1 <= p <= inf")
        return value

    @field_validator("custom_terms")
    @classmethod
    def _known_terms(cls, value: Optional[Dict[str, FieldLike]]) -> Optional[Dict[str, FieldLike]]:
        if value is not None:
            unknown = sorted(set(value) - set(CUSTOM_TERMS))
            if unknown:
                raise ValueError(f"unknown custom terms {unknown}; allowed: {sorted(CUSTOM_TERMS)}")
        return value

    def to_dict(self) -> Dict[str, Any]:
        data = self.model_dump(mode="json", exclude_none=True)
        if self.p is not None and math.isinf(self.p):
            data['p'] = "inf"
        return data


def conjugate_exponent(p: float) -> float:
    """Hoelder conjugate q with 1/p + 1/q = 1"""
    if math.isinf(p):
        return 1.0
    if p == 1:
        return math.inf
    return p / (p - 1)


def normalized_p_weights(p: float) -> Tuple[float, float]:
    """(w1, wplus = wminus) of the normalized p-Laplacian"""
    q = conjugate_exponent(p)
    w1 = 0.0 if math.isinf(p) else 1.0 / p
    w_pm = 0.0 if math.isinf(q) else 1.0 / (2 * q)
    return w1, w_pm


@dataclass(frozen=True)
class Coefficients:
    """An OperatorSpec resolved against one graph: full-length coefficient arrays"""

    kind: OperatorKind
    homogeneous: HomogeneousPart
    w0: np.ndarray
    w1: np.ndarray
    wplus: np.ndarray
    wminus: np.ndarray
    lam: np.ndarray
    source: np.ndarray
    custom: Mapping[str, np.ndarray] = field(default_factory=dict)
    p: Optional[float] = None

    @property
    def has_source(self) -> bool:
        return bool(np.any(self.source != 0))

    @property
    def has_lam(self) -> bool:
        return bool(np.any(self.lam != 0))


def _field_array(graph: Graph, value: Optional[FieldLike], default: Any, name: str) -> np.ndarray:
    if value is None:
        arr = np.array(default, dtype=float) * np.ones(graph.n)
    elif isinstance(value, Mapping):
        unknown = [k for k in value if k not in graph.index]
        if unknown:
            raise SpecError(f"{name}: unknown vertices {unknown}")
        missing = [x for x in graph.interior if x not in value]
        if missing:
            raise SpecError(f"{name}: no value for interior vertices {missing}")
        arr = np.zeros(graph.n)
        for k, v in value.items():
            arr[graph.index[k]] = float(v)
    else:
        arr = np.full(graph.n, float(value))
    interior = arr[graph.interior_mask]
    if not np.all(np.isfinite(interior)):
        raise SpecError(f"{name}: coefficients must be finite")
    return arr


def resolve(spec: OperatorSpec, graph: Graph) -> Coefficients:
    """Apply kind defaults and check the coefficient invariants on interior vertices"""
    kind = spec.kind
    degrees = graph.degrees.astype(float)
    zero = 0.0
    w0_default: Any = zero
    w1_default, wplus_default, wminus_default = zero, zero, zero
    lam_default, source_default = zero, zero
    homogeneous = HomogeneousPart.NONE

    if kind is OperatorKind.LAPLACIAN:
        homogeneous = HomogeneousPart.LAPLACIAN
        w0_default = degrees
    elif kind is OperatorKind.EIKONAL_PLUS:
        wplus_default = 1.0
    elif kind is OperatorKind.EIKONAL_MINUS:
        wminus_default = 1.0
    elif kind is OperatorKind.INF_LAPLACIAN:
        wplus_default = wminus_default = 0.5
    elif kind is OperatorKind.ONE_LAPLACIAN:
        w1_default = 1.0
    elif kind is OperatorKind.P_HARMONIOUS:
        wplus_default = wminus_default = 0.5
    elif kind is OperatorKind.NORMALIZED_P:
        if spec.p is None:
            raise SpecError("normalized_p requires p")
        w1_default, wplus_default = normalized_p_weights(spec.p)
        wminus_default = wplus_default
    elif kind is OperatorKind.POSITIVE_EIKONAL:
        wplus_default = 1.0
        source_default = 1.0
    elif kind is OperatorKind.TRIVIAL:
        lam_default = 1.0

    if spec.homogeneous_part is not None:
        homogeneous = spec.homogeneous_part
    if spec.custom_terms is not None:
        if spec.homogeneous_part not in (None, HomogeneousPart.CUSTOM):
            raise SpecError("custom_terms require homogeneous_part 'custom'")
        homogeneous = HomogeneousPart.CUSTOM
    if homogeneous is HomogeneousPart.CUSTOM and spec.custom_terms is None:
        raise SpecError("homogeneous_part 'custom' requires custom_terms")
    if homogeneous is HomogeneousPart.MEDIAN and kind is not OperatorKind.LAPLACIAN and spec.w0 is None:
        w0_default = 1.0
    if homogeneous is HomogeneousPart.LAPLACIAN and kind is not OperatorKind.LAPLACIAN and spec.w0 is None:
        w0_default = degrees

    coeffs = Coefficients(
        kind=kind,
        homogeneous=homogeneous,
        w0=_field_array(graph, spec.w0, w0_default, "w0"),
        w1=_field_array(graph, spec.w1, w1_default, "w1"),
        wplus=_field_array(graph, spec.wplus, wplus_default, "wplus"),
        wminus=_field_array(graph, spec.wminus, wminus_default, "wminus"),
        lam=_field_array(graph, spec.lam, lam_default, "lam"),
        source=_field_array(graph, spec.source, source_default, "source"),
        custom={name: _field_array(graph, c, 0.0, f"custom_terms.{name}")
                for name, c in (spec.custom_terms or {}).items()},
        p=spec.p,
    )
    _check_coefficients(coeffs, graph)
    return coeffs


def _check_coefficients(coeffs: Coefficients, graph: Graph) -> None:
    mask = graph.interior_mask
    for name in ("w0", "w1", "wplus", "wminus", "lam"):
        arr = getattr(coeffs, name)[mask]
        if np.any(arr < 0):
            bad = [x for x, a in zip(graph.interior, arr) if a < 0]
            raise SpecError(f"{name} must be nonnegative on interior vertices; negative at {bad}")
    for name, arr in coeffs.custom.items():
        if np.any(arr[mask] < 0):
            raise SpecError(f"custom term {name} must have a nonnegative coefficient")

    if coeffs.kind is OperatorKind.P_HARMONIOUS:
        if np.any(coeffs.wplus[mask] <= 0) or np.any(coeffs.wminus[mask] <= 0):
            raise SpecError("p_harmonious requires wplus > 0 and wminus > 0 on interior vertices")
    if coeffs.kind is OperatorKind.POSITIVE_EIKONAL:
        if np.any(coeffs.wplus[mask] <= 0) or np.any(coeffs.source[mask] <= 0):
            raise SpecError("positive_eikonal requires wplus > 0 and source > 0 on interior vertices")


def make_spec(kind: Union[str, OperatorKind], **fields: Any) -> OperatorSpec:
    """Convenience constructor, e.g. make_spec('normalized-p', p=4)"""
    if isinstance(kind, str):
        kind = parse_kind(kind)
    return OperatorSpec(kind=kind, **fields)


def load_spec(path: PathLike) -> OperatorSpec:
    try:
        return OperatorSpec.model_validate(read_json(path))
    except ValidationError as e:
        raise SpecError(f"{path}: {e}") from e


def save_spec(spec: OperatorSpec, path: PathLike) -> str:
    return write_json(spec.to_dict(), path)


# -- residual ----------------------------------------------------------------

def _homogeneous_value(coeffs: Coefficients, rows: np.ndarray, P: np.ndarray) -> np.ndarray:
    part = coeffs.homogeneous
    if part is HomogeneousPart.NONE:
        return np.zeros(P.shape[0])
    if part is HomogeneousPart.LAPLACIAN:
        return coeffs.w0[rows] / P.shape[-1] * _sum(P)
    if part is HomogeneousPart.MEDIAN:
        return coeffs.w0[rows] * _median(P)
    total = np.zeros(P.shape[0])
    for name, c in coeffs.custom.items():
        total = total + c[rows] * CUSTOM_TERMS[name](P)
    return total


def local_operator(coeffs: Coefficients, rows: np.ndarray, P: np.ndarray) -> np.ndarray:
    """u-independent part of the interior residual for gradient batch P (m, d)"""
    value = _homogeneous_value(coeffs, rows, P)
    if np.any(coeffs.w1[rows]):
        value = value + coeffs.w1[rows] * _median(P)
    plus, minus = coeffs.wplus[rows], coeffs.wminus[rows]
    if np.any(plus) or np.any(minus):
        if np.array_equal(plus, minus):
            value = value + 2 * plus * _inf_lap(P)
        else:
            value = value + plus * _plus(P) + minus * _minus(P)
    return value


def local_residual(coeffs: Coefficients, rows: np.ndarray, r: np.ndarray, P: np.ndarray) -> np.ndarray:
    """f(x, r, p) for a batch of interior rows"""
    return local_operator(coeffs, rows, P) - coeffs.lam[rows] * r - coeffs.source[rows]


def residual_array(coeffs: Coefficients, graph: Graph, values: np.ndarray,
                   g: Optional[np.ndarray] = None) -> np.ndarray:
    """Full residual vector: f on interior vertices, g - u on the boundary"""
    gvals = graph.boundary_array() if g is None else g
    out = np.where(graph.interior_mask, 0.0, gvals - values)
    for block in graph.blocks:
        P = block.weights * (values[block.neighbors] - values[block.rows][:, np.newaxis])
        out[block.rows] = local_residual(coeffs, block.rows, values[block.rows], P)
    return out


def evaluate(spec: Union[OperatorSpec, Coefficients], graph: Graph, u: Any, g: Optional[Any] = None) -> VertexField:
    """Residual F(u); zero everywhere exactly when u solves the Dirichlet problem"""
    coeffs = spec if isinstance(spec, Coefficients) else resolve(spec, graph)
    gvals = None if g is None else graph.boundary_array(g)
    return VertexField(graph.vertices, residual_array(coeffs, graph, field_values(graph, u), gvals))


def residual_norm(graph: Graph, residual: np.ndarray) -> float:
    """Infinity norm over interior vertices"""
    interior = np.abs(residual[graph.interior_mask])
    return float(interior.max()) if interior.size else 0.0


def homogeneity_weight(coeffs: Coefficients) -> np.ndarray:
    """w0 + w1 + wplus + wminus: the sandwich bound of the whole operator"""
    return coeffs.w0 + coeffs.w1 + coeffs.wplus + coeffs.wminus


# -- randomized structure checks ---------------------------------------------

@dataclass
class HomogeneityResult:
    passed: bool
    trials: int
    vertex: Optional[str] = None
    p: Optional[List[float]] = None
    value: Optional[float] = None
    bounds: Optional[Tuple[float, float]] = None

    def to_dict(self) -> Dict[str, Any]:
        return {'passed': self.passed, 'trials': self.trials, 'vertex': self.vertex,
                'p': self.p, 'value': self.value,
                'bounds': list(self.bounds) if self.bounds else None}


def homogeneity_check(spec: Union[OperatorSpec, Coefficients], graph: Graph, trials: int = 1000,
                      seed: Optional[int] = None) -> HomogeneityResult:
    """Sample gradients and test w0*min(p) <= f(x, p) <= w0*max(p) for the homogeneous part f"""
    coeffs = spec if isinstance(spec, Coefficients) else resolve(spec, graph)
    rng = make_rng(seed)
    low, high = GraphPDEConfig.SAMPLE_RANGE
    for block in graph.blocks:
        for row in block.rows:
            rows = np.full(trials, row)
            P = rng.uniform(low, high, size=(trials, block.degree))
            # constant gradients hit the sandwich with equality
            P[: max(1, trials // 10)] = rng.uniform(low, high, size=(max(1, trials // 10), 1))
            f = _homogeneous_value(coeffs, rows, P)
            lower = coeffs.w0[row] * _minus(P)
            upper = coeffs.w0[row] * _plus(P)
            slack = 1e-12 * (1 + np.abs(upper) + np.abs(lower))
            bad = np.flatnonzero((f < lower - slack) | (f > upper + slack))
            if bad.size:
                i = bad[0]
                x = graph.vertices[row]
                logger.debug(f"Homogeneity bound fails at {x}")
                return HomogeneityResult(False, trials, x, P[i].tolist(), float(f[i]),
                                         (float(lower[i]), float(upper[i])))
    return HomogeneityResult(True, trials)


ELLIPTICITY_PROPERTIES = ("elliptic", "proper", "uniformly_elliptic", "weak_combined")

# (r > s strictly, p < q strictly in vector order, conclusion strict)
_PROPERTY_SHAPES = {
    'elliptic': (False, False, False),
    'proper': (True, False, True),
    'uniformly_elliptic': (False, True, True),
    'weak_combined': (True, True, True),
}


@dataclass
class PropertyResult:
    name: str
    trials: int
    violations: int = 0
    indeterminate: int = 0
    example: Optional[Dict[str, Any]] = None

    @property
    def holds(self) -> bool:
        return self.violations == 0

    @property
    def label(self) -> str:
        if self.violations:
            return f"violated ({self.violations} of {self.trials} trials)"
        return f"no violation found in {self.trials} trials"

    def to_dict(self) -> Dict[str, Any]:
        return {'holds': self.holds, 'label': self.label, 'trials': self.trials,
                'violations': self.violations, 'indeterminate': self.indeterminate,
                'example': self.example}


@dataclass
class EllipticityReport:
    properties: Dict[str, PropertyResult]

    def holds(self, name: str) -> bool:
        return self.properties[name].holds

    def to_dict(self) -> Dict[str, Any]:
        return {name: r.to_dict() for name, r in self.properties.items()}


def _sample_pairs(rng: np.random.Generator, trials: int, degree: int, r_strict: bool,
                  p_strict: bool) -> Tuple[np.ndarray, ...]:
    low, high = GraphPDEConfig.SAMPLE_RANGE
    scale = (high - low) / 2
    r = rng.uniform(low, high, size=trials)
    dr = rng.uniform(0.01 * scale, scale, size=trials)
    if not r_strict:
        dr[rng.random(trials) < 0.5] = 0.0
    s = r - dr

    p = rng.uniform(low, high, size=(trials, degree))
    dp = rng.uniform(0.01 * scale, scale, size=(trials, degree))
    dp[rng.random((trials, degree)) < 0.5] = 0.0
    if not p_strict:
        dp[rng.random(trials) < 0.25] = 0.0
    else:
        empty = ~np.any(dp > 0, axis=1)
        if np.any(empty):
            cols = rng.integers(0, degree, size=int(empty.sum()))
            dp[np.flatnonzero(empty), cols] = rng.uniform(0.01 * scale, scale, size=int(empty.sum()))
    q = p + dp
    return r, s, p, q


def classify_ellipticity(spec: Union[OperatorSpec, Coefficients], graph: Graph,
                         trials: int = GraphPDEConfig.CLASSIFY_TRIALS,
                         seed: Optional[int] = None) -> EllipticityReport:
    """
    Randomized falsifier for the monotonicity properties of f(x, r, p).
    A property that survives every sample is labeled as having no violation
    found, which is evidence, not proof.
    """
    coeffs = spec if isinstance(spec, Coefficients) else resolve(spec, graph)
    rng = make_rng(seed)
    band = GraphPDEConfig.EPS_STRICT
    results = {name: PropertyResult(name, trials) for name in ELLIPTICITY_PROPERTIES}

    for block in graph.blocks:
        for row in block.rows:
            rows = np.full(trials, row)
            for name, (r_strict, p_strict, strict) in _PROPERTY_SHAPES.items():
                r, s, p, q = _sample_pairs(rng, trials, block.degree, r_strict, p_strict)
                # coefficient-weighted p, q are gradient entries directly
                gap = local_residual(coeffs, rows, s, q) - local_residual(coeffs, rows, r, p)
                scale = band * (1 + np.abs(local_residual(coeffs, rows, r, p)))
                if strict:
                    violated = gap <= 0
                    unsure = (gap > 0) & (gap <= scale)
                else:
                    violated = gap < -scale
                    unsure = (gap < 0) & ~violated
                result = results[name]
                result.indeterminate += int(unsure.sum())
                hits = np.flatnonzero(violated)
                if hits.size:
                    result.violations += int(hits.size)
                    if result.example is None:
                        i = hits[0]
                        result.example = {'vertex': graph.vertices[row], 'r': float(r[i]), 's': float(s[i]),
                                          'p': p[i].tolist(), 'q': q[i].tolist(), 'gap': float(gap[i])}

    for result in results.values():
        result.trials = trials * len(graph.interior)
    logger.info("Ellipticity: " + ", ".join(f"{n}={r.holds}" for n, r in results.items()))
    return EllipticityReport(results)
