"""
Graph Core
Finite weighted directed graphs with a Dirichlet boundary, vertex fields,
validation, path distances and geometric-graph generators
"""

import itertools
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from heapq import heappop, heappush
from types import MappingProxyType
from typing import Any, Callable, Dict, FrozenSet, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field
from scipy import sparse

from .exceptions import GraphValidationError, NotANeighborError
from .utils import PathLike, read_csv, read_json, write_csv, write_json

logger = logging.getLogger(__name__)


class _Unreachable:
    """Distance to a vertex that no directed path reaches"""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "UNREACHABLE"

    def __float__(self) -> float:
        return math.inf

    def __add__(self, other):
        return self

    __radd__ = __add__

    def __lt__(self, other) -> bool:
        return False

    def __le__(self, other) -> bool:
        return other is self

    def __gt__(self, other) -> bool:
        return other is not self

    def __ge__(self, other) -> bool:
        return True

    def __eq__(self, other) -> bool:
        return other is self

    def __hash__(self) -> int:
        return hash("UNREACHABLE")


UNREACHABLE = _Unreachable()

Distance = Union[float, _Unreachable]


class Edge(NamedTuple):
    source: str
    target: str
    weight: float


@dataclass(frozen=True)
class DegreeBlock:
    """Interior vertices sharing one degree, laid out for vectorized operators"""

    degree: int
    rows: np.ndarray       # (m,) vertex indices
    neighbors: np.ndarray  # (m, degree) neighbor indices in neighbor order
    weights: np.ndarray    # (m, degree) edge weights


@dataclass(frozen=True, eq=False)
class Graph:
    """
    Finite weighted directed graph G = (V, E, w) with boundary set.

    Immutable after construction; build instances through ``Graph.build``.
    Structural invariants are checked by ``validate`` rather than on
    construction, so that invalid inputs can be reported in full.
    """

    vertices: Tuple[str, ...]
    boundary: FrozenSet[str]
    edges: Tuple[Edge, ...]
    neighbor_order: Mapping[str, Tuple[str, ...]]
    boundary_values: Mapping[str, float] = field(default_factory=lambda: MappingProxyType({}))
    coordinates: Optional[Mapping[str, Tuple[float, ...]]] = None

    @classmethod
    def build(
        cls,
        vertices: Iterable[str],
        boundary: Iterable[str],
        edges: Iterable[Sequence[Any]],
        neighbor_order: Optional[Mapping[str, Sequence[str]]] = None,
        boundary_values: Optional[Mapping[str, float]] = None,
        coordinates: Optional[Mapping[str, Sequence[float]]] = None,
        undirected: bool = False,
    ) -> "Graph":
        """Normalize raw inputs; undirected edges become two directed edges of equal weight"""
        vertex_ids = tuple(str(v) for v in vertices)
        edge_list: List[Edge] = []
        for raw in edges:
            source, target, weight = str(raw[0]), str(raw[1]), float(raw[2])
            edge_list.append(Edge(source, target, weight))
            if undirected:
                edge_list.append(Edge(target, source, weight))

        order: Dict[str, Tuple[str, ...]] = {}
        if neighbor_order is None:
            seen: Dict[str, List[str]] = {v: [] for v in vertex_ids}
            for e in edge_list:
                if e.source in seen and e.target not in seen[e.source]:
                    seen[e.source].append(e.target)
            order = {v: tuple(ns) for v, ns in seen.items()}
        else:
            order = {v: tuple(str(n) for n in neighbor_order.get(v, ())) for v in vertex_ids}

        values = {str(k): float(v) for k, v in (boundary_values or {}).items()}
        coords = None
        if coordinates is not None:
            coords = MappingProxyType({str(k): tuple(float(c) for c in p) for k, p in coordinates.items()})

        return cls(
            vertices=vertex_ids,
            boundary=frozenset(str(b) for b in boundary),
            edges=tuple(edge_list),
            neighbor_order=MappingProxyType(order),
            boundary_values=MappingProxyType(values),
            coordinates=coords,
        )

    # -- lookups -------------------------------------------------------------

    @cached_property
    def index(self) -> Mapping[str, int]:
        return MappingProxyType({v: i for i, v in enumerate(self.vertices)})

    @cached_property
    def adjacency(self) -> Mapping[str, Mapping[str, float]]:
        """Out-neighbor weights; the first of any duplicate edges wins"""
        adj: Dict[str, Dict[str, float]] = {v: {} for v in self.vertices}
        for e in self.edges:
            if e.source in adj and e.target in adj and e.target not in adj[e.source]:
                adj[e.source][e.target] = e.weight
        return MappingProxyType({v: MappingProxyType(ns) for v, ns in adj.items()})

    @cached_property
    def interior(self) -> Tuple[str, ...]:
        return tuple(v for v in self.vertices if v not in self.boundary)

    @cached_property
    def boundary_list(self) -> Tuple[str, ...]:
        return tuple(v for v in self.vertices if v in self.boundary)

    @cached_property
    def interior_mask(self) -> np.ndarray:
        mask = np.array([v not in self.boundary for v in self.vertices], dtype=bool)
        mask.setflags(write=False)
        return mask

    @property
    def n(self) -> int:
        return len(self.vertices)

    def is_boundary(self, x: str) -> bool:
        return x in self.boundary

    def neighbors(self, x: str) -> Tuple[str, ...]:
        return self.neighbor_order.get(x, ())

    def degree(self, x: str) -> int:
        return len(self.neighbors(x))

    def weight(self, x: str, y: str) -> float:
        try:
            return self.adjacency[x][y]
        except KeyError:
            raise NotANeighborError(f"{y!r} is not an out-neighbor of {x!r}") from None

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.array([self.degree(v) for v in self.vertices], dtype=int)

    @cached_property
    def blocks(self) -> Tuple[DegreeBlock, ...]:
        """Interior vertices grouped by degree, in insertion order within a block"""
        by_degree: Dict[int, List[str]] = {}
        for x in self.interior:
            by_degree.setdefault(self.degree(x), []).append(x)
        out = []
        for d in sorted(by_degree):
            if d == 0:
                continue
            xs = by_degree[d]
            rows = np.array([self.index[x] for x in xs], dtype=int)
            nbr = np.array([[self.index[y] for y in self.neighbors(x)] for x in xs], dtype=int)
            w = np.array([[self.adjacency[x][y] for y in self.neighbors(x)] for x in xs], dtype=float)
            out.append(DegreeBlock(d, rows, nbr.reshape(len(xs), d), w.reshape(len(xs), d)))
        return tuple(out)

    def boundary_array(self, g: Optional[Any] = None) -> np.ndarray:
        """Boundary data as a full-length array (interior entries are 0)"""
        values = np.zeros(self.n)
        if g is None:
            for b in self.boundary_list:
                values[self.index[b]] = self.boundary_values.get(b, 0.0)
            return values
        full = field_values(self, g) if not isinstance(g, Mapping) else None
        for b in self.boundary_list:
            if full is not None:
                values[self.index[b]] = full[self.index[b]]
            else:
                values[self.index[b]] = float(g.get(b, self.boundary_values.get(b, 0.0)))
        return values

    def with_neighbor_order(self, order: Mapping[str, Sequence[str]]) -> "Graph":
        """Same graph with a different neighbor enumeration"""
        return Graph.build(self.vertices, self.boundary, self.edges, neighbor_order=order,
                           boundary_values=self.boundary_values, coordinates=self.coordinates)

    def with_boundary_values(self, values: Mapping[str, float]) -> "Graph":
        return Graph.build(self.vertices, self.boundary, self.edges, neighbor_order=self.neighbor_order,
                           boundary_values=values, coordinates=self.coordinates)

    def to_sparse_lengths(self) -> sparse.csr_matrix:
        """CSR matrix of directed edge lengths 1/w (row = source)"""
        rows, cols, data = [], [], []
        for x in self.vertices:
            for y, w in self.adjacency[x].items():
                rows.append(self.index[x])
                cols.append(self.index[y])
                data.append(1.0 / w)
        return sparse.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    def __repr__(self) -> str:
        return f"Graph(n={self.n}, interior={len(self.interior)}, edges={len(self.edges)})"


class VertexField:
    """A finite real value per vertex, aligned with a graph's vertex order"""

    __slots__ = ("vertices", "values", "index")

    def __init__(self, vertices: Sequence[str], values: Any):
        arr = np.array(values, dtype=float).reshape(-1)
        if len(arr) != len(vertices):
            raise ValueError(f"field has {len(arr)} values for {len(vertices)} vertices")
        if not np.all(np.isfinite(arr)):
            raise ValueError("field values must be finite")
        arr.setflags(write=False)
        self.vertices = tuple(vertices)
        self.values = arr
        self.index = {v: i for i, v in enumerate(self.vertices)}

    @classmethod
    def from_mapping(cls, graph: Graph, mapping: Mapping[str, float], default: Optional[float] = None) -> "VertexField":
        missing = [v for v in graph.vertices if v not in mapping]
        if missing and default is None:
            raise ValueError(f"field is missing vertices: {missing}")
        extra = [k for k in mapping if k not in graph.index]
        if extra:
            raise ValueError(f"field has unknown vertices: {extra}")
        return cls(graph.vertices, [mapping.get(v, default) for v in graph.vertices])

    @classmethod
    def constant(cls, graph: Graph, value: float) -> "VertexField":
        return cls(graph.vertices, np.full(graph.n, float(value)))

    def __getitem__(self, vertex: str) -> float:
        return float(self.values[self.index[vertex]])

    def __len__(self) -> int:
        return len(self.values)

    def as_dict(self) -> Dict[str, float]:
        return {v: float(x) for v, x in zip(self.vertices, self.values)}

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'vertex': list(self.vertices), 'value': self.values})

    def __repr__(self) -> str:
        return f"VertexField({self.as_dict()})"


def field_values(graph: Graph, u: Any) -> np.ndarray:
    """Coerce a VertexField, mapping or sequence to a float array in vertex order"""
    if isinstance(u, VertexField):
        if u.vertices != graph.vertices:
            raise ValueError("field is defined on a different vertex set")
        return np.array(u.values, dtype=float)
    if isinstance(u, Mapping):
        return np.array(VertexField.from_mapping(graph, u).values, dtype=float)
    arr = np.asarray(u, dtype=float).reshape(-1)
    if len(arr) != graph.n:
        raise ValueError(f"field has {len(arr)} values for {graph.n} vertices")
    return arr.copy()


# -- validation --------------------------------------------------------------

def validate(graph: Graph) -> List[str]:
    """Every violated structural invariant; an empty list means the graph is ok"""
    errors: List[str] = []
    ids = set(graph.vertices)

    if len(ids) != len(graph.vertices):
        errors.append("duplicate vertex id")
    if not graph.boundary:
        errors.append("empty boundary")
    stray = sorted(graph.boundary - ids)
    if stray:
        errors.append(f"boundary not a subset of vertices: {stray}")

    seen_pairs = set()
    for e in graph.edges:
        if e.source not in ids or e.target not in ids:
            errors.append(f"unknown vertex in edge {e.source}->{e.target}")
            continue
        if not math.isfinite(e.weight):
            errors.append(f"non-finite weight on edge {e.source}->{e.target}")
        elif e.weight <= 0:
            errors.append(f"nonpositive weight on edge {e.source}->{e.target}")
        if e.source == e.target:
            errors.append(f"self-loop at {e.source}")
        if (e.source, e.target) in seen_pairs:
            errors.append(f"duplicate edge {e.source}->{e.target}")
        seen_pairs.add((e.source, e.target))

    for v in graph.vertices:
        order = graph.neighbor_order.get(v, ())
        out = set(graph.adjacency.get(v, {}))
        if len(order) != len(set(order)) or set(order) != out:
            errors.append(f"neighbor order of {v} does not list each out-neighbor exactly once")
        if v not in graph.boundary and not out:
            errors.append(f"isolated interior vertex {v}")

    for b, value in graph.boundary_values.items():
        if b not in graph.boundary:
            errors.append(f"boundary value given for non-boundary vertex {b}")
        elif not math.isfinite(value):
            errors.append(f"non-finite boundary value at {b}")

    return errors


def require_valid(graph: Graph) -> Graph:
    errors = validate(graph)
    if errors:
        raise GraphValidationError(errors)
    return graph


# -- distances ---------------------------------------------------------------

def directed_distance(graph: Graph, x: str, y: str) -> float:
    """d(x, y) = 1/w_xy for an out-neighbor y, 0 for y = x"""
    if x == y:
        return 0.0
    return 1.0 / graph.weight(x, y)


def _dijkstra(n: int, arcs: Sequence[Sequence[Tuple[int, float]]], sources: Iterable[int],
              target: Optional[int] = None) -> np.ndarray:
    """Label-setting shortest paths; unreached vertices keep +inf"""
    dist = np.full(n, np.inf)
    done = np.zeros(n, dtype=bool)
    heap: List[Tuple[float, int, int]] = []
    counter = itertools.count()
    for s in sources:
        dist[s] = 0.0
        heappush(heap, (0.0, next(counter), s))
    while heap:
        d, _, v = heappop(heap)
        if done[v]:
            continue
        done[v] = True
        if v == target:
            break
        for t, length in arcs[v]:
            candidate = d + length
            if candidate < dist[t]:
                dist[t] = candidate
                heappush(heap, (candidate, next(counter), t))
    return dist


def _forward_arcs(graph: Graph) -> List[List[Tuple[int, float]]]:
    arcs: List[List[Tuple[int, float]]] = [[] for _ in range(graph.n)]
    for x in graph.vertices:
        for y, w in graph.adjacency[x].items():
            arcs[graph.index[x]].append((graph.index[y], 1.0 / w))
    return arcs


def _reverse_arcs(graph: Graph) -> List[List[Tuple[int, float]]]:
    arcs: List[List[Tuple[int, float]]] = [[] for _ in range(graph.n)]
    for x in graph.vertices:
        for y, w in graph.adjacency[x].items():
            arcs[graph.index[y]].append((graph.index[x], 1.0 / w))
    return arcs


def _as_distance(value: float) -> Distance:
    return UNREACHABLE if math.isinf(value) else float(value)


def path_distance(graph: Graph, x: str, y: str) -> Distance:
    """Minimal directed path distance from x to y, or UNREACHABLE"""
    if x == y:
        return 0.0
    dist = _dijkstra(graph.n, _forward_arcs(graph), [graph.index[x]], target=graph.index[y])
    return _as_distance(dist[graph.index[y]])


def distances_from(graph: Graph, x: str) -> Dict[str, Distance]:
    dist = _dijkstra(graph.n, _forward_arcs(graph), [graph.index[x]])
    return {v: _as_distance(dist[i]) for i, v in enumerate(graph.vertices)}


def distance_to_boundary(graph: Graph) -> np.ndarray:
    """min over boundary y of d(x, y) for every x (+inf where unreachable)"""
    sources = [graph.index[b] for b in graph.boundary_list]
    return _dijkstra(graph.n, _reverse_arcs(graph), sources)


def connected_to_boundary(graph: Graph) -> Tuple[bool, List[str]]:
    """Whether every vertex reaches the boundary; otherwise the stranded vertices"""
    reverse: Dict[str, List[str]] = {v: [] for v in graph.vertices}
    for x in graph.vertices:
        for y in graph.adjacency[x]:
            reverse[y].append(x)
    reached = set(graph.boundary_list)
    queue = deque(graph.boundary_list)
    while queue:
        y = queue.popleft()
        for x in reverse[y]:
            if x not in reached:
                reached.add(x)
                queue.append(x)
    stranded = [v for v in graph.vertices if v not in reached]
    return not stranded, stranded


# -- geometric graphs --------------------------------------------------------

def _point_key(point: np.ndarray) -> Tuple[float, ...]:
    return tuple(np.round(point, 9) + 0.0)


def point_label(point: Sequence[float]) -> str:
    return "(" + ",".join(format(float(c), ".12g") for c in point) + ")"


def geometric_grid(
    vectors: Sequence[Sequence[float]],
    points: Iterable[Sequence[float]],
    regular: bool = True,
    independent: bool = True,
    label: Callable[[Sequence[float]], str] = point_label,
) -> Graph:
    """
    Geometric graph: neighbors x +/- v_j, weights 1/|v_j|, boundary = vertices
    lacking the full set of 2l neighbors.
    """
    vecs = np.atleast_2d(np.array(vectors, dtype=float))
    norms = np.linalg.norm(vecs, axis=1)
    if np.any(norms == 0):
        raise GraphValidationError(["zero direction vector"])
    if independent and np.linalg.matrix_rank(vecs) < len(vecs):
        raise GraphValidationError(["direction vectors are linearly dependent"])

    pts = [np.array(p, dtype=float).reshape(-1) for p in points]
    if any(len(p) != vecs.shape[1] for p in pts):
        raise GraphValidationError(["point dimension does not match direction vectors"])
    keys = {_point_key(p): i for i, p in enumerate(pts)}
    ids = [label(p) for p in pts]

    steps: List[Tuple[np.ndarray, float]] = []
    for v, norm in zip(vecs, norms):
        steps.append((v, 1.0 / norm))
        steps.append((-v, 1.0 / norm))

    edges: List[Tuple[str, str, float]] = []
    order: Dict[str, List[str]] = {}
    boundary: List[str] = []
    for i, p in enumerate(pts):
        order[ids[i]] = []
        full = True
        for step, weight in steps:
            j = keys.get(_point_key(p + step))
            if j is None:
                full = False
                continue
            edges.append((ids[i], ids[j], weight))
            order[ids[i]].append(ids[j])
        if not full:
            boundary.append(ids[i])

    if regular and len(boundary) == len(pts):
        raise GraphValidationError(["no interior vertex"])

    return Graph.build(ids, boundary, edges, neighbor_order=order,
                       coordinates={ids[i]: tuple(p) for i, p in enumerate(pts)})


def lattice_points(shape: Sequence[int], step: float = 1.0) -> List[Tuple[float, ...]]:
    """Points of a rectangular lattice in row-major order"""
    return [tuple(step * c for c in idx) for idx in itertools.product(*(range(s) for s in shape))]


def grid_graph(shape: Sequence[int], step: float = 1.0) -> Graph:
    """Axis-aligned lattice graph (5-point stencil in 2-D)"""
    dim = len(shape)
    vectors = step * np.eye(dim)
    return geometric_grid(vectors, lattice_points(shape, step))


def path_graph(n: int, step: float = 1.0, boundary_values: Optional[Mapping[str, float]] = None) -> Graph:
    """1-D lattice on n points; the two ends form the boundary"""
    graph = grid_graph([n], step)
    if boundary_values:
        graph = graph.with_boundary_values(boundary_values)
    return graph


# -- random families ---------------------------------------------------------

def random_tree(n: int, rng: np.random.Generator, weight_range: Tuple[float, float] = (1.0, 1.0)) -> Graph:
    """Random undirected tree on n >= 3 vertices; leaves form the boundary"""
    if n < 3:
        raise ValueError("a tree with an interior needs at least 3 vertices")
    ids = [f"v{i}" for i in range(n)]
    edges = []
    for i in range(1, n):
        j = int(rng.integers(0, i))
        edges.append((ids[i], ids[j], float(rng.uniform(*weight_range))))
    degree = np.zeros(n, dtype=int)
    for a, b, _ in edges:
        degree[ids.index(a)] += 1
        degree[ids.index(b)] += 1
    boundary = [ids[i] for i in range(n) if degree[i] == 1]
    return Graph.build(ids, boundary, edges, undirected=True)


def random_digraph(
    n: int,
    rng: np.random.Generator,
    n_boundary: int = 2,
    edge_prob: float = 0.15,
    weight_range: Tuple[float, float] = (0.1, 10.0),
    symmetric: bool = False,
) -> Graph:
    """
    Random weighted digraph connected to its boundary: a random in-forest
    toward the boundary plus independent extra arcs.
    """
    if not 1 <= n_boundary < n:
        raise ValueError("need 1 <= n_boundary < n")
    ids = [f"v{i}" for i in range(n)]
    boundary = ids[:n_boundary]
    arcs: Dict[Tuple[str, str], float] = {}

    def add(a: str, b: str) -> None:
        if a != b and (a, b) not in arcs:
            w = float(rng.uniform(*weight_range))
            arcs[(a, b)] = w
            if symmetric and (b, a) not in arcs:
                arcs[(b, a)] = w

    for i in range(n_boundary, n):
        add(ids[i], ids[int(rng.integers(0, i))])
    for a in ids:
        for b in ids:
            if a != b and rng.random() < edge_prob:
                add(a, b)
    edges = [(a, b, w) for (a, b), w in arcs.items()]
    return Graph.build(ids, boundary, edges)


# -- file formats ------------------------------------------------------------

class VertexRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: str
    boundary: bool = False
    g: Optional[float] = None
    coords: Optional[List[float]] = None


class EdgeRecord(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    source: str = Field(alias="from")
    to: str
    w: float


class GraphFile(BaseModel):
    """Graph JSON schema"""

    model_config = ConfigDict(extra="forbid")

    vertices: List[VertexRecord]
    edges: List[EdgeRecord]
    undirected: bool = False


def graph_from_dict(data: Mapping[str, Any]) -> Graph:
    doc = GraphFile.model_validate(data)
    coords = {v.id: v.coords for v in doc.vertices if v.coords is not None}
    return Graph.build(
        vertices=[v.id for v in doc.vertices],
        boundary=[v.id for v in doc.vertices if v.boundary],
        edges=[(e.source, e.to, e.w) for e in doc.edges],
        boundary_values={v.id: v.g for v in doc.vertices if v.boundary and v.g is not None},
        coordinates=coords or None,
        undirected=doc.undirected,
    )


def graph_to_dict(graph: Graph) -> Dict[str, Any]:
    """Directed JSON document; round-trips through graph_from_dict"""
    vertices = []
    for v in graph.vertices:
        record: Dict[str, Any] = {'id': v, 'boundary': v in graph.boundary}
        if v in graph.boundary:
            record['g'] = graph.boundary_values.get(v, 0.0)
        if graph.coordinates is not None and v in graph.coordinates:
            record['coords'] = list(graph.coordinates[v])
        vertices.append(record)
    edges = [{'from': x, 'to': y, 'w': graph.adjacency[x][y]}
             for x in graph.vertices for y in graph.neighbors(x)]
    return {'vertices': vertices, 'edges': edges, 'undirected': False}


def load_graph(path: PathLike) -> Graph:
    graph = graph_from_dict(read_json(path))
    logger.info(f"Loaded {graph!r} from {path}")
    return graph


def save_graph(graph: Graph, path: PathLike) -> str:
    return write_json(graph_to_dict(graph), path)


def save_field(graph: Graph, u: Any, path: PathLike) -> str:
    """Field CSV: header vertex,value, one row per vertex"""
    values = field_values(graph, u)
    return write_csv(pd.DataFrame({'vertex': list(graph.vertices), 'value': values}), path)


def load_field(graph: Graph, path: PathLike) -> VertexField:
    df = read_csv(path, dtype={'vertex': str})
    if list(df.columns) != ['vertex', 'value']:
        raise ValueError(f"{path}: expected header 'vertex,value', got {','.join(df.columns)}")
    if df['vertex'].duplicated().any():
        raise ValueError(f"{path}: duplicate vertex rows")
    mapping = dict(zip(df['vertex'], df['value'].astype(float)))
    return VertexField.from_mapping(graph, mapping)
