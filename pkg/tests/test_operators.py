"""Tests for graph operators, operator specs and the randomized structure checks"""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from graph_pde.exceptions import BoundaryVertexError, SpecError, UnknownNameError
from graph_pde.graph_core import Graph, VertexField, distance_to_boundary, grid_graph, path_graph, random_tree
from graph_pde.operators import (HomogeneousPart, LocalMaxKind, OperatorKind, OperatorSpec, classify_ellipticity,
                                 conjugate_exponent, eikonal_minus, eikonal_plus, evaluate, gradient,
                                 homogeneity_check, inf_laplacian, laplacian, load_spec, local_max_kind, make_spec,
                                 normalized_p_weights, one_laplacian, residual_norm, resolve, save_spec, vector_lt)


def star(weights, values, boundary_values=None):
    """Interior vertex x joined to boundary leaves y1..yd"""
    leaves = [f"y{i + 1}" for i in range(len(weights))]
    graph = Graph.build(["x"] + leaves, leaves, [("x", y, w) for y, w in zip(leaves, weights)],
                        boundary_values=boundary_values)
    return graph, VertexField(graph.vertices, values)


def star_with_gradient(entries):
    """Unit-weight star whose gradient at x is exactly the given entries (u(x) = 0)"""
    return star([1.0] * len(entries), [0.0] + list(entries))


class TestGradient:

    def test_weighted_differences(self):
        graph, u = star([1.0, 0.5], [0.0, 1.0, -2.0])
        grad = gradient(graph, u, "x")
        assert grad.as_tuple() == (1.0, -1.0)
        assert grad.neighbors == ("y1", "y2")

    def test_constant_field(self):
        graph, u = star([1.0, 3.0, 0.2], [5.0, 5.0, 5.0, 5.0])
        assert gradient(graph, u, "x").as_tuple() == (0.0, 0.0, 0.0)

    def test_strict_local_max(self):
        graph, u = star([1.0, 2.0], [3.0, 1.0, 2.0])
        assert all(p < 0 for p in gradient(graph, u, "x"))
        assert local_max_kind(graph, u, "x") is LocalMaxKind.STRICT

    def test_boundary_vertex_rejected(self):
        graph, u = star([1.0], [0.0, 1.0])
        with pytest.raises(BoundaryVertexError):
            gradient(graph, u, "y1")

    def test_local_max_kinds(self):
        graph, u = star_with_gradient([0.0, -1.0])
        assert local_max_kind(graph, u, "x") is LocalMaxKind.VECTOR_STRICT
        graph, u = star_with_gradient([0.0, 0.0])
        assert local_max_kind(graph, u, "x") is LocalMaxKind.FLAT
        graph, u = star_with_gradient([0.5, -1.0])
        assert local_max_kind(graph, u, "x") is LocalMaxKind.NONE

    def test_vector_order(self):
        assert vector_lt([0.0, -1.0], [0.0, 0.0])
        assert not vector_lt([0.0, 0.0], [0.0, 0.0])


class TestOperators:

    def test_laplacian(self):
        graph, u = star_with_gradient([1.0, -1.0])
        assert laplacian(graph, u, "x") == 0.0
        graph, u = star_with_gradient([0.0, 2.0])
        assert laplacian(graph, u, "x") == 2.0

    def test_laplacian_of_quadratic(self):
        graph = path_graph(7)
        u = VertexField(graph.vertices, [float(i * i) for i in range(7)])
        assert all(laplacian(graph, u, x) == 2.0 for x in graph.interior)

    def test_eikonal(self):
        graph, u = star_with_gradient([1.0, -1.0])
        assert eikonal_plus(graph, u, "x") == 1.0
        assert eikonal_minus(graph, u, "x") == -1.0
        graph, u = star_with_gradient([0.0, 0.0])
        assert eikonal_plus(graph, u, "x") == eikonal_minus(graph, u, "x") == 0.0

    def test_negative_distance_is_eikonal(self):
        graph = grid_graph((4, 5))
        u = VertexField(graph.vertices, -distance_to_boundary(graph))
        assert all(eikonal_plus(graph, u, x) == 1.0 for x in graph.interior)

    def test_inf_laplacian(self):
        graph, u = star_with_gradient([1.0, -1.0])
        assert inf_laplacian(graph, u, "x") == 0.0
        graph, u = star_with_gradient([4.0, -2.0])
        assert inf_laplacian(graph, u, "x") == 1.0
        graph = path_graph(6)
        u = VertexField(graph.vertices, np.arange(6.0))
        assert all(inf_laplacian(graph, u, x) == 0.0 for x in graph.interior)

    def test_median(self):
        graph, u = star_with_gradient([1.0, -2.0, 4.0])
        assert one_laplacian(graph, u, "x") == 1.0
        graph, u = star_with_gradient([1.0, 2.0, 3.0, 10.0])
        assert one_laplacian(graph, u, "x") == 2.5

    def test_median_on_cross_graph(self, median12):
        values = median12.boundary_array()
        values[median12.interior_mask] = 1.0
        assert all(one_laplacian(median12, values, x) == 0.0 for x in median12.interior)


class TestOperatorSpec:

    def test_kind_aliases(self):
        assert make_spec("eikonal-plus").kind is OperatorKind.EIKONAL_PLUS
        assert OperatorSpec(kind="normalized-p", p="inf").p == math.inf

    def test_unknown_kind(self):
        with pytest.raises(UnknownNameError):
            make_spec("biharmonic")

    def test_extra_field_rejected(self):
        with pytest.raises(ValidationError):
            OperatorSpec(kind="laplacian", alpha=1.0)

    def test_p_range(self):
        with pytest.raises(ValidationError):
            make_spec("normalized_p", p=0.5)

    def test_normalized_p_needs_p(self, path5):
        with pytest.raises(SpecError):
            resolve(make_spec("normalized_p"), path5)

    def test_negative_weight_rejected(self, path5):
        with pytest.raises(SpecError):
            resolve(make_spec("inf_laplacian", wplus=-1.0), path5)

    def test_p_harmonious_needs_positive_weights(self, path5):
        with pytest.raises(SpecError):
            resolve(make_spec("p_harmonious", wminus=0.0), path5)

    def test_positive_eikonal_needs_positive_source(self, path5):
        with pytest.raises(SpecError):
            resolve(make_spec("positive_eikonal", source=0.0), path5)

    def test_per_vertex_coefficients(self, path5):
        coeffs = resolve(make_spec("eikonal_plus", source={"(1)": 1.0, "(2)": 2.0, "(3)": 3.0}), path5)
        assert coeffs.source[path5.index["(3)"]] == 3.0
        with pytest.raises(SpecError):
            resolve(make_spec("eikonal_plus", source={"(1)": 1.0}), path5)

    def test_custom_terms(self, path5):
        spec = make_spec("laplacian", homogeneous_part="custom", w0=1.0, custom_terms={"plus": 0.5, "minus": 0.5})
        assert resolve(spec, path5).homogeneous is HomogeneousPart.CUSTOM
        with pytest.raises(ValidationError):
            make_spec("laplacian", custom_terms={"curl": 1.0})

    def test_json_round_trip(self, tmp_path):
        spec = make_spec("normalized_p", p=math.inf, source=0.0)
        loaded = load_spec(save_spec(spec, tmp_path / "spec.json"))
        assert loaded == spec

    def test_malformed_spec_file(self, tmp_path):
        path = tmp_path / "spec.json"
        path.write_text('{"kind": "laplacian", "w0": "heavy"}', encoding="utf-8")
        with pytest.raises(SpecError):
            load_spec(path)


class TestNormalizedP:

    @pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 4.0, 10.0])
    def test_conjugate_exponents(self, p):
        q = conjugate_exponent(p)
        assert 1 / p + 1 / q == pytest.approx(1.0)

    def test_limits(self):
        assert normalized_p_weights(math.inf) == (0.0, 0.5)
        assert normalized_p_weights(1.0) == (1.0, 0.0)
        assert normalized_p_weights(2.0) == (0.5, 0.25)

    def test_p2_is_half_laplacian_at_degree_two(self, rng):
        graph = path_graph(9)
        u = rng.uniform(-1, 1, graph.n)
        half = evaluate(make_spec("normalized_p", p=2), graph, u).values
        lap = evaluate(make_spec("laplacian"), graph, u).values
        mask = graph.interior_mask
        assert np.allclose(half[mask], lap[mask] / 2, atol=1e-14)


class TestEvaluate:

    def test_linear_field_is_harmonic(self, path5):
        u = [0.0, 0.25, 0.5, 0.75, 1.0]
        assert np.all(evaluate(make_spec("laplacian"), path5, u).values == 0.0)

    def test_boundary_residual(self, path5):
        res = evaluate(make_spec("laplacian"), path5, [0.5, 0.25, 0.5, 0.75, 0.0]).values
        assert res[path5.index["(0)"]] == -0.5
        assert res[path5.index["(4)"]] == 1.0

    def test_median_counterexample_fields(self, median12):
        spec = make_spec("one_laplacian")
        for c in (1.0, -1.0):
            u = median12.boundary_array()
            u[median12.interior_mask] = c
            assert np.all(evaluate(spec, median12, u).values == 0.0)

    def test_positive_eikonal_negative_distance(self):
        graph = grid_graph((5, 4)).with_boundary_values({})
        u = -distance_to_boundary(graph)
        res = evaluate(make_spec("positive_eikonal"), graph, u).values
        assert residual_norm(graph, res) == 0.0
        assert np.all(res == 0.0)

    def test_trivial_equation(self, path5):
        spec = make_spec("trivial", source={"(1)": -2.0, "(2)": -2.0, "(3)": -2.0})
        res = evaluate(spec, path5, [0.0, 2.0, 2.0, 2.0, 1.0]).values
        assert np.all(res == 0.0)

    def test_custom_median_homogeneous_part(self, median12):
        spec = make_spec("p_harmonious", homogeneous_part="median", w0=1.0)
        u = median12.boundary_array()
        u[median12.interior_mask] = 1.0
        res = evaluate(spec, median12, u).values
        # median 0, max 0, min -2 at every interior vertex
        assert np.all(res[median12.interior_mask] == -1.0)


class TestHomogeneity:

    def test_laplacian_passes(self, grid5):
        assert homogeneity_check(make_spec("laplacian"), grid5, trials=500, seed=7).passed

    def test_median_passes(self, grid5):
        spec = make_spec("eikonal_plus", homogeneous_part="median", w0=1.0)
        assert homogeneity_check(spec, grid5, trials=500, seed=7).passed

    def test_raw_sum_fails_on_degree_three(self):
        graph, _ = star([1.0, 1.0, 1.0], [0.0, 0.0, 0.0, 0.0])
        spec = make_spec("eikonal_plus", custom_terms={"laplacian": 1.0}, w0=1.0)
        result = homogeneity_check(spec, graph, trials=200, seed=7)
        assert not result.passed
        assert result.vertex == "x"
        low, high = result.bounds
        assert not low <= result.value <= high


class TestEllipticity:
    """Acceptance classifications on a grid whose interior vertices have degree 4"""

    TRIALS = 10**4

    @pytest.fixture
    def grid(self):
        return grid_graph((3, 3))

    def test_laplacian_uniformly_elliptic_not_proper(self, grid):
        report = classify_ellipticity(make_spec("laplacian"), grid, trials=self.TRIALS, seed=7)
        assert report.holds("elliptic")
        assert report.holds("uniformly_elliptic")
        assert not report.holds("proper")
        assert report.properties["uniformly_elliptic"].label.startswith("no violation found")

    def test_trivial_is_proper(self, grid):
        report = classify_ellipticity(make_spec("trivial"), grid, trials=self.TRIALS, seed=7)
        assert report.holds("proper")
        assert report.holds("elliptic")
        assert not report.holds("uniformly_elliptic")

    @pytest.mark.parametrize("kind", ["eikonal_plus", "eikonal_minus", "inf_laplacian", "one_laplacian"])
    def test_degenerate_operators_merely_elliptic(self, grid, kind):
        report = classify_ellipticity(make_spec(kind), grid, trials=self.TRIALS, seed=7)
        assert report.holds("elliptic")
        assert not report.holds("proper")
        assert not report.holds("uniformly_elliptic")

    def test_violation_example_recorded(self, grid):
        report = classify_ellipticity(make_spec("eikonal_plus"), grid, trials=1000, seed=3)
        example = report.properties["proper"].example
        assert example["vertex"] == "(1,1)"
        assert example["gap"] <= 0

    def test_seeded_runs_repeat(self, grid):
        a = classify_ellipticity(make_spec("one_laplacian"), grid, trials=500, seed=11).to_dict()
        b = classify_ellipticity(make_spec("one_laplacian"), grid, trials=500, seed=11).to_dict()
        assert a == b


HOMOGENEOUS = [
    ("laplacian", {}),
    ("eikonal_plus", {}),
    ("eikonal_minus", {}),
    ("inf_laplacian", {}),
    ("one_laplacian", {}),
    ("normalized_p", {"p": 4}),
    ("normalized_p", {"p": "inf"}),
]

WITH_ZEROTH_ORDER = HOMOGENEOUS + [
    ("laplacian", {"lam": 2.0}),
    ("trivial", {}),
]

MONOTONE = WITH_ZEROTH_ORDER + [
    ("eikonal_plus", {"source": 1.0}),
    ("positive_eikonal", {}),
]


def shuffled(graph, rng):
    order = {v: [str(y) for y in rng.permutation(list(graph.neighbors(v)))] for v in graph.vertices}
    return graph.with_neighbor_order(order)


def interior(graph, spec, u):
    return evaluate(spec, graph, u).values[graph.interior_mask]


class TestStructuralProperties:
    """Seeded checks of the structure every operator in the family shares"""

    @pytest.fixture
    def grid(self):
        return grid_graph((5, 5))

    @pytest.mark.parametrize("kind, fields", MONOTONE)
    def test_neighbor_order_does_not_matter(self, kind, fields, rng):
        spec = make_spec(kind, **fields)
        for graph in (grid_graph((4, 4)), grid_graph((3, 5), 0.5)):
            for _ in range(20):
                u = rng.uniform(-10, 10, graph.n)
                other = shuffled(graph, rng)
                assert np.array_equal(evaluate(spec, graph, u).values, evaluate(spec, other, u).values)

    def test_single_vertex_laplacian_ignores_order(self, rng):
        graph = grid_graph((4, 4))
        u = rng.uniform(-10, 10, graph.n)
        other = shuffled(graph, rng)
        for x in graph.interior:
            assert laplacian(graph, u, x) == laplacian(other, u, x)

    def test_gradient_ignores_constants(self, grid, rng):
        u = rng.uniform(-10, 10, grid.n)
        for c in (-3.5, 0.0, 1e3):
            for x in grid.interior:
                shifted = gradient(grid, u + c, x).entries
                assert shifted == pytest.approx(gradient(grid, u, x).entries, abs=1e-9)

    @pytest.mark.parametrize("kind, fields", HOMOGENEOUS)
    def test_operators_ignore_constants(self, grid, kind, fields, rng):
        spec = make_spec(kind, **fields)
        for _ in range(20):
            u = rng.uniform(-10, 10, grid.n)
            c = rng.uniform(-100, 100)
            assert interior(grid, spec, u + c) == pytest.approx(interior(grid, spec, u), abs=1e-9)

    @pytest.mark.parametrize("kind, fields", WITH_ZEROTH_ORDER)
    def test_positively_one_homogeneous(self, grid, kind, fields, rng):
        spec = make_spec(kind, **fields)
        for _ in range(20):
            u = rng.uniform(-10, 10, grid.n)
            base = interior(grid, spec, u)
            for scale in (0.0, 0.5, 3.0):
                assert interior(grid, spec, scale * u) == pytest.approx(scale * base, rel=1e-12, abs=1e-12)

    @pytest.mark.parametrize("kind, fields", MONOTONE)
    def test_monotone_in_value_and_gradient(self, grid, kind, fields, rng):
        """u(x) >= v(x) and grad u(x) <= grad v(x) give F(u)(x) <= F(v)(x)"""
        spec = make_spec(kind, **fields)
        for _ in range(10):
            v = rng.uniform(-10, 10, grid.n)
            for x in grid.interior:
                ix = grid.index[x]
                nbrs = [grid.index[y] for y in grid.neighbors(x)]
                u = v.copy()
                lift = rng.uniform(0, 1)
                u[ix] += lift
                u[nbrs] += lift - rng.uniform(0, 1, len(nbrs))
                assert np.all(gradient(grid, u, x).entries <= gradient(grid, v, x).entries + 1e-12)
                Fu = evaluate(spec, grid, u).values[ix]
                Fv = evaluate(spec, grid, v).values[ix]
                assert Fu <= Fv + 1e-12

    def test_inf_laplacian_is_mean_of_eikonals_bitwise(self, rng):
        spec = make_spec("inf_laplacian")
        for _ in range(20):
            graph = random_tree(int(rng.integers(3, 12)), rng, weight_range=(0.1, 10.0))
            u = rng.uniform(-10, 10, graph.n)
            res = evaluate(spec, graph, u)
            for x in graph.interior:
                mean = (eikonal_plus(graph, u, x) + eikonal_minus(graph, u, x)) / 2
                assert inf_laplacian(graph, u, x) == mean
                assert res[x] == mean
