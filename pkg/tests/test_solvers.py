"""Tests for the fixed-point, Gauss-Seidel and label-setting solvers"""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from graph_pde.config import Scheme, SolverConfig
from graph_pde.exceptions import GraphValidationError, SolverError, SpecError
from graph_pde.graph_core import Graph, distance_to_boundary, random_digraph, random_tree
from graph_pde.operators import evaluate, make_spec, resolve, residual_norm
from graph_pde.solvers import (AUX_SUFFIX, SolveStatus, detect_infeasibility, eikonal_auxiliary_graph,
                               fixed_point_constant, fixed_point_map_T, local_solve, solve, solve_eikonal,
                               solve_fixed_point, solve_gauss_seidel)

LINEAR = [0.0, 0.25, 0.5, 0.75, 1.0]


def abc_path(g_c=0.0):
    """Undirected unit path A - B - C with boundary {C}"""
    return Graph.build(["A", "B", "C"], ["C"], [("A", "B", 1.0), ("B", "C", 1.0)], undirected=True,
                       boundary_values={"C": g_c})


class TestSolverConfig:

    def test_defaults(self):
        config = SolverConfig()
        assert config.tolerance == 1e-10
        assert config.stagnation_window == 1000
        assert config.scheme == Scheme.FIXED_POINT_T.value

    @pytest.mark.parametrize("fields", [{"tolerance": 0.0}, {"damping": 0.0}, {"damping": 1.5},
                                        {"max_iterations": 0}])
    def test_invalid(self, fields):
        with pytest.raises(ValidationError):
            SolverConfig(**fields)


class TestFixedPointMap:

    def test_solution_is_fixed(self, path5):
        u = fixed_point_map_T(make_spec("laplacian"), path5, LINEAR)
        assert u.values.tolist() == LINEAR

    def test_boundary_reset_to_g(self, path5):
        u = fixed_point_map_T(make_spec("inf_laplacian"), path5, [9.0, 0.3, 0.1, 0.2, -4.0])
        assert u["(0)"] == 0.0
        assert u["(4)"] == 1.0

    def test_degenerate_operator(self, path5):
        with pytest.raises(SolverError):
            fixed_point_map_T(make_spec("trivial", lam=0.0), path5, LINEAR)

    def test_constant(self, path5):
        coeffs = resolve(make_spec("laplacian"), path5)
        assert fixed_point_constant(coeffs, path5) == 2.0
        coeffs = resolve(make_spec("normalized_p", p=4), path5)
        assert fixed_point_constant(coeffs, path5) == pytest.approx(1.0)

    def test_sandwich_and_range(self, rng):
        """T(u)(x) stays between the neighbor extremes whenever u(x) does, for random homogeneous specs"""
        kinds = ["laplacian", "inf_laplacian", "one_laplacian", "p_harmonious", "normalized_p", "eikonal_plus"]
        for trial in range(100):
            graph = random_tree(int(rng.integers(3, 12)), rng, weight_range=(0.1, 10.0))
            kind = kinds[trial % len(kinds)]
            fields = {"p": float(rng.choice([1.5, 2.0, 4.0, math.inf]))} if kind == "normalized_p" else {}
            spec = make_spec(kind, **fields)
            g = rng.uniform(-1, 1, graph.n)
            u = np.where(graph.interior_mask, rng.uniform(-1, 1, graph.n), g)
            Tu = fixed_point_map_T(spec, graph, u, g).values
            for x in graph.interior:
                nbrs = [u[graph.index[y]] for y in graph.neighbors(x)]
                ux, tx = u[graph.index[x]], Tu[graph.index[x]]
                low, high = min(nbrs), max(nbrs)
                assert min(low, ux) - 1e-12 <= tx <= max(high, ux) + 1e-12
                if low <= ux <= high:
                    assert low - 1e-12 <= tx <= high + 1e-12

            start = np.where(graph.interior_mask, g[~graph.interior_mask].min(), g)
            report = solve_fixed_point(spec, graph, g, SolverConfig(max_iterations=200, debug_checks=True),
                                       initial=start)
            assert report.iterations <= 200

    def test_monotone(self, rng):
        """u <= v gives T(u) <= T(v), including operators with a zeroth-order term"""
        specs = [make_spec("laplacian"), make_spec("inf_laplacian"), make_spec("one_laplacian"),
                 make_spec("normalized_p", p=4), make_spec("eikonal_plus"), make_spec("laplacian", lam=1.5),
                 make_spec("positive_eikonal")]
        for trial in range(200):
            graph = random_tree(int(rng.integers(3, 12)), rng, weight_range=(0.1, 10.0))
            spec = specs[trial % len(specs)]
            g = rng.uniform(-1, 1, graph.n)
            u = rng.uniform(-5, 5, graph.n)
            v = u + rng.uniform(0, 2, graph.n) * (rng.random(graph.n) < 0.5)
            Tu = fixed_point_map_T(spec, graph, u, g).values
            Tv = fixed_point_map_T(spec, graph, v, g).values
            assert np.all(Tu <= Tv + 1e-12)


class TestFixedPoint:

    def test_laplacian_on_path(self, path5):
        report = solve_fixed_point(make_spec("laplacian"), path5, config=SolverConfig(tolerance=1e-12))
        assert report.converged
        assert np.allclose(report.solution.values, LINEAR, atol=1e-11)
        assert report.residual_floor is None

    def test_inf_laplacian_on_path(self, path5):
        report = solve_fixed_point(make_spec("inf_laplacian"), path5)
        assert report.converged
        assert np.allclose(report.solution.values, LINEAR, atol=1e-9)

    @pytest.mark.parametrize("kind", ["laplacian", "inf_laplacian", "one_laplacian", "eikonal_minus"])
    def test_constant_boundary(self, grid5, kind):
        graph = grid5.with_boundary_values({b: 3.0 for b in grid5.boundary_list})
        report = solve_fixed_point(make_spec(kind), graph)
        assert report.converged
        assert report.iterations == 0
        assert np.all(report.solution.values == 3.0)

    def test_damping_still_converges(self, path5):
        report = solve_fixed_point(make_spec("laplacian"), path5, config=SolverConfig(damping=0.5))
        assert report.converged
        assert np.allclose(report.solution.values, LINEAR, atol=1e-9)

    def test_max_iter(self, grid5):
        report = solve_fixed_point(make_spec("laplacian"), grid5, config=SolverConfig(max_iterations=3))
        assert report.status is SolveStatus.MAX_ITER
        assert report.iterations == 3
        assert [i for i, _ in report.residual_history] == [0, 1, 2, 3]

    def test_history_is_decimated(self, grid5):
        config = SolverConfig(tolerance=1e-12, history_points=10)
        report = solve_fixed_point(make_spec("laplacian"), grid5, config=config)
        assert len(report.residual_history) <= 10
        assert report.residual_history[0][0] == 0
        assert report.residual_history[-1][0] == report.iterations

    def test_invalid_graph(self):
        graph = Graph.build(["A", "B"], [], [("A", "B", 1.0)])
        with pytest.raises(GraphValidationError):
            solve_fixed_point(make_spec("laplacian"), graph)

    def test_report_serializes(self, path5):
        report = solve_fixed_point(make_spec("laplacian"), path5)
        data = report.to_dict()
        assert data["status"] == "converged"
        assert data["scheme"] == "fixed_point_T"
        assert list(report.history_frame().columns) == ["iteration", "residual"]


class TestLocalSolve:

    def test_laplacian_root_is_mean(self, path5):
        coeffs = resolve(make_spec("laplacian"), path5)
        t = local_solve(coeffs, path5.index["(2)"], np.array([1.0, 1.0]), np.array([1.0, 0.0]), 7.0)
        assert t == 0.5

    def test_eikonal_root(self, path5):
        coeffs = resolve(make_spec("positive_eikonal"), path5)
        t = local_solve(coeffs, path5.index["(2)"], np.array([1.0, 2.0]), np.array([0.0, 0.0]), 0.0)
        # max(0 - t, 2(0 - t)) = 1 at t = -1/2
        assert t == pytest.approx(-0.5)

    def test_flat_zero_set_keeps_current_value(self, path5):
        coeffs = resolve(make_spec("trivial", lam=0.0), path5)
        row = path5.index["(1)"]
        assert local_solve(coeffs, row, np.ones(2), np.array([-1.0, 1.0]), 0.2) == 0.2
        assert local_solve(coeffs, row, np.ones(2), np.array([-1.0, 1.0]), 5.0) == 5.0

    def test_no_root(self, path5):
        coeffs = resolve(make_spec("trivial", lam=0.0, source=1.0), path5)
        with pytest.raises(SolverError) as info:
            local_solve(coeffs, path5.index["(1)"], np.ones(2), np.zeros(2), 0.0, "(1)")
        assert info.value.vertex == "(1)"


class TestGaussSeidel:

    def test_agrees_with_fixed_point_on_path(self, path5):
        config = SolverConfig(tolerance=1e-12)
        gs = solve_gauss_seidel(make_spec("laplacian"), path5, config=config)
        fp = solve_fixed_point(make_spec("laplacian"), path5, config=config)
        assert gs.converged and fp.converged
        assert np.max(np.abs(gs.solution.values - fp.solution.values)) < 1e-9
        assert gs.scheme == "gauss_seidel_local"

    def test_cross_solver_agreement(self, rng):
        """Uniformly elliptic problems have one solution; both solvers must find it"""
        for _ in range(10):
            graph = random_tree(int(rng.integers(3, 8)), rng, weight_range=(0.5, 2.0))
            g = rng.uniform(-1, 1, graph.n)
            for spec in (make_spec("laplacian"), make_spec("laplacian", w0=1.0)):
                config = SolverConfig(tolerance=1e-12)
                gs = solve_gauss_seidel(spec, graph, g, config)
                fp = solve_fixed_point(spec, graph, g, config)
                assert gs.converged and fp.converged
                assert np.max(np.abs(gs.solution.values - fp.solution.values)) < 1e-8

    def test_normalized_p2_matches_laplacian(self, grid5):
        config = SolverConfig(tolerance=1e-11, scheme=Scheme.GAUSS_SEIDEL_LOCAL)
        lap = solve(make_spec("laplacian"), grid5, config=config)
        half = solve(make_spec("normalized_p", p=2), grid5, config=config)
        assert lap.converged and half.converged
        # the linear boundary data extends to a solution of both
        assert np.allclose(lap.solution.values, half.solution.values, atol=1e-8)

    def test_median_keeps_both_solutions(self, median12):
        spec = make_spec("one_laplacian")
        plus = solve_gauss_seidel(spec, median12, config=SolverConfig(initial_value=1.0))
        minus = solve_gauss_seidel(spec, median12, config=SolverConfig(initial_value=-1.0))
        assert plus.converged and minus.converged
        interior = median12.interior_mask
        assert np.all(plus.solution.values[interior] == 1.0)
        assert np.all(minus.solution.values[interior] == -1.0)

    def test_warm_start(self, path5):
        report = solve_gauss_seidel(make_spec("laplacian"), path5, initial=LINEAR)
        assert report.converged
        assert report.iterations == 0


class TestEikonal:

    def test_positive_distance(self):
        report = solve_eikonal(abc_path(), sign="minus")
        assert report.converged
        assert report.solution.values.tolist() == [2.0, 1.0, 0.0]

    def test_negative_distance(self):
        report = solve_eikonal(abc_path(), sign="plus")
        assert report.solution.values.tolist() == [-2.0, -1.0, 0.0]

    def test_boundary_reduction(self):
        graph = abc_path(3.0)
        aux = eikonal_auxiliary_graph(graph, graph.boundary_array(), np.ones(3), 0.0, "minus")
        assert aux.boundary == {"C" + AUX_SUFFIX}
        assert aux.weight("C", "C" + AUX_SUFFIX) == pytest.approx(1 / 3)
        report = solve_eikonal(graph, sign="minus")
        assert report.solution.values.tolist() == [5.0, 4.0, 3.0]

    def test_rescaled_source(self):
        graph = abc_path()
        report = solve_eikonal(graph, h={"A": 2.0, "B": 0.5}, sign="plus")
        assert report.converged
        assert report.solution.values.tolist() == [-2.5, -0.5, 0.0]

    def test_matches_dijkstra_on_random_graphs(self, rng):
        for _ in range(100):
            graph = random_digraph(int(rng.integers(3, 51)), rng, n_boundary=int(rng.integers(1, 3)))
            minus = solve_eikonal(graph, sign="minus")
            plus = solve_eikonal(graph, sign="plus")
            distance = distance_to_boundary(graph)
            assert np.array_equal(minus.solution.values, distance)
            assert np.array_equal(plus.solution.values, -distance)

    def test_nonzero_boundary_data_residual(self, rng):
        for trial in range(50):
            graph = random_digraph(int(rng.integers(4, 21)), rng, n_boundary=int(rng.integers(1, 4)))
            g = {b: float(rng.uniform(-5, 5)) for b in graph.boundary_list}
            graph = graph.with_boundary_values(g)
            h = {x: float(rng.uniform(0.5, 2.0)) for x in graph.interior}
            sign = "plus" if trial % 2 else "minus"
            report = solve_eikonal(graph, h=h, sign=sign, config=SolverConfig(tolerance=1e-12))
            assert report.converged
            spec = make_spec("eikonal_plus", source=h) if sign == "plus" else make_spec(
                "eikonal_minus", source={x: -v for x, v in h.items()})
            res = evaluate(spec, graph, report.solution).values
            assert residual_norm(graph, res) < 1e-12
            assert np.all(res[~graph.interior_mask] == 0.0)

    def test_nonpositive_source(self):
        with pytest.raises(SpecError):
            solve_eikonal(abc_path(), h=0.0)

    def test_disconnected(self):
        graph = Graph.build(["A", "B", "C"], ["C"], [("A", "B", 1.0), ("B", "A", 1.0)])
        with pytest.raises(GraphValidationError):
            solve_eikonal(graph)

    def test_dispatch_by_scheme(self):
        config = SolverConfig(scheme=Scheme.EIKONAL_LABEL_SETTING)
        report = solve(make_spec("positive_eikonal"), abc_path(), config=config)
        assert report.solution.values.tolist() == [-2.0, -1.0, 0.0]
        with pytest.raises(SpecError):
            solve(make_spec("laplacian"), abc_path(), config=config)


class TestInfeasibility:

    def test_k3_wrong_sign(self, k3):
        spec = make_spec("eikonal_plus", source=-1.0)
        report = detect_infeasibility(spec, k3, config=SolverConfig(max_iterations=10**4))
        assert report.status is SolveStatus.INFEASIBLE_DETECTED
        assert report.residual_floor >= 0.4
        assert report.iterations <= 10**4

    def test_k3_gauss_seidel(self, k3):
        spec = make_spec("eikonal_plus", source=-1.0)
        config = SolverConfig(max_iterations=10**4, scheme=Scheme.GAUSS_SEIDEL_LOCAL)
        report = detect_infeasibility(spec, k3, config=config)
        assert report.status is SolveStatus.INFEASIBLE_DETECTED
        assert report.residual_floor >= 0.4

    def test_k3_right_sign(self, k3):
        report = detect_infeasibility(make_spec("positive_eikonal"), k3,
                                      config=SolverConfig(scheme=Scheme.GAUSS_SEIDEL_LOCAL))
        assert report.converged
        assert report.solution.values.tolist() == [-1.0, -1.0, 0.0]

    def test_solvable_problem_not_flagged(self, path5):
        report = detect_infeasibility(make_spec("laplacian"), path5)
        assert report.converged
        assert report.diagnosis is None
