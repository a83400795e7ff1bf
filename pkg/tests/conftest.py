"""Shared fixtures for the graph-pde test suite"""

import os
import sys
from pathlib import Path

import numpy as np
import pytest

# Add src to path, as the entry script does
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from graph_pde.graph_core import grid_graph, load_graph, path_graph  # noqa: E402

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture
def path5():
    """Path on 5 points with u = 0 at the left end and u = 1 at the right end"""
    return path_graph(5, boundary_values={"(0)": 0.0, "(4)": 1.0})


@pytest.fixture
def grid5():
    graph = grid_graph((5, 5))
    values = {b: float(graph.coordinates[b][0] + graph.coordinates[b][1]) for b in graph.boundary_list}
    return graph.with_boundary_values(values)


@pytest.fixture
def k3():
    return load_graph(FIXTURES / "k3.json")


@pytest.fixture
def median12():
    return load_graph(FIXTURES / "median12.json")


@pytest.fixture
def rng():
    return np.random.default_rng(7)
