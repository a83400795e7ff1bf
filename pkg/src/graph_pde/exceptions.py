"""
Exceptions raised by graph-pde
"""

from typing import List, Optional


class GraphPDEError(Exception):
    """Base class for every library error"""


class GraphValidationError(GraphPDEError):
    """A graph violates one or more structural invariants"""

    def __init__(self, errors: List[str]):
        self.errors = list(errors)
        super().__init__("invalid graph: " + "; ".join(self.errors))


class NotANeighborError(GraphPDEError):
    pass


class BoundaryVertexError(GraphPDEError):
    """An interior-only operation received a boundary vertex"""

    def __init__(self, vertex: str):
        self.vertex = vertex
        super().__init__(f"vertex {vertex!r} is a boundary vertex")


class SpecError(GraphPDEError):
    """Operator spec is malformed or does not fit the graph"""


class SolverError(GraphPDEError):
    """Local scalar solve failed"""

    def __init__(self, message: str, vertex: Optional[str] = None):
        self.vertex = vertex
        super().__init__(message if vertex is None else f"{message} (vertex {vertex!r})")


class PreconditionError(GraphPDEError):
    """The hypotheses of a verification check are not satisfied"""

    def __init__(self, message: str, vertices: Optional[List[str]] = None):
        self.vertices = list(vertices or [])
        super().__init__(message)


class UnknownNameError(GraphPDEError):
    pass


class LemmaViolationError(GraphPDEError):
    """An active neighbor left the maximum set; carries the propagation trace"""

    def __init__(self, message: str, trace=None):
        self.trace = trace
        super().__init__(message)
