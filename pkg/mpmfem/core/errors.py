"""Exception hierarchy for mpmfem.

Geometry and input errors also subclass `ValueError` so callers that only know
about bad arguments can still catch them.
"""


class SimulationError(Exception):
    """Base class for every error raised by the simulator."""


class DegenerateEdge(SimulationError, ValueError):
    """An edge with coincident endpoints was passed to a distance query."""


class InvalidStart(SimulationError, ValueError):
    """A collision query started from a configuration already in contact."""


class NonManifold(SimulationError, ValueError):
    """A mesh edge is shared by more than two triangles."""


class NonPositiveJ(SimulationError):
    """A deformation gradient with det(F) <= 0 reached an energy evaluation."""


class NonPositiveDistance(SimulationError):
    """A contact pair reached zero or negative distance."""


class OutOfDomain(SimulationError):
    """A particle kernel stencil left the allocated background lattice."""


class EmptyShape(SimulationError, ValueError):
    """Particle sampling produced no particle inside the shape."""


class DegenerateSpec(SimulationError, ValueError):
    """A geometry generator was given parameters describing no valid shape."""


class LineSearchStall(SimulationError):
    """The line-search step size underflowed."""


class DirichletTunneling(SimulationError):
    """Scripted boundary motion cannot be reached without penetrating free material."""


class MaxItersExceeded(SimulationError):
    """An iterative solver hit its iteration cap.

    Attributes:
        iterations: Number of iterations performed.
        residual: Final convergence measure (m/s).
    """

    def __init__(self, message: str, iterations: int, residual: float):
        super().__init__(f"{message} (iterations={iterations}, residual={residual:.3e})")
        self.iterations = iterations
        self.residual = residual


class SceneParseError(SimulationError, ValueError):
    """A scene file could not be read as structured text."""

    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        context = []
        if line is not None:
            context.append(f"line {line}")
        if key is not None:
            context.append(f"key '{key}'")
        suffix = f" ({', '.join(context)})" if context else ""
        super().__init__(f"{message}{suffix}")
        self.line = line
        self.key = key


class SceneValidationError(SimulationError, ValueError):
    """A scene file parsed but violates one or more invariants.

    Attributes:
        errors: One human-readable message per violated invariant, each
            starting with the dotted location of the offending key.
    """

    def __init__(self, errors: list[str]):
        super().__init__("invalid scene:\n  " + "\n  ".join(errors))
        self.errors = errors
