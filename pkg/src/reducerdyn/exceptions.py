"""Exception hierarchy shared by all reducerdyn modules."""


class ReducerDynError(Exception):
    """Base class for all errors raised by reducerdyn."""


# --- geometry -------------------------------------------------------------

class GeometryViolation(ReducerDynError):
    """A geometric parameter set violates a profile invariant."""


class NonConvergence(ReducerDynError):
    """An iterative geometric solve exceeded its iteration cap."""


class DegenerateCurvature(ReducerDynError):
    """Curvature magnitude below threshold; caller must fall back to a segment normal."""


class DomainError(ReducerDynError):
    """An input lies outside the mathematical domain of the operation."""


# --- stiffness ------------------------------------------------------------

class OutOfRange(ReducerDynError):
    """A requested coordinate lies outside the sampled section range."""


class NonPositiveStiffness(ReducerDynError):
    """A stiffness component is not strictly positive."""


# --- contact --------------------------------------------------------------

class CoincidentCenters(ReducerDynError):
    """Two circle centers coincide; the contact normal is undefined."""


class NoIntersection(ReducerDynError):
    """The circle does not cross the segment chain (area-integral model)."""


class SearchFailure(ReducerDynError):
    """Analytic and probe contact stages both failed on a previously closed pair."""


class DimensionMismatch(ReducerDynError):
    """Force/jacobian dimensions are inconsistent during assembly."""


# --- dynamics -------------------------------------------------------------

class SchemaError(ReducerDynError):
    """Configuration document failed schema validation."""

    def __init__(self, message, path=None, line=None):
        loc = []
        if path:
            loc.append(str(path))
        if line is not None:
            loc.append(f"line {line}")
        prefix = f"[{': '.join(loc)}] " if loc else ""
        super().__init__(prefix + message)
        self.path = path
        self.line = line


class DanglingMarker(SchemaError):
    """A joint or contact references a marker that does not exist."""


class DuplicateBodyId(SchemaError):
    """Two bodies share the same id."""


class NewtonDivergence(ReducerDynError):
    """Implicit Newton iteration failed to converge; caller halves the step."""


class StepBelowMinimum(ReducerDynError):
    """Adaptive step control reached the minimum step size (fatal)."""


class SingularJacobian(ReducerDynError):
    """System iteration matrix could not be factorized."""


# --- loading --------------------------------------------------------------

class OutOfSchedule(ReducerDynError):
    """Requested time lies outside the torque schedule."""


class MissingCrossing(ReducerDynError):
    """Hysteresis loop lacks a required zero-torque crossing."""


class InsufficientBranchData(ReducerDynError):
    """A hysteresis branch has too few samples for metric extraction."""
