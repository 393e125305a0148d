"""Exception hierarchy for the lab.

Every failure that a caller might want to branch on gets its own class.
The CLI maps these onto exit codes: configuration problems exit 1,
invariant violations exit 2, solver failures exit 3.
"""


class OTLabError(Exception):
    """Base class for all package errors."""


class ConfigError(OTLabError):
    """Bad or missing configuration input. Carries the offending key."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"config key '{key}': {message}")


class DegenerateGeometryError(OTLabError):
    """Point set or domain has no full-dimensional interior."""


class EmptyDiscretizationError(OTLabError):
    """Discretization produced no cells inside the domain."""


class OverlapError(OTLabError):
    """Source and target geometries touch; the reservoir reduction needs
    strictly positive pair costs, so this configuration is refused."""


class MassError(OTLabError):
    """Requested transport fraction exceeds an available marginal."""


class InconsistentPlanError(OTLabError):
    """A plan failed an optimality or feasibility cross-check."""


class SectionBalanceError(OTLabError):
    """Centred section iteration stopped away from its balance target."""

    def __init__(self, offset: float, tolerance: float):
        self.offset = offset
        self.tolerance = tolerance
        super().__init__(
            f"unbalanced section: centre offset {offset:.6g} exceeds {tolerance:.6g}"
        )


class NullSectionError(OTLabError):
    """Section carries no measure, so ratio quantities are undefined."""


class FlatPotentialError(OTLabError):
    """Potential is flat at the base point; growth exponents are undefined."""


class InsufficientPointsError(OTLabError):
    """Too few sample points for the requested local estimate."""


class InvariantViolation(OTLabError):
    """A runtime self-check failed on data that should satisfy it."""


class SolverFailure(OTLabError):
    """The flow solver could not produce an optimal basis."""
