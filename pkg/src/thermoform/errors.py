"""Exception and warning types shared across the package."""


class ThermoformError(Exception):
    """Base class for all errors raised by thermoform."""


class DomainError(ThermoformError, ValueError):
    """A point or interval lies outside the map's domain."""


class MapError(ThermoformError, ValueError):
    """A polynomial does not define a valid self-map of its interval."""


class BudgetError(ThermoformError):
    """A tree, root or word enumeration would exceed its configured budget."""


class SingularityError(ThermoformError, ValueError):
    """A geometric potential was evaluated at (or next to) a critical point."""


class UnsupportedError(ThermoformError, TypeError):
    """The operation is not defined for this kind of potential."""


class ConvergenceError(ThermoformError):
    """An iterative solver did not converge within its iteration cap."""


class NotFoundError(ThermoformError):
    """A search (covering points, certificates) found nothing at this depth."""


class ConstructionError(ThermoformError, ValueError):
    """An IMFS could not be built from the requested data."""


class InvariantViolation(ThermoformError):
    """An internal invariant failed; signals malformed input objects."""


class AmbiguityError(ThermoformError):
    """Two point sets are neither clearly disjoint nor clearly equal."""


class PreconditionError(ThermoformError, ValueError):
    """An argument does not satisfy an operation's precondition."""


class SpecParseError(ThermoformError, ValueError):
    """A map or potential description string could not be parsed."""


class NearCriticalWarning(UserWarning):
    """Base point or preimages come close to the critical set."""


class NonHolderWarning(UserWarning):
    """A geometric potential was passed where a Hoelder potential is required."""


class CertificateQualityWarning(UserWarning):
    """An induced system reached fewer itinerary classes than expected."""


class IrreducibilityWarning(UserWarning):
    """A discretized transfer operator is not strongly connected."""
