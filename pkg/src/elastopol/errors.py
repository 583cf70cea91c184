"""Exception types shared across the package."""


class ElastopolError(Exception):
    """Base class for all package-specific errors."""


class CapacityError(ElastopolError):
    """A size/refinement request exceeds the documented implementation cap."""


class InvalidParameterError(ElastopolError, ValueError):
    """A physical or geometric parameter violates its contract (e.g. delta <= 0)."""


class SingularPointError(ElastopolError, ValueError):
    """A kernel was evaluated at its singular point (x = 0 or x = y)."""


class UnsupportedOrderError(ElastopolError, ValueError):
    """A derivative order beyond the supported range was requested."""


class NearFieldError(ElastopolError):
    """An evaluation target is too close to the surface for the regular rule.

    Carries the offending distance so callers can diagnose the violation.
    """

    def __init__(self, message, distance=None):
        super().__init__(message)
        self.distance = distance


class MeshFormatError(ElastopolError, ValueError):
    """An OFF file (or mesh data) is malformed."""


class OrientationError(ElastopolError, ValueError):
    """A mesh is not a closed, consistently outward-oriented surface."""


class DimensionMismatchError(ElastopolError, ValueError):
    """Densities/operators refer to different meshes or sizes."""


class AssemblyFaultError(ElastopolError):
    """An assembled operator violates a structural requirement (e.g. the
    static single-layer Gram matrix is not negative definite)."""


class PoleError(ElastopolError, ValueError):
    """A rational map was evaluated at its pole (c = 1 or kappa = 1/2)."""


class SpectralInconsistencyError(ElastopolError):
    """A spectral quantity is inconsistent (e.g. no cubic root in (-1/2, 1/2))."""


class InsufficientDataError(ElastopolError, ValueError):
    """Not enough finite data points for the requested fit."""


class MissingArtifactError(ElastopolError):
    """A pipeline stage requires an artifact file that has not been produced."""


class ConfigError(ElastopolError, ValueError):
    """A run configuration violates the schema.

    ``violations`` lists every problem found, not only the first.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n" + "\n".join(
            f"  - {v}" for v in self.violations))
