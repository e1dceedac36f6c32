"""Exception hierarchy shared by the solver modules."""


class SSIEError(Exception):
    """Base class for all solver errors."""


class SingularArgumentError(SSIEError, ValueError):
    """A Bessel/Hankel or kernel evaluation was requested at a singular point."""


class BranchCutError(SSIEError, ValueError):
    """Complex argument lies in the upper half-plane (growing-wave branch)."""


class GeometryError(SSIEError, ValueError):
    """Invalid boundary description (self-intersection, zero area, ...)."""


class ContractError(SSIEError, ValueError):
    """A precondition of an operation is violated."""


class SceneParseError(SSIEError, ValueError):
    """Malformed scene document."""


class ResonanceError(SSIEError, ArithmeticError):
    """A matrix that must be inverted is numerically singular."""

    def __init__(self, message, condition=float("nan"), frequency=None, region=None):
        super().__init__(message)
        self.condition = condition
        self.frequency = frequency
        self.region = region


class AssemblyError(SSIEError, ValueError):
    """Block dimensions of the global system are inconsistent."""


class MetricError(SSIEError, ValueError):
    """An error metric is undefined for the supplied reference."""


class TruncationError(SSIEError, ArithmeticError):
    """A series did not converge at the requested truncation order."""
