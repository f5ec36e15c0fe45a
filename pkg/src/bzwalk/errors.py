"""Exception hierarchy shared by the simulator modules."""


class InvalidParameterError(ValueError):
    """A configuration value violates its documented constraints.

    ``field`` names the offending parameter so that command-line tools can
    report it verbatim.
    """

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class NumericalError(RuntimeError):
    """Base class for failures of a numerical procedure."""


class GaugeSingularityError(NumericalError):
    """Adjacent Bloch states are (nearly) orthogonal, so no smooth gauge exists."""


class BlowupError(NumericalError):
    """Non-finite values appeared during time stepping."""

    def __init__(self, step, message="non-finite wavefunction"):
        self.step = step
        super().__init__(f"{message} at step {step}")


class CollapseError(NumericalError):
    """Peak density grew beyond the collapse threshold (attractive interactions)."""


class ConvergenceError(NumericalError):
    """An iterative procedure did not reach its tolerance."""


class BoundaryViolationError(RuntimeError):
    """A walker confined to a subregion reached the edge of the zone."""
