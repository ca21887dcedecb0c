"""Exception hierarchy for confgeo.

Numerical failures raise subclasses of :class:`ConfgeoError`; configuration
mistakes (bad dimensions, malformed component lists) raise ``ValueError`` as
usual.
"""


class ConfgeoError(Exception):
    """Base class for all confgeo runtime errors."""


class NotPositiveDefinite(ConfgeoError):
    """Metric evaluation produced a non-positive-definite matrix."""

    def __init__(self, message, smallest_eigenvalue=None):
        super().__init__(message)
        self.smallest_eigenvalue = smallest_eigenvalue


class DomainError(ConfgeoError):
    """Point lies outside the chart domain of the metric."""


class NonPositiveFactor(ConfgeoError):
    """A conformal factor evaluated to a non-positive value."""


class ConstraintViolation(ConfgeoError):
    """State violates the unit-tangent / perpendicularity constraints."""


class StepFailure(ConfgeoError):
    """Adaptive step size underflowed (typically near a chart boundary)."""


class MaxStepsExceeded(ConfgeoError):
    """Integration exceeded the configured step budget."""


class ZeroVector(ConfgeoError):
    """Operation undefined for the zero vector."""


class DegenerateDirection(ConfgeoError):
    """Direction with theta = pi/2: the exponential map degenerates there."""


class ResolutionTooCoarse(ConfgeoError):
    """Scan or mesh resolution below the configured minimum."""


class MeshTooCoarse(ConfgeoError):
    """Mesh too coarse for the requested query tolerance."""


class NoExitWithinTrace(ConfgeoError):
    """Trace ended inside the heart; extend t_end to observe the exit."""


class OutOfSafeRadius(ConfgeoError):
    """Distance query beyond the validated shooting radius."""

    def __init__(self, message, safe_radius=None):
        super().__init__(message)
        self.safe_radius = safe_radius


class ExprError(ConfgeoError):
    """Base class for expression-language errors."""


class ExprSyntaxError(ExprError):
    """Malformed expression source; carries the byte offset of the problem."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class UnknownIdentifier(ExprError):
    """Identifier is neither a variable x1..xd nor a known function."""


class VariableOutOfRange(ExprError):
    """Variable index exceeds the declared dimension."""


class EvalDomainError(ExprError):
    """Expression evaluated outside its domain (log of non-positive, ...)."""
