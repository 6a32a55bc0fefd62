"""Exception hierarchy shared by all curveguide modules."""


class CurveGuideError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(CurveGuideError, ValueError):
    """Arguments violate a documented precondition."""


class DegenerateInputError(InvalidInputError):
    """Input is well-formed but geometrically degenerate (duplicates, zero length)."""


class OutOfRangeError(CurveGuideError, ValueError):
    """A query lies outside the domain of a curve or surface."""


class AmbiguityError(CurveGuideError):
    """A plane cuts a curve more than once."""


class GeometryError(CurveGuideError):
    """A construction could not be completed on the given geometry."""


class EmptyProgramError(CurveGuideError):
    """A toolpath generator produced no cutting moves."""
