"""Exception hierarchy shared by all fsqd modules."""


class FSQDError(Exception):
    """Base class for library errors."""


class ValidationError(FSQDError, ValueError):
    """Input violates a documented precondition."""


class DimensionError(ValidationError):
    """Tensor extents do not match."""


class NumericalError(FSQDError, ArithmeticError):
    """A numerical routine failed or produced an out-of-tolerance result."""


class DegenerateInputError(ValidationError):
    """The input is degenerate for the requested operation."""
