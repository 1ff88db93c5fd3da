"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An operation was called with arguments outside its preconditions."""


class CapabilityError(RuntimeError):
    """The request is well formed but too large for an exact method."""


class NumericFailure(ArithmeticError):
    """A non-finite value appeared where finite numbers are required."""


class FormatError(ValueError):
    """A binary file has a bad magic number, version or truncated payload."""
