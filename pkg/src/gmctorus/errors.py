"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    """A parameter is outside its documented domain."""


class PositivityViolation(ArithmeticError):
    """A covariance symbol has a negative mode beyond rounding tolerance."""

    def __init__(self, message, mode=None, value=None):
        super().__init__(message)
        self.mode = mode
        self.value = value


class InfiniteEntropy(ArithmeticError):
    """A tilt collapses a mode with positive base variance."""


class PreconditionViolation(RuntimeError):
    pass
