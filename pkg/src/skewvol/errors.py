"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the requested operation."""


class ConvergenceError(ArithmeticError):
    """Adaptive integration ran out of subdivisions before meeting its tolerance.

    The best available estimate is kept on the exception so callers can decide
    whether it is good enough.
    """

    def __init__(self, message: str, value: float, err_estimate: float):
        super().__init__(message)
        self.value = value
        self.err_estimate = err_estimate
