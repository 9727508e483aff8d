class DegenerateControlError(Exception):
    """Base class for every failure raised by the control toolkit."""


class ParameterDomainError(DegenerateControlError, ValueError):
    pass


class ConfigError(DegenerateControlError, ValueError):
    pass


class ConvergenceError(DegenerateControlError, ArithmeticError):
    def __init__(self, message: str, k: int = None):
        super().__init__(message)
        self.k = k


class PrecisionError(DegenerateControlError, ArithmeticError):
    pass


class TruncationError(PrecisionError):
    def __init__(self, message: str, achieved: float = None):
        super().__init__(message)
        self.achieved = achieved


class IntegrationError(DegenerateControlError, ArithmeticError):
    pass
