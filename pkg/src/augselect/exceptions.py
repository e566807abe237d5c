"""Exception hierarchy.

Input problems derive from :class:`InputError` (CLI exit code 2), numerical
failures from :class:`NumericalError` (CLI exit code 3).
"""


class AugselectError(Exception):
    pass


class InputError(AugselectError, ValueError):
    pass


class FormatError(InputError):
    pass


class LengthError(FormatError):
    pass


class PairingError(FormatError):
    pass


class ParseError(FormatError):
    pass


class LabelError(InputError):
    pass


class SizeError(InputError):
    pass


class DataError(InputError):
    pass


class ParameterError(InputError):
    pass


class MetricError(InputError):
    pass


class ConfigError(InputError):
    pass


class NumericalError(AugselectError, ArithmeticError):
    pass


class ConvergenceError(NumericalError):
    def __init__(self, message, grad_norm=None):
        super().__init__(message)
        self.grad_norm = grad_norm


class ConditioningError(NumericalError):
    pass
