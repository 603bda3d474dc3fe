"""Exception hierarchy.

``ConfigError`` subclasses map to CLI exit code 2, ``NumericalError``
subclasses to exit code 3.
"""


class VarietyError(Exception):
    pass


class ConfigError(VarietyError):
    pass


class ParseError(ConfigError):
    def __init__(self, message: str, text: str = "", position: int | None = None):
        self.text = text
        self.position = position
        if position is not None:
            message = f"{message} at position {position} in {text!r}"
        super().__init__(message)


class NumericalError(VarietyError):
    pass


class EvaluationError(NumericalError):
    """Division by zero, negative sqrt or an unbound name during evaluation."""


class ConvergenceError(NumericalError):
    pass


class RankDeficiencyError(NumericalError):
    """Newton met a (near) singular point of the variety."""

    def __init__(self, message: str, location=None):
        self.location = location
        super().__init__(message)


class StencilError(NumericalError):
    """Non-monotone tangential coordinates or a degenerate stencil."""


class ChartError(NumericalError):
    pass


class SingularMatrixError(NumericalError):
    pass
