"""Exception hierarchy shared by every module."""


class SubspaceOptError(Exception):
    """Base class for all package errors."""


class InvalidInput(SubspaceOptError, ValueError):
    """Malformed numerical input (shape, non-finite entries, zero vector...)."""


class InvalidConfig(SubspaceOptError, ValueError):
    """Parameters outside their admissible range."""


class SingularTriangular(SubspaceOptError, ArithmeticError):
    """Zero pivot met during an unperturbed triangular solve."""


class DegenerateSketch(SubspaceOptError, ArithmeticError):
    """The sketch collapsed a direction the computation relies on."""


class SubproblemFailure(SubspaceOptError, RuntimeError):
    """An inner solver failed to converge."""


class NumericalBreakdown(SubspaceOptError, ArithmeticError):
    """Non-finite objective or derivative values during a run.

    ``trace`` carries whatever was recorded before the breakdown.
    """

    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace


class BoundInfeasible(SubspaceOptError, ValueError):
    """The hypotheses of a complexity bound are not met."""


class MaxIterations(SubspaceOptError, RuntimeError):
    """Iteration cap reached; ``result`` holds the best iterate."""

    def __init__(self, msg, result=None):
        super().__init__(msg)
        self.result = result


class Stagnation(SubspaceOptError, RuntimeError):
    """Iterative solver stopped making progress; ``result`` holds the iterate."""

    def __init__(self, msg, result=None):
        super().__init__(msg)
        self.result = result
