"""Random-subspace optimisation and sketched linear least squares."""
from .errors import (BoundInfeasible, DegenerateSketch, InvalidConfig, InvalidInput, MaxIterations,
                     NumericalBreakdown, SingularTriangular, Stagnation, SubproblemFailure, SubspaceOptError)
from .framework import StepControl, Trace, run
from .sketch import SketchOp, make_sketch

__all__ = [
    "BoundInfeasible", "DegenerateSketch", "InvalidConfig", "InvalidInput", "MaxIterations",
    "NumericalBreakdown", "SingularTriangular", "Stagnation", "SubproblemFailure", "SubspaceOptError",
    "StepControl", "Trace", "run", "SketchOp", "make_sketch",
]
