import numpy as np
import pytest

from subspace_opt.diagnostics import arc_horizon, check_counting, monotone, segment_constants, trace_constants
from subspace_opt.firstorder import FirstOrderEngine, SketchSpec, alpha_low_qr
from subspace_opt.framework import StepControl, run
from subspace_opt.problems import FunctionProblem, quadratic


def test_segment_constants_quadratic():
    P = quadratic(3, [1.0, -4.0, 2.0])
    L, LH = segment_constants(P, np.ones(3), np.array([0.5, 0.0, -1.0]))
    assert L == pytest.approx(4.0) and LH == pytest.approx(0.0)


def test_segment_constants_cubic():
    # f = x^3 / 6: hess = x, so the Hessian is 1-Lipschitz and L on [1, 3] is 3
    P = FunctionProblem("cubic", np.zeros(1), lambda x: x[0] ** 3 / 6, lambda x: x**2 / 2, lambda x: np.array([[x[0]]]))
    L, LH = segment_constants(P, np.array([1.0]), np.array([2.0]))
    assert L == pytest.approx(3.0) and LH == pytest.approx(1.0)
    assert segment_constants(P, np.array([1.0]), np.array([0.0])) == (1.0, 0.0)


def test_trace_helpers():
    P = quadratic(6, np.linspace(1, 3, 6))
    ctrl = StepControl()
    tr = run(P, FirstOrderEngine("qr", SketchSpec("gaussian", 3)), ctrl, 100, 1e-6, seed=0, instrument=True)
    assert monotone(tr)
    L, _ = trace_constants(P, tr)
    assert L == pytest.approx(3.0)
    chk = check_counting(tr, alpha_low_qr(ctrl.theta, L, 0.0))
    assert chk.low_alpha_true and chk.unsuccessful
    assert arc_horizon(tr) == (len(tr.records) if tr.n_eps is None else max(tr.n_eps - 1, 0))
    with pytest.raises(ValueError):
        trace_constants(P, run(P, FirstOrderEngine("qr", SketchSpec("gaussian", 3)), ctrl, 3, 0.0))
