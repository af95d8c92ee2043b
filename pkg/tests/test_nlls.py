import math

import numpy as np
import pytest

from subspace_opt.errors import InvalidConfig, NumericalBreakdown
from subspace_opt.firstorder import SketchSpec, tr_exact_step
from subspace_opt.framework import StepControl, run
from subspace_opt.nlls import SgnEngine, data_profile, profile_csv, results_csv, sgn_model, solve_sgn
from subspace_opt.problems import BroydenTridiagonal, ExtendedRosenbrock, NlsProblem, builtin_problems, linear_ls
from subspace_opt.sketch import make_sketch


class Identity(NlsProblem):
    """r(x) = x."""

    def __init__(self, d):
        super().__init__()
        self.n = self.d = d
        self.x0 = np.arange(1.0, d + 1)

    def residual(self, x):
        return np.asarray(x, dtype=float).copy()

    def jacobian(self, x):
        return np.eye(self.d)

    def residual_curvature(self, x, w):
        return np.zeros((self.d, self.d))


# --------------------------------------------------------------- problems

@pytest.mark.parametrize("idx", range(7))
def test_jacobian_matches_central_differences(idx):
    P = builtin_problems(8, seed=idx)[idx]
    g = np.random.default_rng(idx)
    h = 1e-6
    for _ in range(20):
        x = P.x0 + 0.3 * g.standard_normal(P.d)
        v = g.standard_normal(P.d)
        fd = (P.residual(x + h * v) - P.residual(x - h * v)) / (2 * h)
        Jv = P.jacobian(x) @ v
        assert np.linalg.norm(Jv - fd) <= 1e-5 * max(np.linalg.norm(Jv), 1.0)


@pytest.mark.parametrize("idx", range(7))
def test_hessian_matches_gradient_differences(idx):
    P = builtin_problems(8, seed=idx)[idx]
    g = np.random.default_rng(100 + idx)
    x = P.x0 + 0.3 * g.standard_normal(P.d)
    v = g.standard_normal(P.d)
    h = 1e-6
    fd = (P.grad(x + h * v) - P.grad(x - h * v)) / (2 * h)
    Hv = P.hess(x) @ v
    assert np.linalg.norm(Hv - fd) <= 1e-5 * max(np.linalg.norm(Hv), 1.0)


def test_problem_examples():
    B = BroydenTridiagonal(8)
    assert 0 < B.f(B.x0) < math.inf
    R = ExtendedRosenbrock(2)
    assert R.f(np.ones(2)) == 0.0 and np.all(R.grad(np.ones(2)) == 0)
    names = {p.name for p in builtin_problems(8)}
    assert {"linear_ls_consistent", "linear_ls_inconsistent"} <= names
    assert all(p.f(p.x0) >= 0 for p in builtin_problems(8))


# ------------------------------------------------------------------ model

def test_model_identity_residual():
    P = Identity(4)
    m = sgn_model(P, P.x0, make_sketch("identity", 4, 4))
    assert np.array_equal(m.g_hat, P.x0)
    assert np.array_equal(m.B_hat, np.eye(4))
    assert P.counter.jacobian_actions == 4


def test_model_linear_is_gauss_newton():
    P = linear_ls(12, 6, consistent=False, seed=1)
    x = np.zeros(6)
    m = sgn_model(P, x, make_sketch("identity", 6, 6))
    s = np.linalg.solve(m.B_hat, -m.g_hat)
    assert s == pytest.approx(np.linalg.lstsq(P.A, P.b, rcond=None)[0], rel=1e-10)


def test_model_sampling_selects_columns():
    P = ExtendedRosenbrock(4)
    x = P.x0 + 0.1
    S = make_sketch("sampling", 2, 4, seed=3)
    m = sgn_model(P, x, S)
    Sd = S.dense()
    JSt = P.jacobian(x) @ Sd.T
    rows = [int(np.flatnonzero(r)[0]) for r in Sd]
    assert JSt == pytest.approx(math.sqrt(2) * P.jacobian(x)[:, rows])
    assert m.g_hat == pytest.approx(JSt.T @ P.residual(x))
    assert m.B_hat == pytest.approx(JSt.T @ JSt)
    assert P.counter.jacobian_actions == 2


def test_model_non_finite_residual():
    P = Identity(2)
    with pytest.raises(NumericalBreakdown):
        sgn_model(P, np.array([np.inf, 0.0]), make_sketch("identity", 2, 2))


def test_engine_rejects_bad_kind():
    with pytest.raises(InvalidConfig):
        SgnEngine("arc")
    with pytest.raises(InvalidConfig):
        SgnEngine("tr", tr_solver="dogleg")


# ------------------------------------------------------------------- runs

@pytest.mark.parametrize("kind", ["qr", "tr"])
def test_action_accounting(kind):
    P = BroydenTridiagonal(12)
    eng = SgnEngine(kind, SketchSpec("gaussian", 3))
    tr = run(P, eng, StepControl(), 25, 0.0, seed=4)
    assert P.counter.jacobian_actions == 3 * len(tr.records)


def test_sampling_step_stays_in_sampled_coordinates():
    P = BroydenTridiagonal(10)
    eng = SgnEngine("tr", SketchSpec("sampling", 3))
    tr = run(P, eng, StepControl(), 20, 0.0, seed=2, instrument=True)
    for r in tr.records:
        if r.x is None or not np.any(r.s):
            continue
        support = np.flatnonzero(r.s)
        assert support.size <= 3
    # reproduce one step and check the support against the drawn sketch
    S = make_sketch("sampling", 3, 10, seed=11)
    m = sgn_model(P, P.x0, S, alpha=1.0)
    s_hat, _ = tr_exact_step(m)
    step = S.apply_t(s_hat)
    outside = np.ones(10, bool)
    outside[np.flatnonzero(np.abs(S.dense()).sum(0))] = False
    assert np.all(step[outside] == 0.0)


@pytest.mark.parametrize("kind,solver", [("qr", "exact"), ("tr", "exact"), ("tr", "cauchy")])
def test_monotone_traces(kind, solver):
    for P in builtin_problems(8, seed=1):
        eng = SgnEngine(kind, SketchSpec("hashing_s", 4, 2), tr_solver=solver)
        tr = run(P, eng, StepControl(), 30, 0.0, seed=5)
        assert all(r.f_k1 <= r.f_k for r in tr.records), P.name


def test_consistent_linear_converges():
    P = linear_ls(20, 8, consistent=True, seed=2)
    res = solve_sgn(P, "tr", "identity", tau=1e-12)
    assert P.f(res.x) <= 1e-20
    assert len(res.trace.records) <= 10


def test_rosenbrock_full_subspace_meets_target():
    P = ExtendedRosenbrock(50)
    res = solve_sgn(P, "tr", "gaussian", l=50, tau=0.1, seed=0)
    f0 = P.f(P.x0)
    assert P.f(res.x) <= 0.1 * f0
    assert res.actions_to_target(f0, 0.0, 0.1) <= 50 * 50


def test_rosenbrock_half_subspace_success_rate():
    d = 50
    ok = 0
    for seed in range(100):
        P = ExtendedRosenbrock(d)
        res = solve_sgn(P, "tr", "gaussian", l=d // 2, tau=0.1, seed=seed)
        ok += res.actions_to_target(P.f(P.x0), 0.0, 0.1) <= 50 * d
    assert ok >= 80


def test_budget_is_respected():
    P = BroydenTridiagonal(20)
    res = solve_sgn(P, "tr", "gaussian", l=5, budget=40, tau=1e-12, f_star=0.0)
    assert res.counter.jacobian_actions <= 40
    assert res.actions_to_target(P.f(P.x0), 0.0, 1e-12) == math.inf


# --------------------------------------------------------------- profiles

def test_profile_examples():
    p = data_profile({("a", "s"): 0.0}, {"a": 4}, [0.0, 1.0])
    assert p["s"].pi[0] == 1.0
    p = data_profile({("a", "s"): 3.0, ("b", "s"): math.inf}, {"a": 1, "b": 1}, [0.0, 50.0])
    assert list(p["s"].pi) == [0.0, 0.5]


def test_profile_hand_table():
    dims = {"p1": 2, "p2": 4, "p3": 5, "p4": 10, "p5": 1}
    N = {
        "A": [2, 10, math.inf, 30, 0],
        "B": [1, 4, 5, math.inf, 3],
        "C": [math.inf, math.inf, 25, 10, 1],
    }
    res = {(p, s): N[s][i] for s in N for i, p in enumerate(sorted(dims))}
    grid = [0, 1, 2, 3, 5]
    # N_p / d_p per solver: A (1, 2.5, inf, 3, 0), B (0.5, 1, 1, inf, 3), C (inf, inf, 5, 1, 1)
    table = {
        "A": [0.2, 0.4, 0.4, 0.8, 0.8],
        "B": [0.0, 0.6, 0.6, 0.8, 0.8],
        "C": [0.0, 0.4, 0.4, 0.4, 0.6],
    }
    prof = data_profile(res, dims, grid)
    for s, want in table.items():
        assert prof[s].pi == pytest.approx(want)
        assert np.all(np.diff(prof[s].pi) >= 0)


def test_result_csv_deterministic():
    rows = []
    for seed in (1, 0):
        for l in (2, 4):
            P = BroydenTridiagonal(8)
            r = solve_sgn(P, "tr", "gaussian", l=l, seed=seed, f_star=0.0)
            rows.append(dict(problem=P.name, solver=f"gaussian-l{l}", seed=seed, l=l,
                             N_p=r.actions_to_target(P.f(P.x0), 0.0, 0.1), wall_time=r.wall_time))
    a, b = results_csv(rows), results_csv(list(reversed(rows)))
    assert a == b
    assert a.splitlines()[0] == "problem,solver,seed,l,N_p,wall_time"
    assert all(line.endswith(",") for line in a.splitlines()[1:])
    res = {(r["problem"] + f"#{r['seed']}", r["solver"]): r["N_p"] for r in rows}
    dims = {k[0]: 8 for k in res}
    assert profile_csv(data_profile(res, dims, [0, 1, 10])).startswith("alpha,gaussian-l2,gaussian-l4\n")
