import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from subspace_opt.errors import DegenerateSketch, InvalidConfig
from subspace_opt.firstorder import (FirstOrderEngine, SketchedModel, SketchSpec, TrueIterationSpec, alpha_low_qr,
                                     alpha_low_tr, h_qr, h_tr, is_true_iteration, qr_step, qr_subproblem_gradient,
                                     sketched_curvature, tr_exact_step, tr_step, trust_region_exact)
from subspace_opt.framework import StepControl, run
from subspace_opt.problems import ExtendedRosenbrock, quadratic
from subspace_opt.sketch import SketchOp, make_sketch, s_max_bound


def model(g, B, alpha, S=None, f0=0.0):
    g = np.atleast_1d(np.asarray(g, dtype=float))
    S = SketchOp.from_matrix(np.eye(g.size)) if S is None else S
    return SketchedModel(f0, g, np.atleast_2d(np.asarray(B, dtype=float)), S, alpha)


# -------------------------------------------------------------- QR step

def test_qr_scalar_example():
    s, dec = qr_step(model([1.0], [[1.0]], 1.0))
    assert s == pytest.approx([-0.5])
    # decrease of the unregularised model: 1/2 - 1/8
    assert dec == pytest.approx(0.375)
    # the regularised model decreases by 1/2 - (1/2)(1/4)(1 + 1) = 1/4
    assert dec - 0.5 * 0.25 == pytest.approx(0.25)
    assert dec >= 0.5 * 0.25


def test_qr_zero_gradient():
    s, dec = qr_step(model([0.0, 0.0], np.eye(2), 1.0))
    assert np.all(s == 0) and dec == 0.0


@pytest.mark.parametrize("seed", range(10))
def test_qr_stationary_in_sketched_space(seed):
    S = make_sketch("gaussian", 3, 10, seed=seed)
    g = np.random.default_rng(seed).standard_normal(10)
    Bh = sketched_curvature(None, None, S, np.eye(10))
    m = SketchedModel(0.0, S.apply(g), Bh, S, 0.7)
    s, dec = qr_step(m)
    assert np.linalg.norm(qr_subproblem_gradient(m, s)) <= 1e-10
    assert dec >= np.linalg.norm(S.apply_t(s)) ** 2 / (2 * 0.7) * (1 - 1e-12)


def test_qr_degenerate_sketch():
    S = SketchOp.from_matrix(np.array([[1.0, 0.0], [1.0, 0.0]]))
    with pytest.raises(DegenerateSketch):
        qr_step(SketchedModel(0.0, np.ones(2), np.zeros((2, 2)), S, 1.0))


# -------------------------------------------------------------- TR step

def test_tr_examples():
    s, dec = tr_step(model([1.0, 0.0], np.zeros((2, 2)), 0.5))
    assert s == pytest.approx([-0.5, 0.0]) and dec == pytest.approx(0.5)
    s, dec = tr_step(model([1.0, 0.0], np.eye(2), 10.0))
    assert s == pytest.approx([-1.0, 0.0]) and dec == pytest.approx(0.5)
    s, dec = tr_step(model([0.0, 0.0], np.eye(2), 1.0))
    assert np.all(s == 0) and dec == 0.0


@given(st.integers(1, 6), st.integers(0, 2**32), st.floats(1e-3, 1e3))
def test_cauchy_decrease_bound(l, seed, alpha):
    g = np.random.default_rng(seed)
    gh = g.standard_normal(l)
    M = g.standard_normal((l, l))
    B = M + M.T
    s, dec = tr_step(model(gh, B, alpha))
    gn, nB = np.linalg.norm(gh), np.linalg.norm(B, 2)
    assert np.linalg.norm(s) <= alpha * (1 + 1e-12)
    assert dec >= 0.5 * gn * min(alpha, gn / nB) * (1 - 1e-10)


@given(st.integers(1, 5), st.integers(0, 2**32), st.floats(1e-2, 1e2))
def test_exact_tr_kkt_and_beats_cauchy(l, seed, radius):
    g = np.random.default_rng(seed)
    gh = g.standard_normal(l)
    M = g.standard_normal((l, l))
    B = M + M.T
    s = trust_region_exact(gh, B, radius)
    ns = np.linalg.norm(s)
    assert ns <= radius * (1 + 1e-10)
    mval = lambda v: gh @ v + 0.5 * v @ B @ v
    _, cdec = tr_step(model(gh, B, radius))
    assert -mval(s) >= cdec - 1e-10 * max(1.0, cdec)
    # KKT: (B + lam I) s = -g with lam >= 0, B + lam I PSD
    r = -(B @ s + gh)
    lam = float(r @ s) / max(ns * ns, 1e-300)
    assert lam >= -1e-8 * max(1.0, np.abs(B).max())
    assert np.linalg.eigvalsh(B + lam * np.eye(l))[0] >= -1e-6 * max(1.0, np.abs(B).max())


def test_exact_tr_matches_grid_in_2d():
    g = np.random.default_rng(3)
    for _ in range(20):
        gh = g.standard_normal(2)
        M = g.standard_normal((2, 2))
        B = M + M.T
        s = trust_region_exact(gh, B, 1.0)
        t = np.linspace(0, 2 * np.pi, 4001)
        rr = np.linspace(0, 1, 401)
        P = (rr[:, None, None] * np.stack([np.cos(t), np.sin(t)], -1)[None]).reshape(-1, 2)
        vals = P @ gh + 0.5 * np.einsum("ij,jk,ik->i", P, B, P)
        assert gh @ s + 0.5 * s @ B @ s <= vals.min() + 1e-4


def test_exact_tr_hard_case():
    B = np.diag([-1.0, 2.0])
    s = trust_region_exact(np.array([0.0, 1.0]), B, 2.0)
    assert np.linalg.norm(s) == pytest.approx(2.0)
    assert s[1] == pytest.approx(-1 / 3)


def test_exact_step_zero_gradient():
    s, dec = tr_exact_step(model([0.0], [[-1.0]], 1.0))
    assert s == pytest.approx([0.0]) and dec == 0.0


# ---------------------------------------------------------------- truth

def test_truth_examples():
    g = np.array([1.0, -2.0, 0.5])
    assert is_true_iteration(SketchOp.from_matrix(np.eye(3)), g, TrueIterationSpec(0.3, 1.0))
    assert not is_true_iteration(SketchOp.from_matrix(np.zeros((2, 3))), g, TrueIterationSpec(0.3, 1.0))
    with pytest.raises(InvalidConfig):
        TrueIterationSpec(1.0)


def test_gaussian_truth_rate():
    l, d, trials = 64, 256, 10_000
    delta2 = math.exp(-2)
    spec = TrueIterationSpec(0.5, s_max_bound("gaussian", l, d, delta2=delta2))
    y = np.random.default_rng(0).standard_normal(d)
    hits = sum(is_true_iteration(make_sketch("gaussian", l, d, seed=t), y, spec) for t in range(trials))
    floor = 1 - math.exp(-4) - delta2
    assert hits / trials >= floor - 3 * math.sqrt(floor * (1 - floor) / trials)


# ----------------------------------------------------------- h functions

def test_h_qr_examples():
    th = 0.3
    assert h_qr(1, 1, 1, 1, 0, 1, th, 0) == pytest.approx(th / 8)
    assert h_qr(0, 1, 1, 1, 0, 1, th, 0) == 0.0


def test_h_tr_examples():
    assert h_tr(1, 1, 2, 1, 1, 0) == pytest.approx(0.5)
    assert h_tr(0, 1, 2, 1, 1, 0) == 0.0
    assert h_tr(0.5, 1e12, 2, 0.5, 0.2, 0.1) == pytest.approx(0.2 * 0.5 * 0.9 * 0.25 / 2)


def test_h_functions_monotone():
    eps = np.linspace(0, 2, 21)
    al = np.geomspace(1e-3, 1e3, 21)
    for h in (lambda e, a: h_qr(e, a, 2.0, 1.0, 0.1, 100.0, 0.1, 0.5),
              lambda e, a: h_tr(e, a, 3.0, 0.5, 0.1, 0.5)):
        H = np.array([[h(e, a) for a in al] for e in eps])
        assert np.all(H >= 0)
        assert np.all(np.diff(H, axis=0) >= -1e-15) and np.all(np.diff(H, axis=1) >= -1e-15)


# ------------------------------------------------------------ properties

@pytest.mark.parametrize("seed", range(10))
def test_taylor_gap_bound(seed):
    g = np.random.default_rng(seed)
    w = g.uniform(0.1, 4.0, 10)
    P = quadratic(10, w)
    x = g.standard_normal(10)
    S = make_sketch("gaussian", 3, 10, seed=seed)
    L = w.max()
    for _ in range(20):
        sh = g.standard_normal(3)
        step = S.apply_t(sh)
        mhat = P.f(x) + S.apply(P.grad(x)) @ sh
        assert abs(P.f(x + step) - mhat) <= 0.5 * L * step @ step * (1 + 1e-12)


@pytest.mark.parametrize("kind", ["qr", "tr"])
def test_true_iterations_below_alpha_low_succeed(kind):
    w = np.linspace(0.5, 3.0, 8)
    P = quadratic(8, w)
    L, th, eps = w.max(), 0.1, 1e-6
    spec = TrueIterationSpec(0.5, s_max_bound("gaussian", 4, 8, delta2=math.exp(-2)))
    alow = alpha_low_qr(th, L, 0.0) if kind == "qr" else alpha_low_tr(eps, 0.5, th, L, 0.0, spec.S_max)
    for seed in range(30):
        tr = run(P, FirstOrderEngine(kind, SketchSpec("gaussian", 4), spec), StepControl(theta=th), 60, eps, seed=seed)
        for r in tr.records:
            if r.is_true and r.alpha_k <= alow:
                assert r.successful


def test_engine_with_gauss_newton_curvature_is_monotone():
    P = ExtendedRosenbrock(8)
    tr = run(P, FirstOrderEngine("tr", SketchSpec("hashing_s", 4, 2), B="gauss_newton"), StepControl(), 80, 1e-6)
    assert all(r.f_k1 <= r.f_k for r in tr.records)
    assert tr.f_final < P.f(P.x0)
