"""Acceptance checks, shared by the test-suite and ``cli verify``.

Every check compares an implementation against an independent oracle
(LAPACK SVD, pseudoinverse, brute-force grids, closed-form bounds) and
returns a :class:`CheckResult`.  ``scale`` shrinks trial counts for quick
runs; 1.0 is the full acceptance setting.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import rng as rngmod
from .arc import ArcEngine, ArcTruthSpec, alpha_low_arc, h_arc_first, solve_cubic
from .diagnostics import (arc_horizon, check_counting, cubic_decrease_violations, decrease_floor_violations,
                          monotone, trace_constants)
from .firstorder import (FirstOrderEngine, SketchSpec, TrueIterationSpec, alpha_low_qr, alpha_low_tr, h_qr, h_tr)
from .framework import StepControl, Trace, chernoff_bound, chernoff_frequency, run
from .lls import LlsConfig, build_preconditioner, lsqr_iteration_bound, sketch_solve, sketched_solution
from .nlls import solve_sgn
from .problems import ExtendedRosenbrock, builtin_problems
from .sketch import embedding_report, gaussian_jl_delta, jl_failure_rate, make_sketch, s_max_bound


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"criterion {self.number:2d} {'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _timed(number: int, name: str, fn: Callable[[], tuple[bool, str]]) -> CheckResult:
    t0 = time.perf_counter()
    ok, detail = fn()
    return CheckResult(number, name, bool(ok), detail, time.perf_counter() - t0)


def _n(count: int, scale: float) -> int:
    return max(1, int(round(count * scale)))


def _svd_lstsq(A, b) -> np.ndarray:
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    keep = s > 1e-12 * s[0]
    return Vt[keep].T @ ((U[:, keep].T @ b) / s[keep])


# --------------------------------------------------------------- 1 and 4

def _precond_trials(scale: float):
    """Criterion-1 trials: 400 x 20 Gaussian A, Gaussian sketch m = 80."""
    out = []
    for t in range(_n(50, scale)):
        g = rngmod.stream(t, 1001)
        A = g.standard_normal((400, 20))
        b = g.standard_normal(400)
        cfg = LlsConfig(m=80, ensemble="gaussian")
        pre = build_preconditioner(A, b, cfg, seed=t)
        sv = np.linalg.svd(pre.dense_W(A), compute_uv=False)
        eps = embedding_report(pre.S, A).eps_measured
        _, diag = sketch_solve(A, b, cfg, seed=t)
        out.append((eps, (sv[0] / sv[-1]) ** 2, diag.lsqr_iterations))
    return out


def criterion_1(scale: float = 1.0) -> CheckResult:
    def body():
        t0 = time.perf_counter()
        trials = _precond_trials(scale)
        elapsed = time.perf_counter() - t0
        viol = sum(1 for e, k2, _ in trials if e < 1.0 and k2 > (1.0 + e) / (1.0 - e))
        vac = sum(1 for e, _, _ in trials if e >= 1.0)
        ok = viol == 0 and elapsed < 10.0
        return ok, (f"{len(trials)} trials, {viol} violations of kappa(W^T W) <= (1+eps)/(1-eps); "
                    f"{vac} trials had eps >= 1 (bound vacuous); {elapsed:.2f}s")
    return _timed(1, "preconditioner condition bound", body)


def criterion_4(scale: float = 1.0) -> CheckResult:
    def body():
        trials = _precond_trials(scale)
        q = [(e, it) for e, _, it in trials if e <= 0.5]
        viol = sum(1 for e, it in q if it > lsqr_iteration_bound(e, 1e-6))
        # taller systems with m = 40 d so that eps <= 0.5 actually occurs
        sup, sviol = 0, 0
        for t in range(_n(50, scale)):
            g = rngmod.stream(t, 1004)
            A = g.standard_normal((2000, 20))
            b = g.standard_normal(2000)
            _, dg = sketch_solve(A, b, LlsConfig(m=800, ensemble="gaussian", tau_r=1e-6), seed=t)
            if dg.eps_measured <= 0.5:
                sup += 1
                sviol += dg.lsqr_iterations > lsqr_iteration_bound(dg.eps_measured, 1e-6)
        ok = viol == 0 and sviol == 0 and sup > 0
        return ok, (f"criterion-1 trials with eps <= 0.5: {len(q)} ({viol} violations); "
                    f"supplementary 2000x20, m=800: {sup} qualifying, {sviol} violations")
    return _timed(4, "LSQR iteration bound", body)


# --------------------------------------------------------------- 2 and 3

def criterion_2(scale: float = 1.0) -> CheckResult:
    def body():
        viol, vac, worst = 0, 0, 0.0
        T = _n(50, scale)
        for t in range(T):
            g = rngmod.stream(t, 1002)
            A = g.standard_normal((200, 10))
            b = g.standard_normal(200)
            xs, pre = sketched_solution(A, b, LlsConfig(m=100, ensemble="gaussian"), seed=t)
            eps = embedding_report(pre.S, np.column_stack([A, b])).eps_measured
            xstar = _svd_lstsq(A, b)
            ratio = np.linalg.norm(A @ xs - b) / np.linalg.norm(A @ xstar - b)
            if eps >= 1.0:
                vac += 1
            elif ratio > (1.0 + eps) / (1.0 - eps):
                viol += 1
            else:
                worst = max(worst, ratio * (1.0 - eps) / (1.0 + eps))
        return viol == 0, f"{T} trials, {viol} violations, {vac} with eps >= 1; worst ratio/bound {worst:.3f}"
    return _timed(2, "explicit-sketch residual bound", body)


def criterion_3(scale: float = 1.0) -> CheckResult:
    def body():
        worst_mn, worst_res, T = 0.0, 0.0, _n(20, scale)
        for t in range(T):
            g = rngmod.stream(t, 1003)
            n, d = 80, 12
            r = 3 + t % 7
            A = g.standard_normal((n, r)) @ g.standard_normal((r, d))
            b = g.standard_normal(n)
            xp = np.linalg.pinv(A) @ b
            x, _ = sketch_solve(A, b, LlsConfig(m=48, ensemble="gaussian", min_norm=True, tau_r=1e-14), seed=t)
            worst_mn = max(worst_mn, np.linalg.norm(x - xp) / np.linalg.norm(xp))
            x2, _ = sketch_solve(A, b, LlsConfig(m=48, ensemble="gaussian", tau_r=1e-14), seed=t)
            rp = np.linalg.norm(A @ xp - b)
            worst_res = max(worst_res, abs(np.linalg.norm(A @ x2 - b) - rp) / rp)
        ok = worst_mn <= 1e-8 and worst_res <= 1e-8
        return ok, f"{T} instances; min-norm rel. error {worst_mn:.1e}; basic-solution residual gap {worst_res:.1e}"
    return _timed(3, "minimal-norm recovery", body)


# --------------------------------------------------------------- 5 and 6

def criterion_5(scale: float = 1.0) -> CheckResult:
    def body():
        trials = _n(100_000, scale)
        t0 = time.perf_counter()
        rate = jl_failure_rate("gaussian", 64, 32, 0.5, trials, seed=5)
        el = time.perf_counter() - t0
        bound = gaussian_jl_delta(0.5, 64)
        sigma = math.sqrt(bound * (1.0 - bound) / trials)
        ok = rate <= bound + 3 * sigma and el < 30.0
        return ok, f"rate {rate:.5f} vs e^-4 + 3 sigma = {bound + 3 * sigma:.5f} over {trials} trials; {el:.1f}s"
    return _timed(5, "Gaussian JL failure bound", body)


def criterion_6(scale: float = 1.0) -> CheckResult:
    def body():
        cases = [("hashing_s", 16, 64, 4), ("stable_one_hashing", 16, 64, 1), ("sampling", 16, 64, 1),
                 ("hashing_s", 4, 100, 4), ("stable_one_hashing", 4, 10, 1), ("sampling", 2, 8, 1)]
        seeds = _n(1000, scale)
        msgs, viol = [], 0
        for ens, l, d, s in cases:
            bound = s_max_bound(ens, l, d, s=s)
            worst = 0.0
            for seed in range(seeds):
                S = make_sketch(ens, l, d, s=s, seed=seed)
                nrm = float(np.linalg.svd(S.dense(), compute_uv=False)[0])
                worst = max(worst, nrm)
                viol += nrm > bound * (1 + 1e-12)
            msgs.append(f"{ens}({l}x{d}) max {worst:.3f} <= {bound:.3f}")
        return viol == 0, f"{seeds} seeds each, {viol} violations; " + "; ".join(msgs)
    return _timed(6, "deterministic sketch norm bounds", body)


# --------------------------------------------------------------- 7 and 8

@dataclass
class SuiteRun:
    problem: str
    engine: str
    seed: int
    trace: Trace
    L: float
    LH: float


@dataclass
class SuiteConfig:
    d: int = 8
    l: int = 4
    budget: int = 60
    eps: float = 1e-4
    eps_S: float = 0.5
    delta2: float = math.exp(-2.0)
    safety: float = 2.0
    ctrl: StepControl = field(default_factory=StepControl)

    @property
    def S_max(self) -> float:
        return s_max_bound("gaussian", self.l, self.d, delta2=self.delta2)


def suite_engine(kind: str, cfg: SuiteConfig):
    sk = SketchSpec("gaussian", cfg.l)
    if kind == "arc":
        return ArcEngine(sk, ArcTruthSpec("norm_only", cfg.eps_S, cfg.S_max, alpha_max=cfg.ctrl.alpha_max))
    return FirstOrderEngine(kind, sk, TrueIterationSpec(cfg.eps_S, cfg.S_max))


def suite_runs(seeds: int, cfg: SuiteConfig = SuiteConfig()) -> list[SuiteRun]:
    out = []
    for P in builtin_problems(cfg.d):
        for kind in ("qr", "tr", "arc"):
            eng = suite_engine(kind, cfg)
            for seed in range(seeds):
                tr = run(P, eng, cfg.ctrl, cfg.budget, cfg.eps, seed=seed, instrument=True)
                L, LH = trace_constants(P, tr, points=4)
                out.append(SuiteRun(P.name, kind, seed, tr, L, LH))
    return out


def alpha_low_for(r: SuiteRun, cfg: SuiteConfig) -> float:
    th = cfg.ctrl.theta
    if r.engine == "qr":
        return alpha_low_qr(th, cfg.safety * r.L, 0.0)
    if r.engine == "tr":
        return alpha_low_tr(cfg.eps, cfg.eps_S, th, cfg.safety * r.L, 0.0, cfg.S_max)
    return alpha_low_arc(th, cfg.safety * r.LH)


def criterion_7(runs: list[SuiteRun], cfg: SuiteConfig = SuiteConfig()) -> CheckResult:
    def body():
        g_bad = k_bad = low = 0
        for r in runs:
            horizon = arc_horizon(r.trace) if r.engine == "arc" else None
            cc = check_counting(r.trace, alpha_low_for(r, cfg), horizon)
            g_bad += not cc.low_alpha_true
            k_bad += not cc.unsuccessful
            low += cc.low_alpha_failures
        ok = g_bad == 0 and k_bad == 0 and low == 0
        return ok, (f"{len(runs)} traces; low-alpha true-count violations {g_bad}, unsuccessful-count violations {k_bad}, "
                    f"unsuccessful true iterations below alpha_min {low}")
    return _timed(7, "counting inequalities", body)


def arc_floor_runs(seeds: int, cfg: SuiteConfig = SuiteConfig()) -> list[SuiteRun]:
    """Cubic runs under the Hessian-embedding truth: full space and sketched."""
    out = []
    for P in builtin_problems(cfg.d):
        full = ArcEngine(SketchSpec("identity", cfg.d),
                         ArcTruthSpec("hessian_embedding", cfg.eps_S, 1.0, alpha_max=cfg.ctrl.alpha_max))
        tr = run(P, full, cfg.ctrl, cfg.budget, cfg.eps, seed=0, instrument=True)
        L, LH = trace_constants(P, tr, points=4)
        out.append(SuiteRun(P.name, "arc-full", 0, tr, L, LH))
        sk = ArcEngine(SketchSpec("gaussian", cfg.l),
                       ArcTruthSpec("hessian_embedding", cfg.eps_S, cfg.S_max, alpha_max=cfg.ctrl.alpha_max))
        for seed in range(seeds):
            tr = run(P, sk, cfg.ctrl, cfg.budget, cfg.eps, seed=seed, instrument=True)
            L, LH = trace_constants(P, tr, points=4)
            out.append(SuiteRun(P.name, "arc-embed", seed, tr, L, LH))
    return out


def criterion_8(runs: list[SuiteRun], arc_runs: list[SuiteRun], cfg: SuiteConfig = SuiteConfig()) -> CheckResult:
    def body():
        c = cfg.ctrl
        mono_bad = floor_bad = cubic_bad = checked = 0
        for r in runs + arc_runs:
            mono_bad += not monotone(r.trace)
            if r.engine == "qr":
                h = lambda a: h_qr(cfg.eps, a, cfg.S_max, 0.0, 0.0, c.alpha_max, c.theta, cfg.eps_S)
                floor_bad += decrease_floor_violations(r.trace, h, cfg.eps)
            elif r.engine == "tr":
                h = lambda a: h_tr(cfg.eps, a, 0.0, 0.5, c.theta, cfg.eps_S)
                floor_bad += decrease_floor_violations(r.trace, h, cfg.eps)
            else:
                cubic_bad += cubic_decrease_violations(r.trace, c.theta)
                if r.engine != "arc":
                    smax = 1.0 if r.engine == "arc-full" else cfg.S_max
                    eng_kt = 1e-8
                    LH = cfg.safety * r.LH
                    h = lambda a: h_arc_first(cfg.eps, a, cfg.eps_S, smax, eng_kt, LH, c.theta, c.alpha_max)
                    floor_bad += decrease_floor_violations(r.trace, h, cfg.eps, use_trial_gradient=True)
            checked += sum(1 for rec in r.trace.records if rec.is_true and rec.successful)
        ok = mono_bad == 0 and floor_bad == 0 and cubic_bad == 0
        return ok, (f"{len(runs) + len(arc_runs)} traces, {checked} true+successful iterations; "
                    f"non-monotone traces {mono_bad}, h-floor violations {floor_bad}, "
                    f"cubic-decrease violations {cubic_bad}")
    return _timed(8, "monotonicity and decrease floors", body)


# --------------------------------------------------------------- 9 and 10

def cubic_objective(g, H, alpha, U) -> np.ndarray:
    """g^T u + 1/2 u^T H u + ||u||^3 / (3 alpha) for each row of U."""
    nu = np.linalg.norm(U, axis=1)
    return U @ g + 0.5 * np.einsum("ij,jk,ik->i", U, H, U) + nu**3 / (3.0 * alpha)


def cubic_radius(g, H, alpha) -> float:
    """A priori bound on the minimiser norm from (H + lam I) u = -g, lam = ||u|| / alpha."""
    lmin = float(np.linalg.eigvalsh(H)[0])
    gn = float(np.linalg.norm(g))
    return 0.5 * alpha * (-lmin + math.sqrt(lmin * lmin + 4.0 * gn / alpha)) + 1e-9


def grid_minimum(g, H, alpha, h: float = 1e-3) -> tuple[float, float]:
    """Brute-force minimum over a grid of spacing h covering the a priori ball; returns (min, slack)."""
    R = cubic_radius(g, H, alpha)
    ax = np.arange(-R, R + h, h)
    l = g.size
    best = math.inf
    if l == 1:
        best = float(cubic_objective(g, H, alpha, ax[:, None]).min())
    else:
        for chunk in np.array_split(ax, max(1, ax.size // 200)):
            X, Y = np.meshgrid(chunk, ax, indexing="ij")
            U = np.column_stack([X.ravel(), Y.ravel()])
            best = min(best, float(cubic_objective(g, H, alpha, U).min()))
    # the gradient is bounded on the ball, so some grid point is within this of the minimum
    G = float(np.linalg.norm(g)) + float(np.linalg.norm(H, 2)) * R + R * R / alpha
    return best, G * h * math.sqrt(l) / 2.0


def random_cubic(t: int, seed: int = 9) -> tuple[np.ndarray, np.ndarray, float]:
    g = rngmod.stream(seed, t)
    l = int(g.integers(1, 11)) if t % 5 else int(g.integers(1, 3))
    A = g.standard_normal((l, l))
    H = 0.5 * (A + A.T)
    gv = g.standard_normal(l) * 10 ** g.uniform(-1, 0.5)
    if t % 17 == 0:
        # hard-case family: gradient orthogonal to the bottom eigenvector
        w, Q = np.linalg.eigh(H)
        gv = gv - Q[:, 0] * (Q[:, 0] @ gv)
    alpha = float(10 ** g.uniform(-0.5, 0.5))
    return gv, H, alpha


def criterion_9(scale: float = 1.0) -> CheckResult:
    def body():
        T = _n(500, scale)
        sec_bad = opt_bad = grid_checked = 0
        for t in range(T):
            gv, H, alpha = random_cubic(t)
            sol = solve_cubic(gv, H, alpha)
            gn = max(float(np.linalg.norm(gv)), 1e-300)
            res = float(np.linalg.norm((H + sol.lam * np.eye(gv.size)) @ sol.u + gv))
            lam_gap = abs(sol.lam - float(np.linalg.norm(sol.u)) / alpha)
            psd = float(np.linalg.eigvalsh(H)[0]) + sol.lam >= -1e-10
            if not (res <= 1e-8 * gn and lam_gap <= 1e-8 * (1.0 + sol.lam) and psd):
                sec_bad += 1
            if gv.size <= 2:
                grid_checked += 1
                m_sol = float(cubic_objective(gv, H, alpha, sol.u[None, :])[0])
                m_grid, slack = grid_minimum(gv, H, alpha)
                if m_sol > m_grid + 1e-10 or m_grid - m_sol > slack:
                    opt_bad += 1
        ok = sec_bad == 0 and opt_bad == 0 and grid_checked > 0
        return ok, (f"{T} subproblems, {sec_bad} secular-equation failures; "
                    f"{grid_checked} grid-checked (l <= 2), {opt_bad} worse than the grid")
    return _timed(9, "cubic subproblem optimality", body)


def criterion_10(scale: float = 1.0) -> CheckResult:
    def body():
        P = ExtendedRosenbrock(10)
        I = SketchSpec("identity", 10)
        ctrl = StepControl()
        arc = run(P, ArcEngine(I, ArcTruthSpec("hessian_embedding", S_max=1.0)), ctrl, 200, 1e-5)
        qr = run(P, FirstOrderEngine("qr", I, B="gauss_newton"), ctrl, 1000, 1e-3)
        tr = run(P, FirstOrderEngine("tr", I, B="gauss_newton"), ctrl, 1000, 1e-3)
        ok = all(t.n_eps is not None for t in (arc, qr, tr))
        return ok, f"ARC N_eps = {arc.n_eps} (<= 200), QR N_eps = {qr.n_eps}, TR N_eps = {tr.n_eps} (<= 1000)"
    return _timed(10, "full-space convergence", body)


# --------------------------------------------------------------- 11 and 12

def criterion_11(scale: float = 1.0) -> CheckResult:
    def body():
        runs = _n(100_000, scale)
        msgs, ok = [], True
        for dS, d1, N in [(0.1, 0.3, 50), (0.2, 0.5, 100)]:
            freq = chernoff_frequency(dS, d1, N, runs, seed=11)
            b = chernoff_bound(dS, d1, N)
            sig = math.sqrt(max(b * (1 - b), 1e-300) / runs)
            ok &= freq <= b + 3 * sig
            msgs.append(f"({dS}, {d1}, {N}): freq {freq:.5f} vs bound {b:.5f} + 3 sigma")
        return ok, f"{runs} traces each; " + "; ".join(msgs)
    return _timed(11, "Chernoff simulation", body)


def criterion_12(scale: float = 1.0) -> CheckResult:
    def body():
        seeds = _n(100, scale)
        hit = 0
        for seed in range(seeds):
            P = ExtendedRosenbrock(50)
            res = solve_sgn(P, "tr", "gaussian", 25, seed=seed, tau=0.1)
            hit += res.actions_to_target(P.f(P.x0), 0.0, 0.1) <= 50 * 50
        return hit >= 0.8 * seeds, f"{hit}/{seeds} seeds reached the tau = 0.1 target within 2500 actions"
    return _timed(12, "R-SGN on extended Rosenbrock", body)


SUITES = {
    "lls": (1, 2, 3, 4),
    "sketch": (5, 6),
    "framework": (7, 8, 11),
    "arc": (9, 10),
    "nlls": (12,),
}


def run_criteria(numbers, scale: float = 1.0, seeds: Optional[int] = None) -> list[CheckResult]:
    """Run the requested criteria; 7 and 8 share one batch of traces."""
    numbers = sorted(set(numbers))
    simple = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5, 6: criterion_6,
              9: criterion_9, 10: criterion_10, 11: criterion_11, 12: criterion_12}
    out = []
    runs = arc_runs = None
    cfg = SuiteConfig()
    for n in numbers:
        if n in simple:
            out.append(simple[n](scale))
            continue
        if runs is None:
            runs = suite_runs(seeds if seeds is not None else _n(200, scale), cfg)
        if n == 7:
            out.append(criterion_7(runs, cfg))
        elif n == 8:
            if arc_runs is None:
                arc_runs = arc_floor_runs(_n(20, scale), cfg)
            out.append(criterion_8(runs, arc_runs, cfg))
    return out
