"""Random-subspace Gauss-Newton for nonlinear least squares, with data profiles.

Each iteration spends exactly ``l`` Jacobian actions building ``J S^T``;
the sketched gradient and Gauss-Newton matrix both come from that block.
"""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DegenerateSketch, InvalidConfig, NumericalBreakdown
from .firstorder import SketchedModel, SketchSpec, TrueIterationSpec, is_true_iteration, qr_step, tr_exact_step, tr_step
from .framework import StepControl, StepResult, Trace, run
from .problems import ActionCounter, NlsProblem
from .sketch import SketchOp


def sgn_model(problem: NlsProblem, x, S: SketchOp, alpha: float = 1.0) -> SketchedModel:
    """Sketched Gauss-Newton model from l Jacobian actions: g_hat = (J S^T)^T r, B_hat = (J S^T)^T J S^T."""
    x = np.asarray(x, dtype=float)
    r = problem.r(x)
    if not np.all(np.isfinite(r)):
        raise NumericalBreakdown("non-finite residual")
    JSt = problem.jac_action(x, S.apply_t(np.eye(S.m)))
    return SketchedModel(0.5 * float(r @ r), JSt.T @ r, JSt.T @ JSt, S, alpha)


@dataclass
class SgnEngine:
    """Sketched Gauss-Newton step; trust region by default.

    ``tr_solver='exact'`` solves the l x l trust-region subproblem exactly,
    which always achieves at least the Cauchy decrease; ``'cauchy'`` takes
    the Cauchy point.
    """

    kind: str = "tr"
    sketch: SketchSpec = field(default_factory=SketchSpec)
    truth: TrueIterationSpec = field(default_factory=TrueIterationSpec)
    tr_solver: str = "exact"

    def __post_init__(self):
        if self.kind not in ("qr", "tr"):
            raise InvalidConfig(f"engine kind must be 'qr' or 'tr', got {self.kind!r}")
        if self.tr_solver not in ("exact", "cauchy"):
            raise InvalidConfig(f"tr_solver must be 'exact' or 'cauchy', got {self.tr_solver!r}")

    @property
    def name(self) -> str:
        return f"rsgn-{self.kind}"

    def step(self, problem, x, fx, gx, alpha, rng, k) -> StepResult:
        d = x.size
        S = self.sketch.draw(d, int(rng.integers(0, 2**63 - 1)))
        model = sgn_model(problem, x, S, alpha)
        is_true = is_true_iteration(S, gx, self.truth)
        try:
            if self.kind == "qr":
                s_hat, dec = qr_step(model)
            elif self.tr_solver == "exact":
                s_hat, dec = tr_exact_step(model)
            else:
                s_hat, dec = tr_step(model)
        except DegenerateSketch:
            return StepResult(np.zeros(d), 0.0, is_true, degenerate=True)
        return StepResult(S.apply_t(s_hat), dec, is_true, info={"actions": problem.counter.jacobian_actions})


@dataclass
class SgnResult:
    x: np.ndarray
    trace: Trace
    counter: ActionCounter
    # (Jacobian actions spent before evaluating f at the iterate, f at the iterate)
    history: list = field(default_factory=list)
    wall_time: float = 0.0

    def actions_to_target(self, f0: float, f_star: float, tau: float) -> float:
        """N_p: actions spent when f first reaches f_star + tau (f0 - f_star); inf if never."""
        target = f_star + tau * (f0 - f_star)
        for a, fv in self.history:
            if fv <= target:
                return float(a)
        return math.inf


def solve_sgn(problem: NlsProblem, engine: str = "tr", ensemble: str = "gaussian", l: Optional[int] = None,
              ctrl: Optional[StepControl] = None, budget: Optional[int] = None, tau: float = 0.1,
              f_star: Optional[float] = None, seed: int = 0, s: int = 1, tr_solver: str = "exact") -> SgnResult:
    """Run R-SGN until the action budget (default 50 d) is spent or the tau target is met.

    The target uses ``f_star`` if given, else ``problem.f_star``; with
    neither the run simply uses its whole budget.
    """
    d = problem.d
    l = d if l is None else int(l)
    if not 1 <= l:
        raise InvalidConfig("l must be positive")
    ctrl = StepControl() if ctrl is None else ctrl
    budget = 50 * d if budget is None else int(budget)
    spec = SketchSpec("identity" if ensemble == "identity" else ensemble, l, s)
    per_iter = d if ensemble == "identity" else l
    eng = SgnEngine(engine, spec, TrueIterationSpec(), tr_solver)
    problem.counter = ActionCounter()
    fs = problem.f_star if f_star is None else f_star
    f0 = problem.f(problem.x0)
    target = None if fs is None else fs + tau * (f0 - fs)
    history: list = []

    def stop(k, x, fx, gx):
        history.append((problem.counter.jacobian_actions, fx))
        if target is not None and fx <= target:
            return True
        return problem.counter.jacobian_actions + per_iter > budget

    t0 = time.perf_counter()
    trace = run(problem, eng, ctrl, budget // max(per_iter, 1) + 1, 0.0, seed=seed, stop=stop)
    if trace.stop_reason != "stop":
        history.append((problem.counter.jacobian_actions, trace.f_final))
    return SgnResult(trace.x_final, trace, problem.counter, history, time.perf_counter() - t0)


# ------------------------------------------------------------ data profiles

@dataclass(frozen=True)
class DataProfile:
    solver: str
    alphas: np.ndarray
    pi: np.ndarray


def data_profile(results: dict, dims: dict, alpha_grid: Sequence[float]) -> dict[str, DataProfile]:
    """pi_s(alpha) = |{p : N_p(s) <= alpha d_p}| / |P|.

    ``results`` maps (problem, solver) to N_p (use inf for failures);
    ``dims`` maps problem to d_p.
    """
    problems = sorted(dims)
    solvers = sorted({s for (_, s) in results})
    grid = np.asarray(alpha_grid, dtype=float)
    out = {}
    for s in solvers:
        N = np.array([results.get((p, s), math.inf) for p in problems], dtype=float)
        D = np.array([dims[p] for p in problems], dtype=float)
        pi = np.array([np.count_nonzero(N <= a * D) for a in grid], dtype=float) / len(problems)
        out[s] = DataProfile(s, grid, pi)
    return out


def best_values(runs: Iterable[tuple[str, float]]) -> dict[str, float]:
    """f_star per problem as the best value any solver reached."""
    best: dict[str, float] = {}
    for p, fv in runs:
        best[p] = min(best.get(p, math.inf), fv)
    return best


RESULT_COLUMNS = ("problem", "solver", "seed", "l", "N_p", "wall_time")


def results_csv(rows: Iterable[dict], timing: bool = False) -> str:
    """Rows sorted by (problem, solver, seed); wall_time is blank unless ``timing``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in sorted(rows, key=lambda r: (r["problem"], r["solver"], r["seed"])):
        wt = repr(float(r["wall_time"])) if timing else ""
        w.writerow([r["problem"], r["solver"], r["seed"], r["l"], repr(float(r["N_p"])), wt])
    return buf.getvalue()


def profile_csv(profiles: dict[str, DataProfile]) -> str:
    solvers = sorted(profiles)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["alpha"] + solvers)
    if solvers:
        grid = profiles[solvers[0]].alphas
        for i, a in enumerate(grid):
            w.writerow([repr(float(a))] + [repr(float(profiles[s].pi[i])) for s in solvers])
    return buf.getvalue()
