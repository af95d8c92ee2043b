"""Generic adaptive step-size framework with iteration accounting.

The step parameter lives on the lattice ``alpha = alpha0 * gamma1**beta``
with integer ``beta`` (``alpha0 = alpha_max * gamma1**p``).  Success moves
``beta`` down by ``c`` (capped at ``-p``, i.e. ``alpha_max``), failure
moves it up by one.  Storing the integer keeps every counting argument
exact.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Protocol

import numpy as np

from . import rng as rngmod
from .errors import BoundInfeasible, InvalidConfig, NumericalBreakdown


@dataclass(frozen=True)
class StepControl:
    gamma1: float = 0.5
    c: int = 1
    theta: float = 0.1
    alpha_max: float = 100.0
    p: int = 7
    beta: int = 0

    def __post_init__(self):
        if not (0.0 < self.gamma1 < 1.0):
            raise InvalidConfig(f"gamma1 must lie in (0, 1), got {self.gamma1}")
        if int(self.c) != self.c or self.c < 1:
            raise InvalidConfig(f"c must be a positive integer, got {self.c}")
        if not (0.0 < self.theta < 1.0):
            raise InvalidConfig(f"theta must lie in (0, 1), got {self.theta}")
        if not self.alpha_max > 0.0:
            raise InvalidConfig(f"alpha_max must be positive, got {self.alpha_max}")
        if int(self.p) != self.p or self.p < 1:
            raise InvalidConfig(f"p must be a positive integer, got {self.p}")
        if int(self.beta) != self.beta or self.beta < -self.p:
            raise InvalidConfig(f"beta must be an integer >= -p, got {self.beta}")

    @property
    def gamma2(self) -> float:
        return self.gamma1 ** (-self.c)

    @property
    def alpha0(self) -> float:
        return self.alpha_max * self.gamma1**self.p

    @property
    def alpha(self) -> float:
        return self.alpha_max * self.gamma1 ** (self.p + self.beta)

    def at(self, beta: int) -> float:
        return self.alpha_max * self.gamma1 ** (self.p + beta)


def update_alpha(ctrl: StepControl, successful: bool) -> StepControl:
    """Success: alpha <- min(alpha_max, gamma2 alpha).  Failure: alpha <- gamma1 alpha."""
    if successful:
        return replace(ctrl, beta=max(ctrl.beta - ctrl.c, -ctrl.p))
    return replace(ctrl, beta=ctrl.beta + 1)


def sufficient_decrease(f_old: float, f_new: float, model_decrease: float, theta: float) -> bool:
    """f_old - f_new >= theta * model_decrease, with a strictly positive model decrease."""
    return bool(model_decrease > 0.0 and f_old - f_new >= theta * model_decrease)


# ------------------------------------------------------------------ records

@dataclass
class IterationRecord:
    k: int
    is_true: bool
    successful: bool
    alpha_k: float
    beta: int
    f_k: float
    f_k1: float
    grad_norm: float
    model_decrease: float
    step_norm: float = 0.0
    grad_norm_trial: float = math.nan
    x: Optional[np.ndarray] = field(default=None, repr=False)
    s: Optional[np.ndarray] = field(default=None, repr=False)
    info: dict = field(default_factory=dict, repr=False)


TRACE_COLUMNS = ("k", "is_true", "successful", "alpha", "f", "grad_norm", "model_decrease")


@dataclass
class Trace:
    records: list = field(default_factory=list)
    ctrl: Optional[StepControl] = None
    eps: float = 0.0
    n_eps: Optional[int] = None
    x_final: Optional[np.ndarray] = None
    f_final: float = math.nan
    grad_norm_final: float = math.nan
    stop_reason: str = ""

    def __len__(self) -> int:
        return len(self.records)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in self.records:
            w.writerow([r.k, int(r.is_true), int(r.successful), repr(float(r.alpha_k)), repr(float(r.f_k)),
                        repr(float(r.grad_norm)), repr(float(r.model_decrease))])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())


def read_trace_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ------------------------------------------------------------------ engine

@dataclass
class StepResult:
    """What an engine hands back for one iteration.

    ``model_decrease`` is the denominator of the sufficient-decrease test.
    A ``degenerate`` step is recorded and counted as unsuccessful.
    """

    s: np.ndarray
    model_decrease: float
    is_true: bool
    degenerate: bool = False
    info: dict = field(default_factory=dict)


class StepEngine(Protocol):
    name: str

    def step(self, problem, x: np.ndarray, fx: float, gx: np.ndarray, alpha: float,
             rng: np.random.Generator, k: int) -> StepResult: ...


def run(problem, engine, ctrl: StepControl, budget: int, eps: float, seed: int = 0,
        stop: Optional[Callable] = None, instrument: bool = False, x0=None) -> Trace:
    """Iterate the framework for at most ``budget`` iterations.

    Stops early when ``||grad f(x_k)|| <= eps`` (recording ``n_eps = k``)
    or when ``stop(k, x, f, g)`` returns True.  With ``instrument`` the
    iterate, the step and the gradient norm at the trial point are stored
    on each record; the algorithm itself never looks at them.
    """
    x = np.array(problem.x0 if x0 is None else x0, dtype=float)
    fx = float(problem.f(x))
    gx = np.asarray(problem.grad(x), dtype=float)
    trace = Trace(ctrl=ctrl, eps=eps)
    if not (np.isfinite(fx) and np.all(np.isfinite(gx))):
        raise NumericalBreakdown("non-finite objective at the starting point", trace)
    for k in range(budget):
        gn = float(np.linalg.norm(gx))
        if gn <= eps:
            trace.n_eps = k
            trace.stop_reason = "converged"
            break
        if stop is not None and stop(k, x, fx, gx):
            trace.stop_reason = "stop"
            break
        res = engine.step(problem, x, fx, gx, ctrl.alpha, rngmod.stream(seed, k), k)
        s = np.asarray(res.s, dtype=float)
        if res.degenerate:
            f_trial, ok = fx, False
        else:
            f_trial = float(problem.f(x + s))
            if not np.isfinite(f_trial):
                raise NumericalBreakdown(f"non-finite objective at iteration {k}", trace)
            ok = sufficient_decrease(fx, f_trial, res.model_decrease, ctrl.theta)
        rec = IterationRecord(k, bool(res.is_true), ok, ctrl.alpha, ctrl.beta, fx, f_trial if ok else fx, gn,
                              float(res.model_decrease), float(np.linalg.norm(s)), info=res.info)
        if instrument:
            rec.x = x.copy()
            rec.s = s.copy()
            rec.info = dict(res.info, f_trial=f_trial)
            if not res.degenerate:
                rec.grad_norm_trial = float(np.linalg.norm(problem.grad(x + s)))
        trace.records.append(rec)
        if ok:
            x = x + s
            fx = f_trial
            gx = np.asarray(problem.grad(x), dtype=float)
            if not np.all(np.isfinite(gx)):
                raise NumericalBreakdown(f"non-finite gradient at iteration {k}", trace)
        ctrl = update_alpha(ctrl, ok)
    else:
        trace.stop_reason = "budget"
        if float(np.linalg.norm(gx)) <= eps:
            trace.n_eps = budget
    trace.x_final = x
    trace.f_final = fx
    trace.grad_norm_final = float(np.linalg.norm(gx))
    trace.ctrl = ctrl
    return trace


# ---------------------------------------------------------------- bounds

def tau_alpha(alpha_low: float, ctrl: StepControl) -> tuple[int, float]:
    """tau = ceil(log_{gamma1} min(alpha_low / alpha0, 1 / gamma2)); alpha_min = alpha0 gamma1^tau."""
    if not alpha_low > 0.0:
        raise InvalidConfig("alpha_low must be positive")
    ratio = min(alpha_low / ctrl.alpha0, 1.0 / ctrl.gamma2)
    t = math.log(ratio) / math.log(ctrl.gamma1)
    tau = max(int(math.ceil(t - 1e-9)), ctrl.c)
    return tau, ctrl.alpha0 * ctrl.gamma1**tau


def g_factor(deltaS: float, delta1: float, c: int) -> float:
    """[(1 - deltaS)(1 - delta1) - 1 + c/(c+1)^2]^{-1}; BoundInfeasible if not positive."""
    den = (1.0 - deltaS) * (1.0 - delta1) - 1.0 + c / (c + 1.0) ** 2
    if not den > 0.0:
        raise BoundInfeasible(f"g(deltaS, delta1) undefined: denominator {den:.3g} <= 0")
    return 1.0 / den


def iterations_required(deltaS: float, delta1: float, c: int, f0: float, fstar: float, h_value: float, tau: int) -> float:
    """Iteration count beyond which the target is reached with high probability."""
    if not (0.0 <= deltaS < c / (c + 1.0) ** 2):
        raise BoundInfeasible(f"deltaS = {deltaS} must be below c/(c+1)^2 = {c / (c + 1.0) ** 2}")
    if not (0.0 < delta1 < 1.0):
        raise BoundInfeasible("delta1 must lie in (0, 1)")
    if not h_value > 0.0:
        raise BoundInfeasible("h must be positive")
    if f0 < fstar:
        raise BoundInfeasible("f0 below fstar")
    g = g_factor(deltaS, delta1, c)
    return g * ((f0 - fstar) / h_value + tau / (1.0 + c))


def success_probability(deltaS: float, delta1: float, N: float) -> float:
    return 1.0 - math.exp(-(delta1**2 / 2.0) * (1.0 - deltaS) * N)


@dataclass(frozen=True)
class RateBound:
    eps_at_N: float
    expectation_bound: float
    D1: float
    D2: float
    D3: float


def invert_increasing(q: Callable[[float], float], target: float, hi: float = 1.0, tol: float = 1e-13) -> float:
    """Smallest eps >= 0 with q(eps) >= target for non-decreasing q (bisection)."""
    if target <= 0.0:
        return 0.0
    while q(hi) < target:
        hi *= 2.0
        if hi > 1e300:
            raise BoundInfeasible("q never reaches the target")
    lo = 0.0
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if q(mid) >= target:
            hi = mid
        else:
            lo = mid
        if hi - lo <= tol * max(1.0, hi):
            break
    return hi


def rate_bounds(deltaS: float, delta1: float, c: int, f0: float, fstar: float, tau: int,
                    h: Callable[[float, float], float], N: float, *, gamma1: float, alpha_min: float,
                    grad0_norm: float = 0.0) -> RateBound:
    """eps_at_N = q^{-1}(D1 / (N - D2)) with q(eps) = h(eps, gamma1^c alpha_min)."""
    if not (0.0 <= deltaS < c / (c + 1.0) ** 2):
        raise BoundInfeasible(f"deltaS = {deltaS} must be below c/(c+1)^2")
    g = g_factor(deltaS, delta1, c)
    D1 = g * (f0 - fstar)
    D2 = g * tau / (1.0 + c)
    D3 = (delta1**2 / 2.0) * (1.0 - deltaS)
    if N <= D2:
        raise BoundInfeasible(f"N = {N} must exceed D2 = {D2}")
    a = gamma1**c * alpha_min
    eps = invert_increasing(lambda e: h(e, a), D1 / (N - D2))
    return RateBound(eps, eps + grad0_norm * math.exp(-D3 * N), D1, D2, D3)


# ---------------------------------------------------------------- counting

@dataclass(frozen=True)
class CountsTable:
    N: int
    N_T: int
    N_F: int
    N_S: int
    N_U: int
    N_TS: int
    N_T_le_amin: int
    N_S_le_amin: int
    N_T_gt_amin: int
    N_TS_gt_amin: int
    N_TU_gt_amin: int
    N_U_gt_amin: int
    N_S_gt_gc_amin: int
    N_TS_gt_gc_amin: int
    N_FS_gt_gc_amin: int


def lattice_index(alpha: float, ctrl: StepControl) -> int:
    """Integer beta with alpha = alpha0 gamma1^beta (raises if off the lattice)."""
    t = math.log(alpha / ctrl.alpha0) / math.log(ctrl.gamma1)
    b = int(round(t))
    if abs(t - b) > 1e-6:
        raise InvalidConfig(f"alpha = {alpha} is not on the gamma1 lattice")
    return b


def counts(trace: Trace, alpha_min: Optional[float] = None, c: Optional[int] = None,
           gamma1: Optional[float] = None, *, tau: Optional[int] = None, N: Optional[int] = None) -> CountsTable:
    """Iteration counts over the first ``N`` records (default: all).

    Classes are decided on the integer exponent: alpha_k <= alpha_min iff
    beta_k >= tau and alpha_k > gamma1^c alpha_min iff beta_k < tau + c.
    """
    ctrl = trace.ctrl
    c = ctrl.c if c is None else int(c)
    if tau is None:
        tau = lattice_index(alpha_min, ctrl)
    recs = trace.records if N is None else trace.records[:N]
    T = np.array([r.is_true for r in recs], dtype=bool)
    S = np.array([r.successful for r in recs], dtype=bool)
    B = np.array([r.beta for r in recs], dtype=int)
    le = B >= tau
    gt = ~le
    gtc = B < tau + c
    n = len(recs)
    return CountsTable(
        N=n,
        N_T=int(T.sum()), N_F=int((~T).sum()), N_S=int(S.sum()), N_U=int((~S).sum()),
        N_TS=int((T & S).sum()),
        N_T_le_amin=int((T & le).sum()), N_S_le_amin=int((S & le).sum()),
        N_T_gt_amin=int((T & gt).sum()), N_TS_gt_amin=int((T & S & gt).sum()),
        N_TU_gt_amin=int((T & ~S & gt).sum()), N_U_gt_amin=int((~S & gt).sum()),
        N_S_gt_gc_amin=int((S & gtc).sum()), N_TS_gt_gc_amin=int((T & S & gtc).sum()),
        N_FS_gt_gc_amin=int((~T & S & gtc).sum()),
    )


def low_alpha_true_bound_holds(ct: CountsTable, c: int) -> bool:
    """True iterations with alpha <= alpha_min make up at most N/(c+1)."""
    return ct.N_T_le_amin * (c + 1) <= ct.N


def unsuccessful_bound_holds(ct: CountsTable, c: int, tau: int) -> bool:
    """Unsuccessful iterations above alpha_min are paid for by successes above gamma1^c alpha_min."""
    return ct.N_U_gt_amin <= tau + c * ct.N_S_gt_gc_amin


def chernoff_frequency(deltaS: float, delta1: float, N: int, runs: int, seed: int = 0, chunk: int = 20000) -> float:
    """Monte-Carlo frequency of N_T <= (1 - deltaS)(1 - delta1) N.

    Each iteration is independently true with probability 1 - deltaS.
    """
    thr = (1.0 - deltaS) * (1.0 - delta1) * N
    hits, done, c = 0, 0, 0
    while done < runs:
        b = min(chunk, runs - done)
        T = rngmod.stream(seed, 7, c).random((b, N)) < (1.0 - deltaS)
        hits += int(np.count_nonzero(T.sum(axis=1) <= thr))
        done += b
        c += 1
    return hits / runs


def chernoff_bound(deltaS: float, delta1: float, N: int) -> float:
    return math.exp(-(delta1**2 / 2.0) * (1.0 - deltaS) * N)
