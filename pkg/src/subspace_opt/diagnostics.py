"""Instrumentation: local smoothness constants and per-trace property checks.

Everything here reads instrumented traces (``run(..., instrument=True)``)
and full-space derivatives.  None of it feeds back into the algorithms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .framework import Trace, counts, low_alpha_true_bound_holds, unsuccessful_bound_holds, tau_alpha


def _sym_norm(H) -> float:
    w = np.linalg.eigvalsh(H)
    return float(max(abs(w[0]), abs(w[-1]))) if w.size else 0.0


def segment_constants(problem, x, s, points: int = 8) -> tuple[float, float]:
    """Local (L, L_H) along the segment [x, x + s].

    L = max_t ||hess f(x + t s)||_2 and
    L_H = max_t ||hess f(x + t s) - hess f(x)||_2 / (t ||s||).
    """
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    H0 = problem.hess(x)
    L = _sym_norm(H0)
    LH = 0.0
    ns = float(np.linalg.norm(s))
    if ns == 0.0:
        return L, LH
    for t in np.linspace(0.0, 1.0, points + 1)[1:]:
        Ht = problem.hess(x + t * s)
        L = max(L, _sym_norm(Ht))
        LH = max(LH, _sym_norm(Ht - H0) / (t * ns))
    return L, LH


def trace_constants(problem, trace: Trace, points: int = 8) -> tuple[float, float]:
    """Largest segment constants over every trial step of an instrumented trace."""
    L, LH = 0.0, 0.0
    for r in trace.records:
        if r.x is None:
            raise ValueError("trace was not recorded with instrument=True")
        a, b = segment_constants(problem, r.x, r.s, points)
        L, LH = max(L, a), max(LH, b)
    return L, LH


def arc_horizon(trace: Trace) -> int:
    """Iterations before ||grad f(x_{k+1})|| <= eps, the cubic method's N_eps."""
    if trace.n_eps is None:
        return len(trace.records)
    return max(trace.n_eps - 1, 0)


@dataclass(frozen=True)
class CountingCheck:
    N: int
    tau: int
    alpha_min: float
    low_alpha_true: bool
    unsuccessful: bool
    # true iterations with alpha_k <= alpha_min that were nevertheless unsuccessful
    low_alpha_failures: int


def check_counting(trace: Trace, alpha_low: float, horizon: Optional[int] = None) -> CountingCheck:
    """Both counting inequalities on the first ``horizon`` records.

    ``horizon`` defaults to the whole trace; a converged first-order run
    already stops at N_eps so its records all satisfy k < N_eps.
    """
    ctrl = trace.ctrl
    tau, amin = tau_alpha(alpha_low, ctrl)
    N = len(trace.records) if horizon is None else min(horizon, len(trace.records))
    ct = counts(trace, tau=tau, N=N)
    bad = sum(1 for r in trace.records[:N] if r.is_true and r.beta >= tau and not r.successful)
    return CountingCheck(N, tau, amin, low_alpha_true_bound_holds(ct, ctrl.c), unsuccessful_bound_holds(ct, ctrl.c, tau), bad)


def decrease_floor_violations(trace: Trace, h: Callable[[float], float], eps: float,
                              use_trial_gradient: bool = False, rel_tol: float = 1e-12) -> int:
    """Count true+successful iterations whose decrease falls below h(alpha_k).

    Only iterations with gradient norm above ``eps`` are examined; with
    ``use_trial_gradient`` the test uses the gradient at the trial point,
    which is the quantity the cubic step-size floor is stated in.
    """
    bad = 0
    for r in trace.records:
        gn = r.grad_norm_trial if use_trial_gradient else r.grad_norm
        if not (r.is_true and r.successful and gn > eps):
            continue
        hv = h(r.alpha_k)
        if r.f_k - r.f_k1 < hv * (1.0 - rel_tol):
            bad += 1
    return bad


def monotone(trace: Trace) -> bool:
    return all(r.f_k1 <= r.f_k for r in trace.records)


def cubic_decrease_violations(trace: Trace, theta: float, rel_tol: float = 1e-10) -> int:
    """Successful iterations with f_k - f_{k+1} < theta ||s||^3 / (3 alpha_k)."""
    bad = 0
    for r in trace.records:
        if r.successful:
            need = theta * r.step_norm**3 / (3.0 * r.alpha_k)
            if r.f_k - r.f_k1 < need * (1.0 - rel_tol) - 1e-300:
                bad += 1
    return bad
