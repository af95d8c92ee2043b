"""Sketched first-order models with quadratic-regularisation and trust-region steps."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Union

import numpy as np

from .errors import DegenerateSketch, InvalidConfig
from .framework import StepResult, sufficient_decrease  # noqa: F401  (re-exported)
from .sketch import SketchOp, make_sketch


@dataclass(frozen=True)
class TrueIterationSpec:
    eps_S: float = 0.5
    S_max: float = math.inf

    def __post_init__(self):
        if not (0.0 <= self.eps_S < 1.0):
            raise InvalidConfig(f"eps_S must lie in [0, 1), got {self.eps_S}")
        if not self.S_max > 0.0:
            raise InvalidConfig("S_max must be positive")


@dataclass(eq=False)
class SketchedModel:
    """m(s_hat) = f0 + <g_hat, s_hat> + 1/2 s_hat^T B_hat s_hat, with step S^T s_hat."""

    f0: float
    g_hat: np.ndarray
    B_hat: np.ndarray
    S: SketchOp
    alpha: float

    def B_action(self, v) -> np.ndarray:
        return self.B_hat @ v

    def value(self, s_hat) -> float:
        s_hat = np.asarray(s_hat, dtype=float)
        return float(self.f0 + self.g_hat @ s_hat + 0.5 * s_hat @ (self.B_hat @ s_hat))

    def decrease(self, s_hat) -> float:
        s_hat = np.asarray(s_hat, dtype=float)
        return float(-(self.g_hat @ s_hat) - 0.5 * s_hat @ (self.B_hat @ s_hat))

    @cached_property
    def metric(self) -> np.ndarray:
        """S S^T (l x l)."""
        return sketch_metric(self.S)


def sketch_metric(S: SketchOp) -> np.ndarray:
    St = S.apply_t(np.eye(S.m))
    M = S.apply(St)
    return 0.5 * (M + M.T)


def qr_step(model: SketchedModel, kappa_T: float = 0.0) -> tuple[np.ndarray, float]:
    """Exact minimiser of m(s_hat) + ||S^T s_hat||^2 / (2 alpha).

    Solves (B_hat + S S^T / alpha) s_hat = -g_hat.  B_hat must be PSD; a
    rank-deficient S S^T raises DegenerateSketch.
    """
    M = model.metric
    w = np.linalg.eigvalsh(M)
    if w[-1] <= 0.0 or w[0] <= 1e-12 * w[-1]:
        raise DegenerateSketch("S S^T is singular")
    if not np.any(model.g_hat):
        return np.zeros_like(model.g_hat), 0.0
    K = model.B_hat + M / model.alpha
    try:
        L = np.linalg.cholesky(0.5 * (K + K.T))
    except np.linalg.LinAlgError as exc:
        raise DegenerateSketch("regularised model matrix is not positive definite") from exc
    y = np.linalg.solve(L, -model.g_hat)
    s_hat = np.linalg.solve(L.T, y)
    return s_hat, model.decrease(s_hat)


def qr_subproblem_gradient(model: SketchedModel, s_hat) -> np.ndarray:
    """Gradient of m(s_hat) + ||S^T s_hat||^2 / (2 alpha)."""
    return model.g_hat + model.B_hat @ s_hat + model.metric @ s_hat / model.alpha


def tr_step(model: SketchedModel) -> tuple[np.ndarray, float]:
    """Cauchy point of the sketched model within ||s_hat|| <= alpha."""
    g = model.g_hat
    gn = float(np.linalg.norm(g))
    if gn == 0.0:
        return np.zeros_like(g), 0.0
    curv = float(g @ (model.B_hat @ g))
    tau = 1.0 if curv <= 0.0 else min(gn**3 / (curv * model.alpha), 1.0)
    s_hat = -tau * (model.alpha / gn) * g
    return s_hat, model.decrease(s_hat)


def trust_region_exact(g, B, radius: float, max_iter: int = 200) -> np.ndarray:
    """Global minimiser of g^T s + 1/2 s^T B s over ||s|| <= radius (eigen-based)."""
    g = np.asarray(g, dtype=float)
    w, Q = np.linalg.eigh(0.5 * (B + B.T))
    c = Q.T @ g
    scale = max(1.0, float(np.abs(w).max()) if w.size else 1.0)
    tiny = 1e-12 * scale
    if w[0] > tiny:
        y = -c / w
        if np.linalg.norm(y) <= radius:
            return Q @ y
    lo = max(0.0, -w[0])
    bottom = w - w[0] <= tiny
    if np.linalg.norm(c[bottom]) <= 1e-14 * max(float(np.linalg.norm(c)), 1e-300):
        # hard case or a singular PSD B with g orthogonal to its null space
        y = np.zeros_like(c)
        rest = ~bottom
        y[rest] = -c[rest] / (w[rest] + lo)
        ny = float(np.linalg.norm(y))
        if ny <= radius:
            if lo > 0.0:
                y[np.flatnonzero(bottom)[0]] += math.sqrt(max(radius**2 - ny**2, 0.0))
            return Q @ y
    dw = w - w[0] if lo > 0.0 else w
    # solve 1/||y(mu)|| = 1/radius for mu = lam - lo > 0 by safeguarded Newton
    a, b = 0.0, max(1.0, float(np.linalg.norm(c)) / radius)
    while np.linalg.norm(c / (dw + b)) > radius:
        b *= 2.0
    mu = b
    for _ in range(max_iter):
        y = -c / (dw + mu)
        ny = float(np.linalg.norm(y))
        phi = 1.0 / ny - 1.0 / radius
        if abs(ny - radius) <= 1e-14 * radius:
            break
        if phi < 0:
            a = mu
        else:
            b = mu
        dphi = float(np.sum(c * c / (dw + mu) ** 3)) / ny**3
        cand = mu - phi / dphi if dphi > 0 else math.nan
        if not (a < cand < b):
            cand = 0.5 * (a + b)
        if b - a <= 4 * np.finfo(float).eps * b:
            mu = cand
            break
        mu = cand
    return Q @ (-c / (dw + mu))


def tr_exact_step(model: SketchedModel) -> tuple[np.ndarray, float]:
    """Exact trust-region step within ||s_hat|| <= alpha; never worse than the Cauchy point."""
    if not np.any(model.g_hat):
        return np.zeros_like(model.g_hat), 0.0
    s_hat = trust_region_exact(model.g_hat, model.B_hat, model.alpha)
    return s_hat, model.decrease(s_hat)


def is_true_iteration(S: SketchOp, grad, spec: TrueIterationSpec) -> bool:
    """||S grad||^2 >= (1 - eps_S) ||grad||^2 and ||S||_2 <= S_max."""
    g = np.asarray(grad, dtype=float)
    Sg = S.apply(g)
    return bool(Sg @ Sg >= (1.0 - spec.eps_S) * (g @ g) and S.norm2 <= spec.S_max)


# ------------------------------------------------------------- h functions

def h_qr(eps, alpha, Smax, Bmax, kappaT, alpha_max, theta, eps_S) -> float:
    """theta (1 - eps_S) eps^2 / (2 alpha_max (Smax (Bmax + 1/alpha) + kappaT)^2)."""
    return theta * (1.0 - eps_S) * eps**2 / (2.0 * alpha_max * (Smax * (Bmax + 1.0 / alpha) + kappaT) ** 2)


def h_tr(eps, alpha, Bmax, C7, theta, eps_S) -> float:
    """theta C7 min((1 - eps_S)^{1/2} eps alpha, (1 - eps_S) eps^2 / Bmax)."""
    a = math.sqrt(1.0 - eps_S) * eps * alpha
    b = (1.0 - eps_S) * eps**2 / Bmax if Bmax > 0 else math.inf
    return theta * C7 * min(a, b)


def alpha_low_qr(theta: float, L: float, Bmax: float) -> float:
    return (1.0 - theta) / (L + Bmax) if L + Bmax > 0 else math.inf


def alpha_low_tr(eps: float, eps_S: float, theta: float, L: float, Bmax: float, Smax: float, C7: float = 0.5) -> float:
    """(1-eps_S)^{1/2} eps min(C7 (1-theta) / ((L + Bmax/2) Smax^2), 1/Bmax)."""
    a = C7 * (1.0 - theta) / ((L + 0.5 * Bmax) * Smax**2) if L + 0.5 * Bmax > 0 else math.inf
    b = 1.0 / Bmax if Bmax > 0 else math.inf
    return math.sqrt(1.0 - eps_S) * eps * min(a, b)


def taylor_gap_bound(L: float, Bmax: float, step_norm: float) -> float:
    """((L + Bmax)/2) ||S^T s_hat||^2, the model-error bound."""
    return 0.5 * (L + Bmax) * step_norm**2


# --------------------------------------------------------------- engines

@dataclass(frozen=True)
class SketchSpec:
    """Which ensemble to draw each iteration, and its size."""

    ensemble: str = "gaussian"
    l: int = 1
    s: int = 1

    def draw(self, d: int, seed: int) -> SketchOp:
        if self.ensemble == "identity":
            return make_sketch("identity", d, d)
        return make_sketch(self.ensemble, self.l, d, s=self.s, seed=seed, pad=True)


BSpec = Union[str, np.ndarray, Callable[[np.ndarray], np.ndarray]]


def sketched_curvature(problem, x, S: SketchOp, B: BSpec) -> np.ndarray:
    """S B S^T for the requested B (zero, Gauss-Newton, a matrix or a callable)."""
    l = S.m
    if isinstance(B, str):
        if B == "zero":
            return np.zeros((l, l))
        if B == "gauss_newton":
            JSt = problem.jac_action(x, S.apply_t(np.eye(l)))
            return JSt.T @ JSt
        raise InvalidConfig(f"unknown B mode {B!r}")
    Bx = B(x) if callable(B) else np.asarray(B, dtype=float)
    St = S.apply_t(np.eye(l))
    Bh = S.apply(Bx @ St)
    return 0.5 * (Bh + Bh.T)


@dataclass
class FirstOrderEngine:
    """Quadratic-regularisation (``kind='qr'``) or trust-region (``kind='tr'``) step."""

    kind: str = "qr"
    sketch: SketchSpec = field(default_factory=SketchSpec)
    truth: TrueIterationSpec = field(default_factory=TrueIterationSpec)
    B: BSpec = "zero"
    kappa_T: float = 0.0

    def __post_init__(self):
        if self.kind not in ("qr", "tr"):
            raise InvalidConfig(f"engine kind must be 'qr' or 'tr', got {self.kind!r}")

    @property
    def name(self) -> str:
        return self.kind

    def step(self, problem, x, fx, gx, alpha, rng, k) -> StepResult:
        d = x.size
        S = self.sketch.draw(d, int(rng.integers(0, 2**63 - 1)))
        g_hat = S.apply(gx)
        B_hat = sketched_curvature(problem, x, S, self.B)
        model = SketchedModel(fx, g_hat, B_hat, S, alpha)
        is_true = is_true_iteration(S, gx, self.truth)
        info = {"S_norm": S.norm2, "g_hat_norm": float(np.linalg.norm(g_hat)),
                "B_hat_norm": float(np.linalg.norm(B_hat, 2)) if B_hat.size else 0.0}
        try:
            if self.kind == "qr":
                s_hat, dec = qr_step(model, self.kappa_T)
            else:
                s_hat, dec = tr_step(model)
        except DegenerateSketch:
            return StepResult(np.zeros(d), 0.0, is_true, degenerate=True, info=info)
        info["s_hat_norm"] = float(np.linalg.norm(s_hat))
        return StepResult(S.apply_t(s_hat), dec, is_true, info=info)
