"""Random-subspace adaptive cubic regularisation.

The sketched model is

    m(s_hat) = q(s_hat) + ||S^T s_hat||^3 / (3 alpha),
    q(s_hat) = f + <S g, s_hat> + 1/2 s_hat^T S H S^T s_hat.

Writing u = M^{1/2} s_hat with M = S S^T turns the regulariser into
||u||^3 / (3 alpha), so a single secular-equation solver for the standard
cubic subproblem covers every sketch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateSketch, InvalidConfig, SubproblemFailure
from .firstorder import SketchSpec, sketch_metric
from .framework import StepResult, sufficient_decrease
from .kernels import compact_svd, eig_sym, eig_sym_min
from .sketch import SketchOp

METRIC_FLOOR = 1e-12


@dataclass(eq=False)
class CubicModel:
    f0: float
    g_hat: np.ndarray
    H_hat: np.ndarray
    M: np.ndarray
    alpha: float
    kappa_T: float = 0.0
    kappa_S: float = 0.0

    def q(self, s_hat) -> float:
        s_hat = np.asarray(s_hat, dtype=float)
        return float(self.f0 + self.g_hat @ s_hat + 0.5 * s_hat @ (self.H_hat @ s_hat))

    def step_norm(self, s_hat) -> float:
        s_hat = np.asarray(s_hat, dtype=float)
        return math.sqrt(max(float(s_hat @ (self.M @ s_hat)), 0.0))

    def value(self, s_hat) -> float:
        return self.q(s_hat) + self.step_norm(s_hat) ** 3 / (3.0 * self.alpha)

    def grad(self, s_hat) -> np.ndarray:
        s_hat = np.asarray(s_hat, dtype=float)
        Ms = self.M @ s_hat
        return self.g_hat + self.H_hat @ s_hat + Ms * self.step_norm(s_hat) / self.alpha

    def hess(self, s_hat) -> np.ndarray:
        s_hat = np.asarray(s_hat, dtype=float)
        w = self.step_norm(s_hat)
        H = self.H_hat + (w / self.alpha) * self.M
        if w > 0:
            Ms = self.M @ s_hat
            H = H + np.outer(Ms, Ms) / (self.alpha * w)
        return 0.5 * (H + H.T)


@dataclass(frozen=True)
class CubicSolution:
    u: np.ndarray
    lam: float
    iterations: int
    hard_case: bool


def solve_cubic(g, H, alpha: float, max_iter: int = 200, tol: float = 1e-15) -> CubicSolution:
    """Global minimiser of g^T u + 1/2 u^T H u + ||u||^3 / (3 alpha).

    Finds lam >= max(0, -lambda_min(H)) with (H + lam I) u = -g and
    lam = ||u|| / alpha by safeguarded Newton/bisection on
    phi(lam) = ||u(lam)|| - alpha lam in the eigenbasis of H.
    """
    g = np.asarray(g, dtype=float)
    H = 0.5 * (np.asarray(H, dtype=float) + np.asarray(H, dtype=float).T)
    if not alpha > 0:
        raise InvalidConfig("alpha must be positive")
    n = g.size
    w, Q = np.linalg.eigh(H)
    c = Q.T @ g
    gn = float(np.linalg.norm(g))
    scale = max(1.0, float(np.abs(w).max()) if n else 1.0)
    lo = max(0.0, -w[0])

    # components living in the bottom eigenspace
    bottom = w - w[0] <= 1e-12 * scale
    c_bottom = float(np.linalg.norm(c[bottom]))
    if w[0] <= 0.0 and c_bottom <= 1e-14 * max(gn, 1e-300):
        # possible hard case: the secular function stays finite at lo
        rest = ~bottom
        u_rest = np.zeros(n)
        if rest.any():
            u_rest[rest] = -c[rest] / (w[rest] + lo)
        nr = float(np.linalg.norm(u_rest))
        if nr <= alpha * lo:
            t = math.sqrt(max((alpha * lo) ** 2 - nr * nr, 0.0))
            y = u_rest.copy()
            y[np.flatnonzero(bottom)[0]] += t
            return CubicSolution(Q @ y, lo, 0, True)
    if gn == 0.0:
        return CubicSolution(np.zeros(n), 0.0, 0, False)

    # work with mu = lam - lo so that w + lam is formed without cancellation
    dw = w - w[0] if lo > 0.0 else w.copy()

    def phi_of(mu):
        u = -c / (dw + mu)
        nu = float(np.linalg.norm(u))
        return u, nu, nu - alpha * (lo + mu)

    a, b = 0.0, max(1.0, math.sqrt(gn / alpha))
    while phi_of(b)[2] > 0.0:
        b *= 2.0
    mu = b
    it = 0
    for it in range(1, max_iter + 1):
        u, nu, phi = phi_of(mu)
        if abs(phi) <= tol * (1.0 + alpha * (lo + mu)):
            break
        if phi > 0:
            a = mu
        else:
            b = mu
        dphi = -float(np.sum(c * c / (dw + mu) ** 3)) / max(nu, 1e-300) - alpha
        cand = mu - phi / dphi if dphi != 0 else math.nan
        if not (a < cand < b) or not np.isfinite(cand):
            cand = 0.5 * (a + b)
        if b - a <= 4 * np.finfo(float).eps * max(b, 1e-300):
            mu = cand
            break
        mu = cand
    else:
        raise SubproblemFailure("secular equation did not converge")
    u = -c / (dw + mu)
    return CubicSolution(Q @ u, lo + mu, it, False)


@dataclass(frozen=True)
class ArcStep:
    s_hat: np.ndarray
    model_decrease: float
    taylor_decrease: float
    lam: float
    step_norm: float
    model_grad_norm: float
    hess_min_eig: float = math.nan
    secular_residual: float = 0.0


def _metric_root(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    if w[-1] <= 0.0 or w[0] <= METRIC_FLOOR * w[-1]:
        raise DegenerateSketch("S S^T is singular")
    r = np.sqrt(w)
    return (V * r) @ V.T, (V / r) @ V.T


def arc_step(model: CubicModel, want_second_order: bool = False) -> ArcStep:
    """Solve the sketched cubic subproblem exactly in the metric S S^T."""
    if not model.alpha > 0:
        raise InvalidConfig("alpha must be positive")
    Mh, Mih = _metric_root(model.M)
    gt = Mih @ model.g_hat
    Ht = Mih @ model.H_hat @ Mih
    sol = solve_cubic(gt, Ht, model.alpha)
    s_hat = Mih @ sol.u
    nu = float(np.linalg.norm(sol.u))
    taylor = float(-(model.g_hat @ s_hat) - 0.5 * s_hat @ (model.H_hat @ s_hat))
    mdec = taylor - nu**3 / (3.0 * model.alpha)
    gm = float(np.linalg.norm(model.grad(s_hat)))
    sec = float(np.linalg.norm((0.5 * (Ht + Ht.T)) @ sol.u + sol.lam * sol.u + gt))
    hmin = math.nan
    if want_second_order:
        hmin, _ = eig_sym_min(model.hess(s_hat))
    return ArcStep(s_hat, mdec, taylor, sol.lam, nu, gm, hmin, sec)


def arc_sufficient_decrease(f_old: float, f_new: float, taylor_decrease: float, theta: float) -> bool:
    """f_old - f_new >= theta (q(0) - q(s_hat)) with a positive Taylor decrease."""
    return sufficient_decrease(f_old, f_new, taylor_decrease, theta)


# ------------------------------------------------------------------ truth

VARIANTS = ("hessian_embedding", "sparse_hessian", "norm_only", "full_second_order")
VARIANT_ALIASES = {"embed": "hessian_embedding", "sparse": "sparse_hessian", "norm": "norm_only",
                   "full2": "full_second_order"}


@dataclass(frozen=True)
class ArcTruthSpec:
    variant: str = "hessian_embedding"
    eps_S2: float = 0.5
    S_max: float = math.inf
    eps: float = 1e-5
    eps_H: float = 1e-3
    alpha_max: float = 100.0

    def __post_init__(self):
        v = VARIANT_ALIASES.get(self.variant, self.variant)
        if v not in VARIANTS:
            raise InvalidConfig(f"unknown truth variant {self.variant!r}")
        object.__setattr__(self, "variant", v)
        if not (0.0 <= self.eps_S2 < 1.0):
            raise InvalidConfig("eps_S2 must lie in [0, 1)")


def sparse_hessian_constant(eps_S: float, S_max: float, alpha_max: float) -> float:
    """c_k = sqrt(4 (1 - eps_S)^{1/2} S_max / (3 alpha_max))."""
    return math.sqrt(4.0 * math.sqrt(1.0 - eps_S) * S_max / (3.0 * alpha_max))


def arc_truth(S: SketchOp, grad, hess, spec: ArcTruthSpec) -> bool:
    """Evaluate the variant's true-iteration conditions on densified matrices."""
    g = np.asarray(grad, dtype=float)
    H = np.asarray(hess, dtype=float)
    if S.norm2 > spec.S_max:
        return False
    if spec.variant == "norm_only":
        return True
    if spec.variant == "hessian_embedding":
        Mk = np.column_stack([g, H])
        if not np.any(Mk):
            return True
        U, s, _ = compact_svd(Mk, tol=1e-10)
        sig = np.linalg.svd(S.apply(U), compute_uv=False)
        smin = sig[-1] if sig.size == U.shape[1] else 0.0
        return bool(smin**2 >= 1.0 - spec.eps_S2)
    if spec.variant == "sparse_hessian":
        ck = sparse_hessian_constant(spec.eps_S2, spec.S_max, spec.alpha_max)
        SH = S.apply(H)
        nSH = float(np.linalg.norm(SH, 2)) if SH.size else 0.0
        Sg = S.apply(g)
        return bool(nSH <= ck * math.sqrt(spec.eps) and Sg @ Sg >= (1.0 - spec.eps_S2) * spec.eps**2)
    # full_second_order
    lam, U = eig_sym(H)
    keep = np.abs(lam) > 1e-10 * max(1.0, float(np.abs(lam).max()))
    if not keep.any():
        return False
    Ur = U[:, keep]
    W = S.apply(Ur)
    wr = W[:, -1]
    nr = float(wr @ wr)
    if not (1.0 - spec.eps_S2 <= nr <= 1.0 + spec.eps_S2):
        return False
    cross = W[:, :-1].T @ wr
    return bool(np.all(cross**2 <= 16.0 * (1.0 + spec.eps_S2) / S.m))


# ------------------------------------------------------------ h functions

def h_arc_first(eps, alpha, eps_S2, Smax, kappaT, LH, theta, alpha_max) -> float:
    a = 2.0 ** 1.5 / LH**1.5 if LH > 0 else math.inf
    b = (math.sqrt(1.0 - eps_S2) / (Smax / alpha + kappaT)) ** 1.5
    return (theta / (3.0 * alpha_max)) * (eps / 2.0) ** 1.5 * min(a, b)


def h_arc_sparse(eps, alpha, eps_S, Smax, alpha_max, theta) -> float:
    return (theta * alpha**2 * eps**1.5 / 3.0) * (math.sqrt(1.0 - eps_S) / (3.0 * Smax * alpha_max)) ** 1.5


def h_arc_second(eps_H, alpha, Smax, kappaS, theta, m: float = 1.0) -> float:
    return (theta * (eps_H * m) ** 3 / (3.0 * alpha)) * (2.0 * Smax**2 / alpha + kappaS) ** -3


def second_order_multiplier(eps_S: float, r: int, l: int, kappa_H: float) -> float:
    """1 - eps_S + 16 (r-1)/l (1+eps_S)/(1-eps_S) kappa_H, kappa_H = min(0, lambda_1/lambda_r)."""
    return 1.0 - eps_S + 16.0 * (r - 1) / l * (1.0 + eps_S) / (1.0 - eps_S) * kappa_H


def alpha_low_arc(theta: float, LH: float) -> float:
    return 2.0 * (1.0 - theta) / LH if LH > 0 else math.inf


def step_floor_first(eps, alpha, eps_S2, Smax, kappaT, LH) -> float:
    """Lower bound on ||S^T s_hat||^2 at true iterations before convergence."""
    a = 2.0 / LH if LH > 0 else math.inf
    return (eps / 2.0) * min(a, math.sqrt(1.0 - eps_S2) / (Smax / alpha + kappaT))


def step_floor_sparse(eps, alpha, eps_S, Smax, alpha_max) -> float:
    """Lower bound on ||S^T s_hat|| under the small-sketched-Hessian truth."""
    return alpha * math.sqrt(math.sqrt(1.0 - eps_S) * eps / (3.0 * Smax * alpha_max))


def step_floor_negative_curvature(eps_H, alpha, Smax, kappaS) -> float:
    """Lower bound on ||S^T s_hat|| when the sketched Hessian has curvature below -eps_H."""
    return eps_H / (2.0 * Smax**2 / alpha + kappaS)


def second_order_measures(x, problem, S: SketchOp) -> tuple[float, float]:
    """(lambda_min(S H S^T), lambda_min(H)) at x."""
    H = problem.hess(np.asarray(x, dtype=float))
    St = S.apply_t(np.eye(S.m))
    Hs = S.apply(H @ St)
    return eig_sym_min(0.5 * (Hs + Hs.T))[0], eig_sym_min(H)[0]


# ----------------------------------------------------------------- engine

@dataclass
class ArcEngine:
    sketch: SketchSpec = field(default_factory=SketchSpec)
    truth: ArcTruthSpec = field(default_factory=ArcTruthSpec)
    kappa_T: float = 1e-8
    kappa_S: float = 0.0
    second_order: bool = False
    name: str = "arc"

    def step(self, problem, x, fx, gx, alpha, rng, k) -> StepResult:
        d = x.size
        S = self.sketch.draw(d, int(rng.integers(0, 2**63 - 1)))
        St = S.apply_t(np.eye(S.m))
        HSt = problem.hess_action(x, St)
        H_hat = S.apply(HSt)
        H_hat = 0.5 * (H_hat + H_hat.T)
        g_hat = S.apply(gx)
        M = sketch_metric(S)
        needs_full_hessian = self.truth.variant != "norm_only"
        H = problem.hess(x) if needs_full_hessian else None
        is_true = arc_truth(S, gx, H if H is not None else np.zeros((d, d)), self.truth)
        info = {"S_norm": S.norm2, "H_hat_min": float(np.linalg.eigvalsh(H_hat)[0])}
        model = CubicModel(fx, g_hat, H_hat, M, alpha, self.kappa_T, self.kappa_S)
        try:
            st = arc_step(model, self.second_order)
        except DegenerateSketch:
            return StepResult(np.zeros(d), 0.0, is_true, degenerate=True, info=info)
        info.update(step_norm=st.step_norm, model_decrease=st.model_decrease, lam=st.lam,
                    model_grad_norm=st.model_grad_norm, hess_min_eig=st.hess_min_eig)
        return StepResult(St @ st.s_hat, st.taylor_decrease, is_true, info=info)
