"""Sketch, precondition, solve: randomized linear least squares.

1. Sketch: SA, Sb.
2. Column-pivoted QR of SA (optionally completed so the coupling block
   vanishes), detected rank p.
3. x_s = V1 R^{-1} Q1^T S b; return it if ||A x_s - b|| <= tau_a.
4. Otherwise run LSQR on W = A V1 R^{-1} from y0 = Q1^T S b and map back.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import LinearOperator, aslinearoperator

from . import rng as rngmod
from .errors import DegenerateSketch, InvalidConfig, InvalidInput, MaxIterations, Stagnation
from .kernels import CodFactorization, SparseMatrix, column_pivoted_qr, compact_svd, spmv
from .sketch import SketchOp, embedding_report, make_sketch

Matrix = Union[np.ndarray, SparseMatrix]


@dataclass(frozen=True)
class LlsConfig:
    m: Optional[int] = None
    m_ratio: Optional[float] = None
    ensemble: Optional[str] = None
    s: Optional[int] = None
    tau_a: float = 1e-8
    tau_r: float = 1e-6
    it_max: int = 10_000
    rcond: float = 1e-12
    perturb: float = 1e-10
    min_norm: bool = False
    power_iters: int = 20
    measure_eps: bool = True

    def __post_init__(self):
        if self.m is not None and self.m < 1:
            raise InvalidConfig("m must be at least 1")
        if self.m_ratio is not None and not self.m_ratio > 0:
            raise InvalidConfig("m_ratio must be positive")
        if not (self.tau_a > 0 and self.tau_r > 0):
            raise InvalidConfig("tolerances must be positive")
        if self.it_max < 0 or self.perturb < 0:
            raise InvalidConfig("it_max and perturb must be non-negative")

    def resolve(self, d: int, sparse: bool) -> tuple[int, str, int]:
        """(m, ensemble, s) with the dense/sparse defaults filled in."""
        ratio = self.m_ratio if self.m_ratio is not None else (1.4 if sparse else 1.7)
        m = self.m if self.m is not None else int(math.ceil(ratio * d))
        ens = self.ensemble if self.ensemble is not None else ("hashing_s" if sparse else "hrht")
        s = self.s if self.s is not None else (2 if sparse else 1)
        return m, ens, min(s, m)


# ------------------------------------------------------------------- LSQR

@dataclass
class LsqrResult:
    y: np.ndarray
    iterations: int
    rnorm: float
    arnorm: float
    norm_W: float
    converged: bool
    rnorms: list = field(default_factory=list, repr=False)


def power_norm(W: LinearOperator, iters: int = 20, seed: int = 0) -> float:
    """||W||_2 by power iteration on W^T W."""
    v = rngmod.stream(seed, 303).standard_normal(W.shape[1])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max(iters, 1)):
        z = W.rmatvec(W.matvec(v))
        nz = float(np.linalg.norm(z))
        if nz == 0.0:
            return 0.0
        v = z / nz
        est = math.sqrt(nz)
    return max(est, float(np.linalg.norm(W.matvec(v))))


def lsqr(W, b, tol_r: float = 1e-6, it_max: int = 10_000, y0=None, norm_W: Optional[float] = None,
         power_iters: int = 20, stall_window: int = 50, seed: int = 0) -> LsqrResult:
    """Golub-Kahan LSQR for min ||W y - b|| started at ``y0``.

    Stops when ||W^T r|| / (||W|| ||r||) <= tol_r, with ||W|| from power
    iteration unless supplied.  Raises MaxIterations (carrying the last
    iterate) after ``it_max`` steps and Stagnation when the residual norm
    has not moved by more than 1e-15 relative over ``stall_window`` steps.
    A residual at rounding level (consistent systems) also ends the run,
    since the ratio test is 0/0 there.
    """
    W = aslinearoperator(W)
    b = np.asarray(b, dtype=float)
    n, p = W.shape
    if b.shape != (n,):
        raise InvalidInput(f"b has shape {b.shape}, expected ({n},)")
    y = np.zeros(p) if y0 is None else np.array(y0, dtype=float)
    nW = power_norm(W, power_iters, seed) if norm_W is None else float(norm_W)

    bnorm = float(np.linalg.norm(b))
    floor_tol = 64 * np.finfo(float).eps
    u = b - W.matvec(y)
    beta = float(np.linalg.norm(u))
    rnorms = [beta]
    if beta == 0.0 or nW == 0.0:
        return LsqrResult(y, 0, beta, 0.0, nW, True, rnorms)
    u /= beta
    v = W.rmatvec(u)
    alpha = float(np.linalg.norm(v))
    arnorm = alpha * beta
    if alpha == 0.0 or arnorm / (nW * beta) <= tol_r:
        return LsqrResult(y, 0, beta, arnorm, nW, True, rnorms)
    v /= alpha
    w = v.copy()
    phibar, rhobar = beta, alpha
    rnorm = beta
    for k in range(1, it_max + 1):
        u = W.matvec(v) - alpha * u
        beta = float(np.linalg.norm(u))
        if beta > 0.0:
            u /= beta
        v = W.rmatvec(u) - beta * v
        alpha = float(np.linalg.norm(v))
        if alpha > 0.0:
            v /= alpha
        rho = math.hypot(rhobar, beta)
        c, s = rhobar / rho, beta / rho
        theta = s * alpha
        rhobar = -c * alpha
        phi = c * phibar
        phibar = s * phibar
        y = y + (phi / rho) * w
        w = v - (theta / rho) * w
        rnorm = abs(phibar)
        arnorm = rnorm * alpha * abs(c)
        rnorms.append(rnorm)
        if rnorm <= floor_tol * (bnorm + nW * float(np.linalg.norm(y))) or arnorm <= tol_r * nW * rnorm:
            return LsqrResult(y, k, rnorm, arnorm, nW, True, rnorms)
        if k >= stall_window and abs(rnorms[-1 - stall_window] - rnorm) <= 1e-15 * max(rnorm, 1e-300):
            raise Stagnation(f"LSQR residual stalled at iteration {k}",
                             LsqrResult(y, k, rnorm, arnorm, nW, False, rnorms))
    raise MaxIterations(f"LSQR reached it_max = {it_max}", LsqrResult(y, it_max, rnorm, arnorm, nW, False, rnorms))


# -------------------------------------------------------------- pipeline

def _as_operator(A: Matrix) -> tuple[LinearOperator, bool]:
    if isinstance(A, SparseMatrix):
        return LinearOperator(A.shape, matvec=lambda x: spmv(A, x), rmatvec=lambda y: spmv(A, y, transpose=True),
                              dtype=float), True
    return aslinearoperator(A), False


def _check_system(A: Matrix, b) -> tuple[np.ndarray, int, int]:
    if isinstance(A, SparseMatrix):
        n, d = A.shape
    else:
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or not np.all(np.isfinite(A)):
            raise InvalidInput("A must be a finite 2-d array")
        n, d = A.shape
    b = np.asarray(b, dtype=float)
    if b.shape != (n,) or not np.all(np.isfinite(b)):
        raise InvalidInput(f"b must be a finite vector of length {n}")
    if not n >= d >= 1:
        raise InvalidInput(f"need n >= d >= 1, got {n} x {d}")
    return b, n, d


@dataclass(frozen=True)
class Preconditioner:
    """W = A V1 T^{-1}, with T the triangular block shifted by ``perturb`` on its diagonal."""

    cod: CodFactorization
    T: np.ndarray
    S: SketchOp
    SA: np.ndarray
    Sb: np.ndarray

    @property
    def p(self) -> int:
        return self.cod.p

    def to_x(self, y) -> np.ndarray:
        return self.cod.basis @ sla.solve_triangular(self.T, y, lower=False)

    def from_x_adjoint(self, z) -> np.ndarray:
        return sla.solve_triangular(self.T, self.cod.basis.T @ z, lower=False, trans="T")

    def operator(self, A: Matrix) -> LinearOperator:
        Aop, _ = _as_operator(A)
        return LinearOperator((Aop.shape[0], self.p), matvec=lambda y: Aop.matvec(self.to_x(y)),
                              rmatvec=lambda r: self.from_x_adjoint(Aop.rmatvec(r)), dtype=float)

    def y0(self) -> np.ndarray:
        return self.cod.apply_q1t(self.Sb)

    def dense_W(self, A: Matrix) -> np.ndarray:
        Ad = A.to_dense() if isinstance(A, SparseMatrix) else np.asarray(A, dtype=float)
        B = sla.solve_triangular(self.T, self.cod.basis.T, lower=False, trans="T").T
        return Ad @ B


def build_preconditioner(A: Matrix, b, cfg: LlsConfig = LlsConfig(), seed: int = 0) -> Preconditioner:
    """Steps 1 and 2: sketch and factorize; p = 0 raises DegenerateSketch."""
    b, n, d = _check_system(A, b)
    sparse = isinstance(A, SparseMatrix)
    m, ens, s = cfg.resolve(d, sparse)
    S = make_sketch(ens, m, n, s=s, seed=seed, pad=True)
    SA = S.apply_sparse(A) if sparse else S.apply(A)
    Sb = S.apply(b)
    cod = column_pivoted_qr(SA, cfg.rcond, min_norm=cfg.min_norm)
    if cod.p == 0:
        raise DegenerateSketch("sketched matrix has numerical rank 0")
    T = cod.tri + cfg.perturb * np.eye(cod.p)
    return Preconditioner(cod, T, S, SA, Sb)


@dataclass
class LlsDiagnostics:
    m: int
    ensemble: str
    p: int
    eps_measured: float
    early_exit: bool
    lsqr_iterations: int
    residual_sketch: float
    residual: float
    norm_W: float = math.nan


def sketch_solve(A: Matrix, b, cfg: LlsConfig = LlsConfig(), seed: int = 0) -> tuple[np.ndarray, LlsDiagnostics]:
    """Solve min ||A x - b|| by sketching, preconditioning and LSQR."""
    b, n, d = _check_system(A, b)
    pre = build_preconditioner(A, b, cfg, seed)
    Aop, _ = _as_operator(A)
    y0 = pre.y0()
    x_s = pre.to_x(y0)
    res_s = float(np.linalg.norm(Aop.matvec(x_s) - b))
    eps = math.nan
    if cfg.measure_eps:
        eps = embedding_report(pre.S, A).eps_measured
    diag = LlsDiagnostics(pre.S.m, pre.S.ensemble, pre.p, eps, True, 0, res_s, res_s)
    if res_s <= cfg.tau_a:
        return x_s, diag
    W = pre.operator(A)
    try:
        out = lsqr(W, b, cfg.tau_r, cfg.it_max, y0, power_iters=cfg.power_iters, seed=seed)
    except (MaxIterations, Stagnation) as exc:
        r: LsqrResult = exc.result
        x = pre.to_x(r.y)
        diag.early_exit, diag.lsqr_iterations, diag.norm_W = False, r.iterations, r.norm_W
        diag.residual = float(np.linalg.norm(Aop.matvec(x) - b))
        exc.result = (x, diag)
        raise
    x = pre.to_x(out.y)
    diag.early_exit, diag.lsqr_iterations, diag.norm_W = False, out.iterations, out.norm_W
    diag.residual = float(np.linalg.norm(Aop.matvec(x) - b))
    return x, diag


def sketched_solution(A: Matrix, b, cfg: LlsConfig = LlsConfig(), seed: int = 0) -> tuple[np.ndarray, Preconditioner]:
    """Step 3 only: x_s = V1 T^{-1} Q1^T S b."""
    pre = build_preconditioner(A, b, cfg, seed)
    return pre.to_x(pre.y0()), pre


def lsqr_iteration_bound(eps: float, tau_r: float) -> int:
    """ceil((log 2 + |log tau_r|) / |log eps|) for an eps-embedding."""
    if not 0.0 < eps < 1.0:
        raise InvalidInput("eps must lie in (0, 1)")
    return int(math.ceil((math.log(2.0) + abs(math.log(tau_r))) / abs(math.log(eps))))


@dataclass(frozen=True)
class PreconditionerSample:
    kappa_W: float
    eps_measured: float
    p: int


def preconditioner_quality(A: Matrix, cfg: LlsConfig = LlsConfig(), trials: int = 10, seed: int = 0,
                           b=None) -> list[PreconditionerSample]:
    """kappa(W) (by SVD of the explicit W) and measured eps for independent sketches."""
    n = A.shape[0]
    b = np.ones(n) if b is None else b
    out = []
    for t in range(trials):
        pre = build_preconditioner(A, b, cfg, rngmod.derive_seed(seed, 404, t))
        _, sv, _ = compact_svd(pre.dense_W(A))
        eps = embedding_report(pre.S, A).eps_measured
        out.append(PreconditionerSample(float(sv[0] / sv[-1]), eps, pre.p))
    return out
