"""Dense and sparse linear-algebra primitives.

Householder QR, column-pivoted QR with an optional complete orthogonal
step, the fast Walsh-Hadamard transform and triangular solves are written
out here.  The SVD and symmetric eigensolver used in production paths are
LAPACK calls through numpy; ``jacobi_svd`` is a self-contained one-sided
Jacobi SVD kept as an independent reference.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import InvalidInput, SingularTriangular

EPS = np.finfo(float).eps


def as_dense(A, name: str = "A") -> np.ndarray:
    """Validate ``A`` as a finite 2-d float array."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise InvalidInput(f"{name} must be 2-dimensional, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInput(f"{name} has non-finite entries")
    return A


def _as_vector(x, name: str = "x") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InvalidInput(f"{name} has non-finite entries")
    return x


# ---------------------------------------------------------------- Householder

def householder_vector(x: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Reflector ``H = I - tau v v^T`` with ``v[0] = 1`` and ``H x = beta e_0``.

    The sign of ``beta`` is opposite to ``x[0]`` to avoid cancellation.
    """
    alpha = x[0]
    xnorm = np.linalg.norm(x[1:])
    v = np.zeros_like(x)
    v[0] = 1.0
    if xnorm == 0.0:
        return v, 0.0, float(alpha)
    beta = -np.copysign(np.hypot(alpha, xnorm), alpha)
    tau = (beta - alpha) / beta
    v[1:] = x[1:] / (alpha - beta)
    return v, float(tau), float(beta)


def _apply_reflector(v, tau, B):
    # B <- (I - tau v v^T) B, in place on a view
    if tau == 0.0:
        return
    if B.ndim == 1:
        B -= tau * v * (v @ B)
    else:
        B -= tau * np.outer(v, v @ B)


@dataclass(frozen=True)
class Reflectors:
    """Product ``Q = H_0 H_1 ... H_{k-1}`` of Householder reflectors.

    Reflector ``j`` acts on rows ``j:`` of an ``m``-row operand.
    """

    m: int
    vs: tuple
    taus: tuple

    def apply_qt(self, B) -> np.ndarray:
        B = np.array(B, dtype=float, copy=True)
        for j, (v, tau) in enumerate(zip(self.vs, self.taus)):
            _apply_reflector(v, tau, B[j:])
        return B

    def apply_q(self, B) -> np.ndarray:
        B = np.array(B, dtype=float, copy=True)
        for j in range(len(self.vs) - 1, -1, -1):
            _apply_reflector(self.vs[j], self.taus[j], B[j:])
        return B

    def thin_q(self, k: Optional[int] = None) -> np.ndarray:
        """First ``k`` columns of Q (default: number of reflectors)."""
        k = len(self.vs) if k is None else k
        E = np.zeros((self.m, k))
        E[np.arange(k), np.arange(k)] = 1.0
        return self.apply_q(E)


def householder_qr(A) -> tuple[Reflectors, np.ndarray]:
    """Thin Householder QR of a tall matrix; returns (reflectors, R)."""
    A = as_dense(A)
    m, n = A.shape
    if m < n:
        raise InvalidInput(f"householder_qr needs rows >= cols, got {A.shape}")
    W = A.copy()
    vs, taus = [], []
    for j in range(n):
        v, tau, beta = householder_vector(W[j:, j].copy())
        _apply_reflector(v, tau, W[j:, j + 1:])
        W[j, j] = beta
        W[j + 1:, j] = 0.0
        vs.append(v)
        taus.append(tau)
    return Reflectors(m, tuple(vs), tuple(taus)), np.triu(W[:n, :])


# ------------------------------------------------------- column-pivoted QR

@dataclass(frozen=True)
class CodFactorization:
    """Rank-revealing factorization ``A[:, perm] = Q [[R11, R12], [0, R22]]``.

    ``p`` is the detected rank.  With the complete orthogonal step
    (``min_norm``) the leading block row is rewritten as
    ``[R11 R12] = T Z^T`` with ``T`` upper triangular and ``Z`` having
    orthonormal columns, which zeroes the coupling block.

    ``basis`` (V1) and ``tri`` (the triangular block) always describe
    ``A ~= Q1 tri V1^T``; x = V1 tri^{-1} Q1^T b is the basic solution, or
    the minimal-norm one when ``min_norm`` is set.
    """

    q: Reflectors
    r11: np.ndarray
    r12: np.ndarray
    perm: np.ndarray
    p: int
    rcond: float
    absolute: bool
    diag: np.ndarray
    min_norm: bool = False
    tri: np.ndarray = field(default=None, repr=False)
    basis: np.ndarray = field(default=None, repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.q.m, self.perm.size

    def apply_q1t(self, b) -> np.ndarray:
        return self.q.apply_qt(b)[: self.p]

    def q1(self) -> np.ndarray:
        return self.q.thin_q(self.p)

    def solve(self, b, perturb: float = 0.0) -> np.ndarray:
        """x = V1 tri^{-1} Q1^T b."""
        c = self.apply_q1t(b)
        return self.basis @ tri_solve(self.tri, c, perturb=perturb)


def column_pivoted_qr(A, rcond: float = 1e-12, absolute: bool = False, min_norm: bool = False) -> CodFactorization:
    """Householder QR with max-norm column pivoting and norm downdating.

    The detected rank ``p`` counts diagonal entries with
    ``|R_ii| >= rcond * |R_00|`` (relative mode, default) or
    ``|R_ii| >= rcond`` (absolute mode).
    """
    A = as_dense(A)
    if not (0.0 < rcond < 1.0) and not absolute:
        raise InvalidInput(f"rcond must lie in (0, 1), got {rcond}")
    if absolute and not rcond > 0.0:
        raise InvalidInput(f"absolute rcond must be positive, got {rcond}")
    m, k = A.shape
    W = A.copy()
    perm = np.arange(k)
    steps = min(m, k)
    norms = np.linalg.norm(W, axis=0)
    ref = norms.copy()
    tol3z = np.sqrt(EPS)
    vs, taus = [], []
    for j in range(steps):
        piv = j + int(np.argmax(norms[j:]))
        if piv != j:
            W[:, [j, piv]] = W[:, [piv, j]]
            perm[[j, piv]] = perm[[piv, j]]
            norms[[j, piv]] = norms[[piv, j]]
            ref[[j, piv]] = ref[[piv, j]]
        v, tau, beta = householder_vector(W[j:, j].copy())
        _apply_reflector(v, tau, W[j:, j + 1:])
        W[j, j] = beta
        W[j + 1:, j] = 0.0
        vs.append(v)
        taus.append(tau)
        # downdate trailing column norms, recomputing when cancellation bites
        rest = np.arange(j + 1, k)
        live = rest[norms[rest] != 0.0]
        if live.size:
            t = 1.0 - (np.abs(W[j, live]) / norms[live]) ** 2
            t = np.maximum(t, 0.0)
            t2 = t * (norms[live] / ref[live]) ** 2
            redo = t2 <= tol3z
            keep = live[~redo]
            norms[keep] *= np.sqrt(t[~redo])
            again = live[redo]
            if again.size:
                if j + 1 < m:
                    norms[again] = np.linalg.norm(W[j + 1:, again], axis=0)
                else:
                    norms[again] = 0.0
                ref[again] = norms[again]
    R = np.triu(W[:steps, :])
    diag = np.abs(np.diag(R)) if steps else np.zeros(0)
    if steps == 0 or diag[0] == 0.0:
        p = 0
    else:
        thr = rcond if absolute else rcond * diag[0]
        p = int(np.count_nonzero(diag >= thr))
    q = Reflectors(m, tuple(vs), tuple(taus))
    r11 = R[:p, :p].copy()
    r12 = R[:p, p:].copy()
    P = np.eye(k)[:, perm]
    if min_norm and p > 0 and p < k:
        tri, Z = _rz_complete(np.hstack([r11, r12]))
        basis = P @ Z
    else:
        tri = r11
        basis = P[:, :p]
    return CodFactorization(q, r11, r12, perm, p, rcond, absolute, diag, min_norm, tri, basis)


def _rz_complete(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Write a p-by-k upper trapezoid X as ``T Z^T``, T upper, Z orthonormal.

    QR of the doubly reversed transpose, then reverse back; the reversal
    keeps the triangular factor upper rather than lower.
    """
    p, k = X.shape
    Y = X[::-1, ::-1].T  # k x p
    refl, Tp = householder_qr(Y)
    Zp = refl.thin_q(p)
    T = Tp.T[::-1, ::-1].copy()
    Z = Zp[::-1, ::-1].copy()
    return T, Z


# ------------------------------------------------------------------ SVD / eig

def compact_svd(A, tol: Optional[float] = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD ``A = U diag(s) V^T`` with singular values non-increasing.

    With ``tol`` given, singular triplets with ``s <= tol * s[0]`` are
    dropped, giving the rank-revealing compact form.
    """
    A = as_dense(A)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if tol is not None:
        r = numerical_rank(s, tol)
        U, s, Vt = U[:, :r], s[:r], Vt[:r]
    return U, s, Vt.T


def numerical_rank(s: np.ndarray, tol: float = 1e-10) -> int:
    """Count of singular values above ``tol`` times the largest."""
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))


def spectral_norm(A) -> float:
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0.0
    return float(np.linalg.norm(A, 2))


def jacobi_svd(A, tol: float = 1e-15, max_sweeps: int = 60) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One-sided (Hestenes) Jacobi SVD, used as an independent oracle."""
    A = as_dense(A)
    m, n = A.shape
    if m < n:
        V, s, U = jacobi_svd(A.T, tol, max_sweeps)
        return U, s, V
    U = A.copy()
    V = np.eye(n)
    for _ in range(max_sweeps):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                a = U[:, i] @ U[:, i]
                b = U[:, j] @ U[:, j]
                g = U[:, i] @ U[:, j]
                if abs(g) <= tol * np.sqrt(a * b) or g == 0.0:
                    continue
                rotated = True
                zeta = (b - a) / (2.0 * g)
                t = np.copysign(1.0, zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s_ = c * t
                ui, uj = U[:, i].copy(), U[:, j].copy()
                U[:, i] = c * ui - s_ * uj
                U[:, j] = s_ * ui + c * uj
                vi, vj = V[:, i].copy(), V[:, j].copy()
                V[:, i] = c * vi - s_ * vj
                V[:, j] = s_ * vi + c * vj
        if not rotated:
            break
    s = np.linalg.norm(U, axis=0)
    order = np.argsort(-s, kind="stable")
    s = s[order]
    U = U[:, order]
    V = V[:, order]
    nz = s > 0
    U[:, nz] /= s[nz]
    return U, s, V


def _fix_signs(V: np.ndarray) -> np.ndarray:
    # first nonzero component of each column made positive
    V = V.copy()
    for j in range(V.shape[1]):
        col = V[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-14 * max(1.0, np.abs(col).max()))
        if nz.size and col[nz[0]] < 0:
            V[:, j] = -col
    return V


def _check_symmetric(H) -> np.ndarray:
    H = as_dense(H, "H")
    if H.shape[0] != H.shape[1]:
        raise InvalidInput(f"H must be square, got {H.shape}")
    scale = max(1.0, float(np.abs(H).max())) if H.size else 1.0
    if H.size and np.abs(H - H.T).max() > 1e-10 * scale:
        raise InvalidInput("H is not symmetric")
    return 0.5 * (H + H.T)


def eig_sym(H) -> tuple[np.ndarray, np.ndarray]:
    """All eigenpairs, eigenvalues descending, deterministic vector signs."""
    H = _check_symmetric(H)
    w, V = np.linalg.eigh(H)
    w, V = w[::-1], V[:, ::-1]
    return w.copy(), _fix_signs(V)


def eig_sym_min(H) -> tuple[float, np.ndarray]:
    """Smallest eigenvalue of a symmetric matrix and a unit eigenvector."""
    H = _check_symmetric(H)
    w, V = np.linalg.eigh(H)
    v = _fix_signs(V[:, :1])[:, 0]
    return float(w[0]), v


# --------------------------------------------------------------------- FWHT

def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def fwht(x, normalize: bool = True) -> np.ndarray:
    """Fast Walsh-Hadamard transform along axis 0 (Sylvester ordering).

    With ``normalize`` the transform is ``H = n^{-1/2} [(-1)^{<i,j>}]``,
    which is symmetric and orthogonal, hence an involution.
    """
    y = np.array(x, dtype=float, copy=True)
    n = y.shape[0]
    if not is_power_of_two(n):
        raise InvalidInput(f"fwht length must be a power of 2, got {n}")
    tail = y.shape[1:]
    h = 1
    while h < n:
        y = y.reshape((n // (2 * h), 2, h) + tail)
        a = y[:, 0].copy()
        b = y[:, 1]
        y[:, 0] += b
        y[:, 1] = a - b
        y = y.reshape((n,) + tail)
        h *= 2
    if normalize:
        y /= np.sqrt(n)
    return y


def hadamard_matrix(n: int) -> np.ndarray:
    """Explicit normalized Walsh-Hadamard matrix from the bit-parity formula."""
    if not is_power_of_two(n):
        raise InvalidInput(f"n must be a power of 2, got {n}")
    i = np.arange(n)
    parity = np.array([[bin(a & b).count("1") & 1 for b in i] for a in i])
    return (1.0 - 2.0 * parity) / np.sqrt(n)


# ----------------------------------------------------------- triangular solve

def tri_solve(R, b, transpose: bool = False, perturb: float = 0.0) -> np.ndarray:
    """Solve ``R x = b`` (or ``R^T x = b``) for upper-triangular ``R``.

    Each division is by ``R_ii + perturb``; with ``perturb = 0`` a zero
    pivot raises SingularTriangular.
    """
    R = np.asarray(R, dtype=float)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise InvalidInput(f"R must be square, got {R.shape}")
    if perturb < 0:
        raise InvalidInput("perturb must be non-negative")
    b = _as_vector(b, "b")
    n = R.shape[0]
    if b.shape[0] != n:
        raise InvalidInput(f"dimension mismatch: R is {R.shape}, b has {b.shape[0]} rows")
    d = np.diag(R) + perturb
    if np.any(d == 0.0):
        raise SingularTriangular("zero diagonal in triangular solve")
    x = np.array(b, dtype=float, copy=True)
    if not transpose:
        for i in range(n - 1, -1, -1):
            if i + 1 < n:
                x[i] -= R[i, i + 1:] @ x[i + 1:]
            x[i] /= d[i]
    else:
        for i in range(n):
            if i:
                x[i] -= R[:i, i] @ x[:i]
            x[i] /= d[i]
    return x


# ----------------------------------------------------------------- sparse

class SparseMatrix:
    """Compressed-row sparse matrix with validated structure.

    Storage and products are delegated to ``scipy.sparse.csr_matrix``.
    """

    def __init__(self, indptr, indices, data, shape):
        indptr = np.asarray(indptr, dtype=np.int64)
        indices = np.asarray(indices, dtype=np.int64)
        data = np.asarray(data, dtype=float)
        rows, cols = (int(shape[0]), int(shape[1]))
        if indptr.shape != (rows + 1,) or indptr[0] != 0 or np.any(np.diff(indptr) < 0):
            raise InvalidInput("row offsets must be non-decreasing and start at 0")
        if indices.shape != data.shape or indptr[-1] != data.size:
            raise InvalidInput("indices/values length must match the last row offset")
        if not np.all(np.isfinite(data)):
            raise InvalidInput("sparse values must be finite")
        if indices.size and (indices.min() < 0 or indices.max() >= cols):
            raise InvalidInput("column index out of range")
        for r in range(rows):
            seg = indices[indptr[r]:indptr[r + 1]]
            if seg.size > 1 and np.any(np.diff(seg) <= 0):
                raise InvalidInput(f"column indices in row {r} are not strictly increasing")
        self._m = sp.csr_matrix((data, indices, indptr), shape=(rows, cols))

    @classmethod
    def from_scipy(cls, M) -> "SparseMatrix":
        M = sp.csr_matrix(M, dtype=float)
        M.sum_duplicates()
        M.sort_indices()
        return cls(M.indptr, M.indices, M.data, M.shape)

    @classmethod
    def from_dense(cls, A) -> "SparseMatrix":
        return cls.from_scipy(sp.csr_matrix(as_dense(A)))

    @property
    def shape(self) -> tuple[int, int]:
        return self._m.shape

    @property
    def nnz(self) -> int:
        return int(self._m.nnz)

    @property
    def csr(self) -> sp.csr_matrix:
        return self._m

    def to_dense(self) -> np.ndarray:
        return self._m.toarray()


def spmv(A: SparseMatrix, x, transpose: bool = False) -> np.ndarray:
    """Sparse matrix-vector (or matrix-block) product."""
    x = _as_vector(x)
    rows, cols = A.shape
    need = rows if transpose else cols
    if x.shape[0] != need:
        raise InvalidInput(f"dimension mismatch: A is {A.shape}, x has {x.shape[0]} rows")
    M = A.csr.T if transpose else A.csr
    return np.asarray(M @ x)
