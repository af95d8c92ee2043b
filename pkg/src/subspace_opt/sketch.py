"""Random embedding ensembles and embedding diagnostics.

A ``SketchOp`` is realized eagerly from its seed: the random structure
(dense entries, per-column rows and signs, Hadamard signs) is drawn once
at construction, so applying it repeatedly is cheap and the operator is
reproducible bit for bit from ``(ensemble, m, n, s, seed)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import rng as rngmod
from .errors import InvalidConfig, InvalidInput
from .kernels import SparseMatrix, compact_svd, fwht, is_power_of_two, numerical_rank, spectral_norm

ENSEMBLES = (
    "gaussian",
    "sampling",
    "hashing_s",
    "hashing_variant_s",
    "stable_one_hashing",
    "srht",
    "hrht",
)

ALIASES = {
    "hashing": "hashing_s",
    "s_hashing": "hashing_s",
    "hashing_variant": "hashing_variant_s",
    "stable": "stable_one_hashing",
    "stable_1_hashing": "stable_one_hashing",
    "gauss": "gaussian",
}


def canonical_ensemble(name: str) -> str:
    name = name.strip().lower().replace("-", "_")
    name = ALIASES.get(name, name)
    if name not in ENSEMBLES + ("identity", "explicit"):
        raise InvalidConfig(f"unknown ensemble {name!r}")
    return name


def next_pow2(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


@dataclass(frozen=True, eq=False)
class SketchOp:
    """Seeded random linear map from R^n to R^m."""

    ensemble: str
    m: int
    n: int
    s: int
    seed: int
    n_pad: int
    dense_part: Optional[np.ndarray] = field(default=None, repr=False)
    sparse_part: Optional[sp.csr_matrix] = field(default=None, repr=False)
    signs: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.m, self.n

    @property
    def hadamard(self) -> bool:
        return self.signs is not None

    @classmethod
    def from_matrix(cls, M) -> "SketchOp":
        """Wrap an explicit matrix (testing and full-space runs)."""
        M = np.array(M, dtype=float, ndmin=2)
        if not np.all(np.isfinite(M)):
            raise InvalidInput("sketch matrix has non-finite entries")
        return cls("explicit", M.shape[0], M.shape[1], 0, 0, M.shape[1], dense_part=M)

    def _check(self, x, rows: int) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or x.shape[0] != rows:
            raise InvalidInput(f"dimension mismatch: operator {self.m}x{self.n}, operand rows {x.shape[:1]}")
        return x

    def apply(self, x) -> np.ndarray:
        """S x for a vector or an n-row block."""
        x = self._check(x, self.n)
        if self.dense_part is not None:
            return self.dense_part @ x
        if self.hadamard:
            z = np.zeros((self.n_pad,) + x.shape[1:])
            z[: self.n] = x
            z *= self.signs.reshape((-1,) + (1,) * (x.ndim - 1))
            z = fwht(z)
            return np.asarray(self.sparse_part @ z)
        return np.asarray(self.sparse_part @ x)

    def apply_t(self, y) -> np.ndarray:
        """S^T y for a vector or an m-row block."""
        y = self._check(y, self.m)
        if self.dense_part is not None:
            return self.dense_part.T @ y
        z = np.asarray(self.sparse_part.T @ y)
        if self.hadamard:
            z = fwht(z)
            z *= self.signs.reshape((-1,) + (1,) * (y.ndim - 1))
            return z[: self.n]
        return z

    def apply_sparse(self, A: SparseMatrix) -> np.ndarray:
        """S A for a sparse A, returned dense (m x cols)."""
        if A.shape[0] != self.n:
            raise InvalidInput(f"dimension mismatch: operator {self.m}x{self.n}, A is {A.shape}")
        if self.dense_part is not None:
            return np.asarray((A.csr.T @ self.dense_part.T).T)
        if self.hadamard:
            return self.apply(A.to_dense())
        return np.asarray((self.sparse_part @ A.csr).toarray())

    def dense(self) -> np.ndarray:
        if self.dense_part is not None:
            return self.dense_part.copy()
        if self.hadamard:
            # S_h H D restricted to the first n columns; H is symmetric
            SH = fwht(self.sparse_part.T.toarray()).T
            return (SH * self.signs)[:, : self.n]
        return self.sparse_part.toarray()

    @cached_property
    def norm2(self) -> float:
        """Spectral norm of the densified operator (computed once)."""
        return spectral_norm(self.dense())


def _signs(g: np.random.Generator, size) -> np.ndarray:
    return 2.0 * g.integers(0, 2, size=size) - 1.0


def _distinct_rows(g: np.random.Generator, m: int, n: int, s: int) -> np.ndarray:
    # sequential sampling without replacement, vectorized over columns
    rows = np.empty((n, s), dtype=np.int64)
    for k in range(s):
        cand = g.integers(0, m, size=n)
        clash = (cand[:, None] == rows[:, :k]).any(axis=1) if k else np.zeros(n, bool)
        while clash.any():
            cand[clash] = g.integers(0, m, size=int(clash.sum()))
            clash = (cand[:, None] == rows[:, :k]).any(axis=1)
        rows[:, k] = cand
    return rows


def _column_hash(rows: np.ndarray, vals: np.ndarray, m: int, n: int) -> sp.csr_matrix:
    cols = np.repeat(np.arange(n), rows.shape[1])
    M = sp.coo_matrix((vals.ravel(), (rows.ravel(), cols)), shape=(m, n)).tocsr()
    M.sum_duplicates()
    M.eliminate_zeros()
    M.sort_indices()
    return M


def make_sketch(ensemble: str, m: int, n: int, s: int = 1, seed: int = 0, pad: bool = False) -> SketchOp:
    """Draw a sketch from the named ensemble.

    ``srht``/``hrht`` need a power-of-two ``n``; with ``pad=True`` other
    sizes are zero-padded to the next power of two instead of rejected.
    """
    ens = canonical_ensemble(ensemble)
    m, n, s = int(m), int(n), int(s)
    if m < 1 or n < 1:
        raise InvalidConfig(f"sketch dimensions must be positive, got m={m}, n={n}")
    if s < 1:
        raise InvalidConfig(f"s must be positive, got {s}")
    g = rngmod.stream(seed)
    if ens == "identity":
        if m != n:
            raise InvalidConfig("identity sketch needs m == n")
        return SketchOp(ens, m, n, 0, seed, n, dense_part=np.eye(n))
    if ens == "explicit":
        raise InvalidConfig("use SketchOp.from_matrix for explicit sketches")
    if ens == "gaussian":
        return SketchOp(ens, m, n, 0, seed, n, dense_part=g.standard_normal((m, n)) / math.sqrt(m))
    if ens == "sampling":
        cols = g.integers(0, n, size=m)
        M = sp.csr_matrix((np.full(m, math.sqrt(n / m)), (np.arange(m), cols)), shape=(m, n))
        return SketchOp(ens, m, n, 0, seed, n, sparse_part=M)
    if ens in ("hashing_s", "hashing_variant_s"):
        if s > m:
            raise InvalidConfig(f"s = {s} exceeds m = {m}")
        if ens == "hashing_s":
            rows = _distinct_rows(g, m, n, s)
        else:
            rows = g.integers(0, m, size=(n, s))
        vals = _signs(g, (n, s)) / math.sqrt(s)
        return SketchOp(ens, m, n, s, seed, n, sparse_part=_column_hash(rows, vals, m, n))
    if ens == "stable_one_hashing":
        pool = np.tile(np.arange(m), -(-n // m))
        rows = g.permutation(pool)[:n].reshape(n, 1)
        vals = _signs(g, (n, 1))
        return SketchOp(ens, m, n, 1, seed, n, sparse_part=_column_hash(rows, vals, m, n))
    # srht / hrht
    if not is_power_of_two(n):
        if not pad:
            raise InvalidConfig(f"{ens} needs a power-of-two input dimension, got {n}")
    N = next_pow2(n)
    if m > N:
        raise InvalidConfig(f"{ens} needs m <= n, got m={m}, n={N}")
    D = _signs(g, N)
    if ens == "srht":
        cols = g.integers(0, N, size=m)
        M = sp.csr_matrix((np.full(m, math.sqrt(N / m)), (np.arange(m), cols)), shape=(m, N))
    else:
        if s > m:
            raise InvalidConfig(f"s = {s} exceeds m = {m}")
        rows = _distinct_rows(g, m, N, s)
        vals = _signs(g, (N, s)) / math.sqrt(s)
        M = _column_hash(rows, vals, m, N)
    return SketchOp(ens, m, n, s if ens == "hrht" else 0, seed, N, sparse_part=M, signs=D)


# ------------------------------------------------------------- diagnostics

def coherence(A) -> float:
    """Largest row norm of the left singular factor of ``A``."""
    A = A.to_dense() if isinstance(A, SparseMatrix) else np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    U, s, _ = compact_svd(A, tol=1e-10)
    if s.size == 0:
        raise InvalidInput("coherence of the zero matrix is undefined")
    return float(np.sqrt((U * U).sum(axis=1)).max())


def non_uniformity(x) -> float:
    """||x||_inf / ||x||_2."""
    x = np.asarray(x, dtype=float).ravel()
    nrm = np.linalg.norm(x)
    if not np.isfinite(nrm):
        raise InvalidInput("x has non-finite entries")
    if nrm == 0.0:
        raise InvalidInput("non-uniformity of the zero vector is undefined")
    return float(np.abs(x).max() / nrm)


@dataclass(frozen=True)
class EmbeddingReport:
    eps_measured: float
    rank_preserved: bool
    coherence: float
    rank: int
    rank_sketched: int


def embedding_report(S: SketchOp, A) -> EmbeddingReport:
    """Distortion of S on range(A), rank preservation and coherence."""
    A = A.to_dense() if isinstance(A, SparseMatrix) else np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    U, s, _ = compact_svd(A, tol=1e-10)
    r = s.size
    if r == 0:
        return EmbeddingReport(0.0, numerical_rank(np.linalg.svd(S.apply(A), compute_uv=False)) == 0, 0.0, 0, 0)
    SU = S.apply(U)
    sig = np.linalg.svd(SU, compute_uv=False)
    smin = sig[-1] if sig.size == r else 0.0
    eps = max(1.0 - smin**2, sig[0] ** 2 - 1.0)
    r_s = numerical_rank(np.linalg.svd(S.apply(A), compute_uv=False), 1e-10)
    mu = float(np.sqrt((U * U).sum(axis=1)).max())
    return EmbeddingReport(float(eps), r_s == r, mu, r, r_s)


def jl_failure_rate(ensemble: str, l: int, d: int, eps_S: float, trials: int, seed: int = 0,
                    s: int = 1, y=None, chunk: int = 1000) -> float:
    """Fraction of draws with ||S y||^2 < (1 - eps_S) ||y||^2 for a fixed y.

    ``y`` defaults to a random unit vector.  Gaussian draws are generated
    in fixed-size chunks, each from its own derived stream, so the result
    does not depend on how the work is split.
    """
    if trials < 1:
        raise InvalidInput("trials must be positive")
    if y is None:
        y = rngmod.stream(seed, 0).standard_normal(d)
        y /= np.linalg.norm(y)
    y = np.asarray(y, dtype=float).ravel()
    if y.size != d:
        raise InvalidInput(f"test vector has length {y.size}, expected {d}")
    ny2 = float(y @ y)
    if ny2 == 0.0 or not np.isfinite(ny2):
        raise InvalidInput("test vector must be finite and nonzero")
    thr = (1.0 - eps_S) * ny2
    ens = canonical_ensemble(ensemble)
    fails = 0
    if ens == "gaussian":
        done, c = 0, 0
        while done < trials:
            b = min(chunk, trials - done)
            g = rngmod.stream(seed, 1, c)
            G = g.standard_normal((b, l, d))
            Sy = (G @ y) / math.sqrt(l)
            fails += int(np.count_nonzero((Sy * Sy).sum(axis=1) < thr))
            done += b
            c += 1
        return fails / trials
    for t in range(trials):
        S = make_sketch(ens, l, d, s=s, seed=rngmod.derive_seed(seed, 2, t), pad=True)
        Sy = S.apply(y)
        fails += int(Sy @ Sy < thr)
    return fails / trials


def s_max_bound(ensemble: str, l: int, d: int, s: int = 1, delta2: Optional[float] = None) -> float:
    """Operator-norm bound S_max for the ensembles with a tabulated value."""
    ens = canonical_ensemble(ensemble)
    if ens == "gaussian":
        if delta2 is None or not (0.0 < delta2 < 1.0):
            raise InvalidConfig("gaussian S_max needs delta2 in (0, 1)")
        return 1.0 + math.sqrt(d / l) + math.sqrt(2.0 * math.log(1.0 / delta2) / l)
    if ens == "hashing_s":
        return math.sqrt(d / s)
    if ens == "stable_one_hashing":
        return math.sqrt(-(-d // l))
    if ens == "sampling":
        return math.sqrt(d / l)
    if ens == "identity":
        return 1.0
    raise InvalidConfig(f"no tabulated S_max for ensemble {ens!r}")


def gaussian_jl_delta(eps_S: float, l: int) -> float:
    """Failure probability bound exp(-eps_S^2 l / 4) for scaled Gaussian sketches."""
    return math.exp(-eps_S * eps_S * l / 4.0)


def sampling_jl_delta(eps_S: float, l: int, d: int, nu: float) -> float:
    """Failure probability bound exp(-eps_S^2 l / (2 d nu^2)) for scaled sampling."""
    return math.exp(-eps_S * eps_S * l / (2.0 * d * nu * nu))


def randomized_hadamard(A, seed: int = 0) -> np.ndarray:
    """H D A with random signs D; rows of A must number a power of two."""
    A = np.asarray(A, dtype=float)
    D = _signs(rngmod.stream(seed), A.shape[0])
    return fwht(A * D.reshape((-1,) + (1,) * (A.ndim - 1)))
