"""Objective functions: a generic smooth problem and nonlinear least squares.

Derivatives are returned densely (desk-scale dimensions); the solvers only
use them through matrix actions so the access pattern stays the one a
matrix-free implementation would have.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import rng as rngmod
from .errors import InvalidConfig, InvalidInput


@dataclass
class ActionCounter:
    """Counts Jacobian actions (one per vector) and residual evaluations."""

    jacobian_actions: int = 0
    residual_evals: int = 0

    def charge_jacobian(self, k: int = 1) -> None:
        self.jacobian_actions += int(k)

    def charge_residual(self, k: int = 1) -> None:
        self.residual_evals += int(k)


class Problem:
    """Smooth objective with gradient and dense Hessian access."""

    name: str = "problem"
    d: int
    x0: np.ndarray
    f_star: Optional[float] = None

    def f(self, x) -> float:
        raise NotImplementedError

    def grad(self, x) -> np.ndarray:
        raise NotImplementedError

    def hess(self, x) -> np.ndarray:
        raise NotImplementedError

    def hess_action(self, x, V) -> np.ndarray:
        return self.hess(x) @ V


class FunctionProblem(Problem):
    """Problem assembled from callables."""

    def __init__(self, name, x0, f, grad, hess, f_star=None):
        self.name = name
        self.x0 = np.asarray(x0, dtype=float)
        self.d = self.x0.size
        self._f, self._g, self._h = f, grad, hess
        self.f_star = f_star

    def f(self, x):
        return float(self._f(np.asarray(x, dtype=float)))

    def grad(self, x):
        return np.asarray(self._g(np.asarray(x, dtype=float)), dtype=float)

    def hess(self, x):
        return np.asarray(self._h(np.asarray(x, dtype=float)), dtype=float)


def quadratic(d: int, scale=None) -> FunctionProblem:
    """f(x) = 1/2 sum scale_i x_i^2 started from the all-ones vector."""
    w = np.ones(d) if scale is None else np.asarray(scale, dtype=float)
    return FunctionProblem(
        "quadratic",
        np.ones(d),
        lambda x: 0.5 * float(w @ (x * x)),
        lambda x: w * x,
        lambda x: np.diag(w),
        f_star=0.0,
    )


class NlsProblem(Problem):
    """f(x) = 1/2 ||r(x)||^2 with residual, Jacobian and residual curvature.

    Subclasses implement ``residual``, ``jacobian`` (dense n x d) and
    ``residual_curvature(x, w) = sum_i w_i hess(r_i)(x)``.
    """

    n: int

    def __init__(self):
        self.counter = ActionCounter()

    # -- core
    def residual(self, x) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, x) -> np.ndarray:
        raise NotImplementedError

    def residual_curvature(self, x, w) -> np.ndarray:
        raise NotImplementedError

    # -- counted actions
    def r(self, x) -> np.ndarray:
        self.counter.charge_residual()
        return self.residual(x)

    def jac_action(self, x, V) -> np.ndarray:
        """J(x) V, charged one action per column of V."""
        V = np.asarray(V, dtype=float)
        self.counter.charge_jacobian(1 if V.ndim == 1 else V.shape[1])
        return self.jacobian(x) @ V

    def jac_t_action(self, x, U) -> np.ndarray:
        U = np.asarray(U, dtype=float)
        self.counter.charge_jacobian(1 if U.ndim == 1 else U.shape[1])
        return self.jacobian(x).T @ U

    # -- Problem interface (uncounted; instrumentation and full-space engines)
    def f(self, x) -> float:
        r = self.residual(np.asarray(x, dtype=float))
        return 0.5 * float(r @ r)

    def grad(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.jacobian(x).T @ self.residual(x)

    def gauss_newton(self, x) -> np.ndarray:
        J = self.jacobian(np.asarray(x, dtype=float))
        return J.T @ J

    def hess(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        J = self.jacobian(x)
        H = J.T @ J + self.residual_curvature(x, self.residual(x))
        return 0.5 * (H + H.T)


# --------------------------------------------------------------- builtins

class LinearLS(NlsProblem):
    """r(x) = A x - b."""

    def __init__(self, A, b, x0=None, name="linear_ls"):
        super().__init__()
        self.A = np.asarray(A, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.n, self.d = self.A.shape
        self.x0 = np.zeros(self.d) if x0 is None else np.asarray(x0, dtype=float)
        self.name = name
        xs = np.linalg.lstsq(self.A, self.b, rcond=None)[0]
        res = self.A @ xs - self.b
        self.f_star = 0.5 * float(res @ res)

    def residual(self, x):
        return self.A @ x - self.b

    def jacobian(self, x):
        return self.A

    def residual_curvature(self, x, w):
        return np.zeros((self.d, self.d))


def linear_ls(n: int = 12, d: int = 6, consistent: bool = True, seed: int = 0) -> LinearLS:
    g = rngmod.stream(seed, 101)
    A = g.standard_normal((n, d)) / math.sqrt(n)
    xbar = g.standard_normal(d)
    b = A @ xbar
    if not consistent:
        b = b + g.standard_normal(n)
    return LinearLS(A, b, name="linear_ls_consistent" if consistent else "linear_ls_inconsistent")


class ExtendedRosenbrock(NlsProblem):
    """Pairs r_{2i} = 10 (x_{2i+1} - x_{2i}^2), r_{2i+1} = 1 - x_{2i}."""

    def __init__(self, d: int = 10):
        super().__init__()
        if d < 2 or d % 2:
            raise InvalidConfig("extended Rosenbrock needs an even d >= 2")
        self.d = self.n = d
        self.x0 = np.tile([-1.2, 1.0], d // 2)
        self.name = "rosenbrock"
        self.f_star = 0.0

    def residual(self, x):
        r = np.empty(self.n)
        r[0::2] = 10.0 * (x[1::2] - x[0::2] ** 2)
        r[1::2] = 1.0 - x[0::2]
        return r

    def jacobian(self, x):
        J = np.zeros((self.n, self.d))
        i = np.arange(0, self.d, 2)
        J[i, i] = -20.0 * x[i]
        J[i, i + 1] = 10.0
        J[i + 1, i] = -1.0
        return J

    def residual_curvature(self, x, w):
        H = np.zeros((self.d, self.d))
        i = np.arange(0, self.d, 2)
        H[i, i] = -20.0 * w[i]
        return H


class BroydenTridiagonal(NlsProblem):
    """r_i = (3 - 2 x_i) x_i - x_{i-1} - 2 x_{i+1} + 1, x_0 = x_{d+1} = 0."""

    def __init__(self, d: int = 10):
        super().__init__()
        self.d = self.n = d
        self.x0 = -np.ones(d)
        self.name = "broyden_tridiagonal"
        self.f_star = 0.0

    def residual(self, x):
        xm = np.concatenate(([0.0], x[:-1]))
        xp = np.concatenate((x[1:], [0.0]))
        return (3.0 - 2.0 * x) * x - xm - 2.0 * xp + 1.0

    def jacobian(self, x):
        d = self.d
        J = np.diag(3.0 - 4.0 * x)
        J[np.arange(1, d), np.arange(d - 1)] = -1.0
        J[np.arange(d - 1), np.arange(1, d)] = -2.0
        return J

    def residual_curvature(self, x, w):
        return np.diag(-4.0 * np.asarray(w, dtype=float))


class PowellSingular(NlsProblem):
    """Blocks of four: x1 + 10 x2, sqrt5 (x3 - x4), (x2 - 2 x3)^2, sqrt10 (x1 - x4)^2."""

    def __init__(self, d: int = 8):
        super().__init__()
        if d < 4 or d % 4:
            raise InvalidConfig("Powell singular needs d divisible by 4")
        self.d = self.n = d
        self.x0 = np.tile([3.0, -1.0, 0.0, 1.0], d // 4)
        self.name = "powell_singular"
        self.f_star = 0.0

    def residual(self, x):
        a, b, c, e = x[0::4], x[1::4], x[2::4], x[3::4]
        r = np.empty(self.n)
        r[0::4] = a + 10.0 * b
        r[1::4] = math.sqrt(5.0) * (c - e)
        r[2::4] = (b - 2.0 * c) ** 2
        r[3::4] = math.sqrt(10.0) * (a - e) ** 2
        return r

    def jacobian(self, x):
        J = np.zeros((self.n, self.d))
        for k in range(0, self.d, 4):
            a, b, c, e = x[k:k + 4]
            J[k, k], J[k, k + 1] = 1.0, 10.0
            J[k + 1, k + 2], J[k + 1, k + 3] = math.sqrt(5.0), -math.sqrt(5.0)
            u = b - 2.0 * c
            J[k + 2, k + 1], J[k + 2, k + 2] = 2.0 * u, -4.0 * u
            v = a - e
            J[k + 3, k], J[k + 3, k + 3] = 2.0 * math.sqrt(10.0) * v, -2.0 * math.sqrt(10.0) * v
        return J

    def residual_curvature(self, x, w):
        H = np.zeros((self.d, self.d))
        u = np.array([0.0, 1.0, -2.0, 0.0])
        v = np.array([1.0, 0.0, 0.0, -1.0])
        for k in range(0, self.d, 4):
            blk = 2.0 * w[k + 2] * np.outer(u, u) + 2.0 * math.sqrt(10.0) * w[k + 3] * np.outer(v, v)
            H[k:k + 4, k:k + 4] += blk
        return H


class Trigonometric(NlsProblem):
    """r_i = d - sum_j cos x_j + i (1 - cos x_i) - sin x_i, i = 1..d."""

    def __init__(self, d: int = 10):
        super().__init__()
        self.d = self.n = d
        self.x0 = np.full(d, 1.0 / d)
        self.name = "trigonometric"
        self.f_star = 0.0
        self._i = np.arange(1, d + 1, dtype=float)

    def residual(self, x):
        return self.d - np.cos(x).sum() + self._i * (1.0 - np.cos(x)) - np.sin(x)

    def jacobian(self, x):
        J = np.tile(np.sin(x), (self.d, 1))
        J[np.diag_indices(self.d)] += self._i * np.sin(x) - np.cos(x)
        return J

    def residual_curvature(self, x, w):
        w = np.asarray(w, dtype=float)
        return np.diag(w.sum() * np.cos(x) + w * (self._i * np.cos(x) + np.sin(x)))


def _softplus(z):
    return np.logaddexp(0.0, z)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class SquaredLogistic(NlsProblem):
    """Residuals: logistic losses log(1 + exp(-y_j a_j^T x)), then sqrt(2 lam) x.

    f(x) = 1/2 sum_j loss_j^2 + lam ||x||^2.
    """

    def __init__(self, A, y, lam: float = 1e-2, name="logistic"):
        super().__init__()
        self.A = np.asarray(A, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.lam = float(lam)
        m, self.d = self.A.shape
        self.m = m
        self.n = m + self.d
        self.x0 = np.zeros(self.d)
        self.name = name
        self._c = math.sqrt(2.0 * self.lam)
        self.f_star = None

    def residual(self, x):
        z = self.y * (self.A @ x)
        return np.concatenate((_softplus(-z), self._c * x))

    def jacobian(self, x):
        z = self.y * (self.A @ x)
        coef = -self.y * _sigmoid(-z)
        return np.vstack((coef[:, None] * self.A, self._c * np.eye(self.d)))

    def residual_curvature(self, x, w):
        z = self.y * (self.A @ x)
        s = _sigmoid(z)
        coef = np.asarray(w, dtype=float)[: self.m] * s * (1.0 - s)
        return (self.A * coef[:, None]).T @ self.A


def logistic(m: int = 20, d: int = 6, lam: float = 1e-2, seed: int = 0) -> SquaredLogistic:
    """Two-class Gaussian blobs with unit separation along a random direction."""
    g = rngmod.stream(seed, 202)
    y = np.where(np.arange(m) % 2 == 0, 1.0, -1.0)
    mu = g.standard_normal(d)
    mu /= np.linalg.norm(mu)
    A = g.standard_normal((m, d)) + y[:, None] * mu[None, :]
    return SquaredLogistic(A, y, lam)


def builtin_problems(d: int = 8, seed: int = 0) -> list[NlsProblem]:
    """Desk-scale collection; ``d`` is rounded up to a multiple of 4."""
    d4 = 4 * max(1, -(-d // 4))
    return [
        linear_ls(2 * d4, d4, consistent=True, seed=seed),
        linear_ls(2 * d4, d4, consistent=False, seed=seed),
        ExtendedRosenbrock(d4),
        BroydenTridiagonal(d4),
        PowellSingular(d4),
        Trigonometric(d4),
        logistic(3 * d4, d4, seed=seed),
    ]


def problem_by_name(name: str, d: int = 8, seed: int = 0) -> Problem:
    name = name.strip().lower()
    table: dict[str, Callable[[], Problem]] = {
        "rosenbrock": lambda: ExtendedRosenbrock(d),
        "extended_rosenbrock": lambda: ExtendedRosenbrock(d),
        "broyden": lambda: BroydenTridiagonal(d),
        "broyden_tridiagonal": lambda: BroydenTridiagonal(d),
        "powell": lambda: PowellSingular(d),
        "powell_singular": lambda: PowellSingular(d),
        "trigonometric": lambda: Trigonometric(d),
        "linear": lambda: linear_ls(2 * d, d, True, seed),
        "linear_consistent": lambda: linear_ls(2 * d, d, True, seed),
        "linear_inconsistent": lambda: linear_ls(2 * d, d, False, seed),
        "logistic": lambda: logistic(3 * d, d, seed=seed),
        "quadratic": lambda: quadratic(d),
    }
    if name not in table:
        raise InvalidConfig(f"unknown problem {name!r}; choose from {sorted(table)}")
    return table[name]()


def check_point(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (d,) or not np.all(np.isfinite(x)):
        raise InvalidInput("point has wrong shape or non-finite entries")
    return x
