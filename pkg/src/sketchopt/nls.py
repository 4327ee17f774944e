"""Nonlinear least squares, the sketched Gauss-Newton model and a test suite.

The objective is ``f(x) = 0.5 ||r(x)||^2``. The sketched Gauss-Newton model
uses the reduced Jacobian ``J_S = J(x) S^T`` (``l`` Jacobian actions), with
``ghat = J_S^T r`` and ``bhat = J_S^T J_S``.

The suite holds classical least-squares test problems (Moré, Garbow and
Hillstrom, 1981; Lukšan and Vlček, 1999) with analytic Jacobians, each
available at a family of dimensions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from sketchopt.model import ReducedModel
from sketchopt.sketch import SketchKind, SketchMatrix
from sketchopt.solver import RunTrace, SolverConfig, run


class NlsError(ValueError):
    pass


@dataclass(frozen=True)
class NlsProblem:
    """A residual map ``r: R^d -> R^n`` with a dense analytic Jacobian.

    ``jacobian_action`` is the counted oracle; ``jacobian`` is there so that
    ``l`` actions can be formed in one product.
    """

    name: str
    d: int
    n: int
    residual: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    x0: np.ndarray
    zero_residual: bool = True
    f_star: float | None = None
    x_star: np.ndarray | None = field(default=None, repr=False)

    def value(self, x: np.ndarray) -> float:
        r = self.residual(x)
        return 0.5 * float(r @ r)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.jacobian(x).T @ self.residual(x)

    def jacobian_action(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        return self.jacobian(x) @ v

    def jacobian_actions(self, x: np.ndarray, V: np.ndarray) -> np.ndarray:
        """``J(x) V`` for a ``d x k`` block (``k`` actions)."""
        return self.jacobian(x) @ V

    def objective(self) -> LeastSquaresObjective:
        return LeastSquaresObjective(self)


@dataclass
class ActionCounter:
    count: int = 0

    def add(self, k: int) -> None:
        if k < 0:
            raise NlsError("action counts cannot decrease")
        self.count += int(k)


@dataclass(frozen=True)
class SketchedGnModel:
    js: np.ndarray
    r0: np.ndarray
    model: ReducedModel


def _gn_model(js, r0, S):
    f0 = 0.5 * float(r0 @ r0)
    return SketchedGnModel(js, r0, ReducedModel(f0, js.T @ r0, js.T @ js, S.gram()))


def _checked_residual(p, x):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise NlsError("x must be finite")
    r = np.asarray(p.residual(x), dtype=float)
    if not np.all(np.isfinite(r)):
        raise NlsError(f"{p.name}: residual is not finite at x")
    return x, r


def build_gn_model(p: NlsProblem, x: np.ndarray, S: SketchMatrix,
                   counter: ActionCounter) -> SketchedGnModel:
    """Sketched Gauss-Newton model at ``x``; charges ``l`` Jacobian actions."""
    x, r0 = _checked_residual(p, x)
    js = S.sketch_cols(p.jacobian(x))
    counter.add(S.spec.l)
    return _gn_model(js, r0, S)


def extend_gn_model(p: NlsProblem, x: np.ndarray, S: SketchMatrix, previous: SketchedGnModel,
                    S_prev: SketchMatrix, counter: ActionCounter) -> SketchedGnModel:
    """Model for a sampling sketch grown from ``S_prev``, reusing its columns.

    Only the newly sampled coordinates cost Jacobian actions. Other kinds are
    rebuilt from scratch.
    """
    if S.spec.kind is not SketchKind.SAMPLING or S_prev.spec.kind is not SketchKind.SAMPLING:
        return build_gn_model(p, x, S, counter)
    x, r0 = _checked_residual(p, x)
    d = S.spec.d
    scale = math.sqrt(d / S.spec.l)
    old = {int(c): previous.js[:, int(r)] / S_prev.vals[i]
           for i, (r, c) in enumerate(zip(S_prev.rows, S_prev.cols))}
    new_cols = [int(c) for c in S.cols if int(c) not in old]
    if new_cols:
        fresh = p.jacobian_actions(x, np.eye(d)[:, new_cols])
        old.update({c: fresh[:, i] for i, c in enumerate(new_cols)})
    counter.add(len(new_cols))
    js = np.empty((r0.shape[0], S.spec.l))
    for r, c in zip(S.rows, S.cols):
        js[:, int(r)] = scale * old[int(c)]
    return _gn_model(js, r0, S)


class LeastSquaresObjective:
    """Adapter exposing an :class:`NlsProblem` to the outer loop.

    Holds the per-run action counter. The monitoring gradient is not counted.
    """

    def __init__(self, problem: NlsProblem):
        self.problem = problem
        self.name = problem.name
        self.d = problem.d
        self.counter = ActionCounter()
        self.evaluations = 0
        self._last = None

    @property
    def actions(self) -> int:
        return self.counter.count

    def value(self, x):
        self.evaluations += 1
        with np.errstate(all="ignore"):
            r = self.problem.residual(x)
        return 0.5 * float(r @ r) if np.all(np.isfinite(r)) else math.nan

    def gradient(self, x):
        return self.problem.gradient(x)

    def reduced_model(self, x, S, fx, previous=None):
        if previous is None:
            gn = build_gn_model(self.problem, x, S, self.counter)
        else:
            S_prev, _ = previous
            gn = extend_gn_model(self.problem, x, S, self._last, S_prev, self.counter)
        self._last = gn
        return gn.model


def full_gn_reference(p: NlsProblem, x0: np.ndarray | None = None,
                      config: SolverConfig | None = None, seed: int | None = None) -> RunTrace:
    """Full-space Gauss-Newton with the outer loop of ``config`` (``d`` actions per iteration)."""
    config = replace(config or SolverConfig(), sketch=None, adaptive=None)
    return run(p, p.x0 if x0 is None else x0, config, seed=seed)


# --------------------------------------------------------------------- suite

def _grid(d):
    h = 1.0 / (d + 1)
    return h, h * np.arange(1, d + 1)


def broyden_tridiagonal(d: int) -> NlsProblem:
    def res(x):
        xp = np.concatenate([[0.0], x, [0.0]])
        return (3.0 - 2.0 * x) * x - xp[:-2] - 2.0 * xp[2:] + 1.0

    def jac(x):
        return (np.diag(3.0 - 4.0 * x) - np.eye(d, k=-1) - 2.0 * np.eye(d, k=1))

    return NlsProblem("broyden_tridiagonal", d, d, res, jac, -np.ones(d))


def broyden_banded(d: int, ml: int = 5, mu: int = 1) -> NlsProblem:
    idx = np.arange(d)
    band = (np.abs(idx[:, None] - idx[None, :]) > 0) & (idx[None, :] >= idx[:, None] - ml) \
        & (idx[None, :] <= idx[:, None] + mu)
    band = band.astype(float)

    def res(x):
        return x * (2.0 + 5.0 * x**2) + 1.0 - band @ (x * (1.0 + x))

    def jac(x):
        return np.diag(2.0 + 15.0 * x**2) - band * (1.0 + 2.0 * x)[None, :]

    return NlsProblem("broyden_banded", d, d, res, jac, -np.ones(d))


def extended_rosenbrock(d: int) -> NlsProblem:
    if d % 2:
        raise NlsError("extended_rosenbrock needs an even dimension")

    def res(x):
        r = np.empty(d)
        r[0::2] = 10.0 * (x[1::2] - x[0::2] ** 2)
        r[1::2] = 1.0 - x[0::2]
        return r

    def jac(x):
        J = np.zeros((d, d))
        i = np.arange(0, d, 2)
        J[i, i] = -20.0 * x[0::2]
        J[i, i + 1] = 10.0
        J[i + 1, i] = -1.0
        return J

    x0 = np.tile([-1.2, 1.0], d // 2)
    return NlsProblem("extended_rosenbrock", d, d, res, jac, x0, x_star=np.ones(d))


def discrete_bvp(d: int) -> NlsProblem:
    h, t = _grid(d)

    def res(x):
        xp = np.concatenate([[0.0], x, [0.0]])
        return 2.0 * x - xp[:-2] - xp[2:] + 0.5 * h**2 * (x + t + 1.0) ** 3

    def jac(x):
        return (np.diag(2.0 + 1.5 * h**2 * (x + t + 1.0) ** 2)
                - np.eye(d, k=-1) - np.eye(d, k=1))

    return NlsProblem("discrete_bvp", d, d, res, jac, t * (t - 1.0))


def discrete_integral(d: int) -> NlsProblem:
    h, t = _grid(d)
    lower = np.tril(np.ones((d, d)))
    # K[i, j] = (1 - t_i) t_j for j <= i, t_i (1 - t_j) for j > i
    K = np.where(lower > 0, np.outer(1.0 - t, t), np.outer(t, 1.0 - t))

    def res(x):
        return x + 0.5 * h * (K @ (x + t + 1.0) ** 3)

    def jac(x):
        return np.eye(d) + 1.5 * h * K * ((x + t + 1.0) ** 2)[None, :]

    return NlsProblem("discrete_integral", d, d, res, jac, t * (t - 1.0))


def trigonometric(d: int) -> NlsProblem:
    i = np.arange(1, d + 1)

    def res(x):
        return d - np.sum(np.cos(x)) + i * (1.0 - np.cos(x)) - np.sin(x)

    def jac(x):
        return np.tile(np.sin(x), (d, 1)) + np.diag(i * np.sin(x) - np.cos(x))

    return NlsProblem("trigonometric", d, d, res, jac, np.full(d, 1.0 / d))


def bratu2d(d: int, lam: float = 4.0) -> NlsProblem:
    """Five-point discretisation of ``-Laplace(u) = lam exp(u)`` on the unit square."""
    m = math.isqrt(d)
    if m * m != d:
        raise NlsError("bratu2d needs a square dimension")
    h = 1.0 / (m + 1)
    t = 2.0 * np.eye(m) - np.eye(m, k=1) - np.eye(m, k=-1)
    lap = np.kron(np.eye(m), t) + np.kron(t, np.eye(m))

    def res(x):
        return lap @ x - h**2 * lam * np.exp(x)

    def jac(x):
        return lap - np.diag(h**2 * lam * np.exp(x))

    return NlsProblem("bratu2d", d, d, res, jac, np.zeros(d))


def oscillatory_gradient(d: int, rho: float = 500.0) -> NlsProblem:
    """Gradient system of the oscillatory Rosenbrock-Chebyshev function.

    ``phi(x) = (x_1 - 1)^2 / 4 + rho sum (x_{i+1} - 2 x_i^2 + 1)^2`` has its
    minimiser at the ones vector; the residual is ``grad phi``.
    """
    if d < 2:
        raise NlsError("oscillatory_gradient needs d >= 2")

    def res(x):
        u = x[1:] - 2.0 * x[:-1] ** 2 + 1.0
        r = np.zeros(d)
        r[0] = 0.5 * (x[0] - 1.0)
        r[:-1] -= 8.0 * rho * x[:-1] * u
        r[1:] += 2.0 * rho * u
        return r

    def jac(x):
        u = x[1:] - 2.0 * x[:-1] ** 2 + 1.0
        J = np.zeros((d, d))
        J[0, 0] = 0.5
        k = np.arange(d - 1)
        J[k, k] += -8.0 * rho * u + 32.0 * rho * x[:-1] ** 2
        J[k, k + 1] += -8.0 * rho * x[:-1]
        J[k + 1, k] += -8.0 * rho * x[:-1]
        J[k + 1, k + 1] += 2.0 * rho
        return J

    x0 = np.ones(d)
    x0[0] = -2.0
    return NlsProblem("oscillatory_gradient", d, d, res, jac, x0, x_star=np.ones(d))


def powell_singular(d: int) -> NlsProblem:
    if d % 4:
        raise NlsError("powell_singular needs a dimension divisible by 4")
    s5, s10 = math.sqrt(5.0), math.sqrt(10.0)

    def res(x):
        a, b, c, e = x[0::4], x[1::4], x[2::4], x[3::4]
        r = np.empty(d)
        r[0::4] = a + 10.0 * b
        r[1::4] = s5 * (c - e)
        r[2::4] = (b - 2.0 * c) ** 2
        r[3::4] = s10 * (a - e) ** 2
        return r

    def jac(x):
        J = np.zeros((d, d))
        i = np.arange(0, d, 4)
        a, b, c, e = x[0::4], x[1::4], x[2::4], x[3::4]
        J[i, i], J[i, i + 1] = 1.0, 10.0
        J[i + 1, i + 2], J[i + 1, i + 3] = s5, -s5
        J[i + 2, i + 1] = 2.0 * (b - 2.0 * c)
        J[i + 2, i + 2] = -4.0 * (b - 2.0 * c)
        J[i + 3, i] = 2.0 * s10 * (a - e)
        J[i + 3, i + 3] = -2.0 * s10 * (a - e)
        return J

    x0 = np.tile([3.0, -1.0, 0.0, 1.0], d // 4)
    return NlsProblem("powell_singular", d, d, res, jac, x0, x_star=np.zeros(d))


def brown_almost_linear(d: int) -> NlsProblem:
    def res(x):
        r = x + np.sum(x) - (d + 1.0)
        r[-1] = np.prod(x) - 1.0
        return r

    def jac(x):
        J = np.eye(d) + np.ones((d, d))
        # product rule without dividing by x_j
        before = np.concatenate([[1.0], np.cumprod(x[:-1])])
        after = np.concatenate([np.cumprod(x[::-1][:-1])[::-1], [1.0]])
        J[-1] = before * after
        return J

    return NlsProblem("brown_almost_linear", d, d, res, jac, np.full(d, 0.5), x_star=np.ones(d))


def penalty1(d: int, a: float = 1e-5) -> NlsProblem:
    sa = math.sqrt(a)

    def res(x):
        return np.concatenate([sa * (x - 1.0), [x @ x - 0.25]])

    def jac(x):
        return np.vstack([sa * np.eye(d), 2.0 * x[None, :]])

    return NlsProblem("penalty1", d, d + 1, res, jac, np.arange(1.0, d + 1), zero_residual=False)


def linear_full_rank(d: int) -> NlsProblem:
    m = 2 * d
    A = np.vstack([np.eye(d), np.zeros((d, d))]) - 2.0 / m

    def res(x):
        return A @ x - 1.0

    def jac(x):
        return A.copy()

    return NlsProblem("linear_full_rank", d, m, res, jac, np.ones(d), zero_residual=False,
                      f_star=0.5 * (m - d), x_star=-np.ones(d))


_SUITE: dict[str, Callable[[int], NlsProblem]] = {
    "broyden_tridiagonal": broyden_tridiagonal,
    "broyden_banded": broyden_banded,
    "extended_rosenbrock": extended_rosenbrock,
    "discrete_bvp": discrete_bvp,
    "discrete_integral": discrete_integral,
    "trigonometric": trigonometric,
    "bratu2d": bratu2d,
    "oscillatory_gradient": oscillatory_gradient,
    "powell_singular": powell_singular,
    "brown_almost_linear": brown_almost_linear,
    "penalty1": penalty1,
    "linear_full_rank": linear_full_rank,
}


def problem_names() -> list[str]:
    return list(_SUITE)


def get_problem(name: str, d: int) -> NlsProblem:
    """Look a problem up by name; raises :class:`NlsError` for unknown names or dimensions."""
    try:
        factory = _SUITE[name]
    except KeyError:
        raise NlsError(f"unknown problem {name!r}; known: {', '.join(_SUITE)}") from None
    if d < 2:
        raise NlsError("dimension must be at least 2")
    return factory(d)


def admissible_dimension(name: str, d: int) -> int:
    """Closest dimension ``>= d`` that problem ``name`` accepts."""
    if name == "bratu2d":
        root = math.isqrt(d)
        return d if root * root == d else (root + 1) ** 2
    if name == "extended_rosenbrock":
        return d + d % 2
    if name == "powell_singular":
        return d + (-d) % 4
    return d


def problem_suite(d: int = 100, zero_residual_only: bool = False) -> list[NlsProblem]:
    """All suite problems at (or just above) dimension ``d``."""
    out = [get_problem(name, admissible_dimension(name, d)) for name in _SUITE]
    return [p for p in out if p.zero_residual or not zero_residual_only]


def finite_difference_check(p: NlsProblem, x: np.ndarray, h: float = 1e-6,
                            rng: np.random.Generator | None = None) -> float:
    """Relative error between a central difference of ``r`` and ``J v`` along a random ``v``."""
    rng = rng or np.random.default_rng(0)
    v = rng.standard_normal(p.d)
    v /= np.linalg.norm(v)
    fd = (p.residual(x + h * v) - p.residual(x - h * v)) / (2.0 * h)
    jv = p.jacobian_action(x, v)
    return float(np.linalg.norm(fd - jv) / max(1.0, np.linalg.norm(jv)))


__all__ = [
    "ActionCounter", "LeastSquaresObjective", "NlsError", "NlsProblem", "SketchedGnModel",
    "build_gn_model", "extend_gn_model", "finite_difference_check", "full_gn_reference",
    "get_problem", "problem_names", "problem_suite",
]
