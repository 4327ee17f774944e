"""Complexity-bound calculator and Monte Carlo checks of the probabilistic assumptions.

With ``delta_S`` the probability that an iteration is not true and ``delta_1``
a free parameter,

    g = 1 / [(1 - delta_S)(1 - delta_1) - 1 + c / (c + 1)^2]

and the method reaches ``||grad f|| <= eps`` within

    N = ceil(g [(f0 - f*) / h + tau_alpha / (1 + c)])

iterations with probability at least ``1 - exp(-delta_1^2 (1 - delta_S) N / 2)``.
``h`` is the guaranteed decrease on true successful iterations once ``alpha``
has fallen to ``alpha0 gamma1^(c + tau_alpha)``; its form depends on whether
the step comes from quadratic regularisation or a trust region.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy import stats

from sketchopt.model import C7
from sketchopt.sketch import make_rng


class BoundInapplicable(ValueError):
    """The bound's hypotheses fail (for instance ``delta_S >= c / (c + 1)^2``)."""


@dataclass(frozen=True)
class ComplexityInputs:
    """Constants entering the iteration bound.

    ``L`` is a Lipschitz constant of the gradient (a user estimate in practice)
    and ``B_max`` bounds ``||B_k||``. ``tau_alpha`` and ``h_value`` are derived
    from the other fields unless given explicitly.
    """

    eps: float
    L: float
    B_max: float
    s_max: float
    eps_s: float
    theta: float = 0.5
    gamma1: float = 0.5
    c: int = 1
    alpha0: float = 50.0
    alpha_max: float = 100.0
    kappa_T: float = 0.01
    c7: float = C7
    delta_s: float | None = None
    delta_1: float | None = None
    f0_minus_fstar: float | None = None
    tau_alpha: int | None = None
    h_value: float | None = None
    variant: str = "quad_reg"

    def __post_init__(self):
        for name in ("eps", "s_max", "alpha0", "alpha_max", "c7"):
            if not getattr(self, name) > 0:
                raise BoundInapplicable(f"{name} must be positive")
        for name in ("L", "B_max", "kappa_T"):
            if getattr(self, name) < 0:
                raise BoundInapplicable(f"{name} must be non-negative")
        if not 0.0 < self.theta < 1.0:
            raise BoundInapplicable("theta must lie in (0, 1)")
        if not 0.0 < self.gamma1 < 1.0:
            raise BoundInapplicable("gamma1 must lie in (0, 1)")
        if not 0.0 <= self.eps_s < 1.0:
            raise BoundInapplicable("eps_s must lie in [0, 1)")
        if self.c < 1 or int(self.c) != self.c:
            raise BoundInapplicable("c must be a positive integer")
        if self.alpha0 > self.alpha_max:
            raise BoundInapplicable("alpha0 must not exceed alpha_max")
        if self.variant not in ("quad_reg", "trust_region"):
            raise BoundInapplicable(f"unknown variant {self.variant!r}")

    @property
    def gamma2(self) -> float:
        return self.gamma1 ** (-self.c)


def qr_alpha_low(inp: ComplexityInputs) -> float:
    """Step parameter below which a true quadratic-regularisation iteration succeeds."""
    return (1.0 - inp.theta) / (inp.L + inp.B_max)


def _tr_min(inp):
    first = inp.c7 * (1.0 - inp.theta) / ((inp.L + 0.5 * inp.B_max) * inp.s_max**2)
    return min(first, 1.0 / inp.B_max) if inp.B_max > 0 else first


def tr_alpha_low(inp: ComplexityInputs) -> float:
    """Radius below which a true trust-region iteration succeeds."""
    return math.sqrt(1.0 - inp.eps_s) * inp.eps * _tr_min(inp)


def alpha_low(inp: ComplexityInputs) -> float:
    return qr_alpha_low(inp) if inp.variant == "quad_reg" else tr_alpha_low(inp)


def _ceil(v: float, rtol: float = 1e-13) -> int:
    # ceiling that absorbs a few ulps of rounding above an integer
    r = round(v)
    return int(r) if abs(v - r) <= rtol * max(1.0, abs(v)) else math.ceil(v)


def tau_alpha(alpha_low_value: float, alpha0: float, gamma1: float, c: int) -> int:
    """``ceil(log_gamma1(min(alpha_low / alpha0, gamma1^c)))``.

    Values within ``1e-13`` (relative) of an integer are rounded first, so that
    ``min = gamma1^c`` gives exactly ``c``.
    """
    if not alpha_low_value > 0:
        raise BoundInapplicable("alpha_low must be positive")
    return _ceil(math.log(min(alpha_low_value / alpha0, gamma1**c)) / math.log(gamma1))


def resolved_tau(inp: ComplexityInputs) -> int:
    if inp.tau_alpha is not None:
        return inp.tau_alpha
    return tau_alpha(alpha_low(inp), inp.alpha0, inp.gamma1, inp.c)


def qr_h(inp: ComplexityInputs) -> float:
    """Decrease guaranteed by a true successful quadratic-regularisation iteration.

    ``theta (1 - eps_S) eps^2 / (2 alpha_max (S_max (B_max + 1 / alpha) + kappa_T)^2)``
    evaluated at ``alpha = alpha0 gamma1^(c + tau_alpha)``.
    """
    tau = resolved_tau(replace(inp, variant="quad_reg"))
    a = inp.alpha0 * inp.gamma1 ** (inp.c + tau)
    denom = 2.0 * inp.alpha_max * (inp.s_max * (inp.B_max + 1.0 / a) + inp.kappa_T) ** 2
    return inp.theta * (1.0 - inp.eps_s) * inp.eps**2 / denom


def tr_h(inp: ComplexityInputs, exact: bool = False) -> float:
    """Decrease guaranteed by a true successful trust-region iteration.

    By default returns the closed lower bound
    ``theta C7 (1 - eps_S) eps^2 gamma1^(c+1) min(m, alpha0 / ((1 - eps_S)^(1/2) eps gamma2))``
    with ``m = min(C7 (1 - theta) / ((L + B_max / 2) S_max^2), 1 / B_max)``, which
    does not involve ``tau_alpha``. With ``exact=True`` it evaluates
    ``theta C7 min((1 - eps_S)^(1/2) eps alpha, (1 - eps_S) eps^2 / B_max)`` at
    ``alpha = alpha0 gamma1^(c + tau_alpha)``.
    """
    e2 = (1.0 - inp.eps_s) * inp.eps**2
    if exact:
        tau = resolved_tau(replace(inp, variant="trust_region"))
        a = inp.alpha0 * inp.gamma1 ** (inp.c + tau)
        radius_term = math.sqrt(1.0 - inp.eps_s) * inp.eps * a
        curv_term = e2 / inp.B_max if inp.B_max > 0 else math.inf
        return inp.theta * inp.c7 * min(radius_term, curv_term)
    cap = inp.alpha0 / (math.sqrt(1.0 - inp.eps_s) * inp.eps * inp.gamma2)
    return inp.theta * inp.c7 * e2 * inp.gamma1 ** (inp.c + 1) * min(_tr_min(inp), cap)


def g_factor(delta_s: float, delta_1: float, c: int) -> float:
    """``1 / [(1 - delta_S)(1 - delta_1) - 1 + c / (c + 1)^2]``.

    Raises:
      BoundInapplicable: if ``delta_S >= c / (c + 1)^2`` or the bracket is not positive.
    """
    limit = c / (c + 1) ** 2
    if not 0.0 <= delta_s < limit:
        raise BoundInapplicable(
            f"delta_S = {delta_s:g} violates delta_S < c/(c+1)^2 = {limit:g}")
    if not 0.0 < delta_1 < 1.0:
        raise BoundInapplicable("delta_1 must lie in (0, 1)")
    bracket = (1.0 - delta_s) * (1.0 - delta_1) - 1.0 + limit
    if bracket <= 0.0:
        raise BoundInapplicable(
            f"g(delta_S, delta_1) is not positive for delta_S={delta_s:g}, delta_1={delta_1:g}")
    return 1.0 / bracket


@dataclass(frozen=True)
class BoundReport:
    """Iteration bound with the derived quantities behind it.

    ``n_real`` is the unrounded right-hand side, ``n`` its ceiling. ``d1, d2, d3``
    give ``n_real = d1 / h + d2`` and ``failure_probability = exp(-d3 n)``;
    ``expectation_bound`` is ``n_real + exp(-d3 n_real) / d3``.
    """

    n: int
    n_real: float
    failure_probability: float
    g: float
    h: float
    tau_alpha: int
    alpha_low: float
    alpha_min: float
    d1: float
    d2: float
    d3: float
    expectation_bound: float
    variant: str

    def to_dict(self) -> dict:
        return asdict(self)


def iteration_bound(inp: ComplexityInputs) -> BoundReport:
    """Evaluate the high-probability iteration bound.

    Requires ``delta_s``, ``delta_1`` and ``f0_minus_fstar``. ``h_value`` may be
    ``inf``, in which case only the ``tau_alpha`` term remains.

    Raises:
      BoundInapplicable: with the failed hypothesis in the message.
    """
    if inp.delta_s is None or inp.delta_1 is None or inp.f0_minus_fstar is None:
        raise BoundInapplicable("delta_s, delta_1 and f0_minus_fstar are required")
    if inp.f0_minus_fstar < 0:
        raise BoundInapplicable("f0 - f* must be non-negative")
    g = g_factor(inp.delta_s, inp.delta_1, inp.c)
    a_low = alpha_low(inp)
    tau = resolved_tau(inp)
    if inp.h_value is not None:
        h = inp.h_value
    else:
        h = qr_h(inp) if inp.variant == "quad_reg" else tr_h(inp)
    if not h > 0:
        raise BoundInapplicable("h must be positive")
    d1 = g * inp.f0_minus_fstar
    d2 = g * tau / (1.0 + inp.c)
    d3 = 0.5 * inp.delta_1**2 * (1.0 - inp.delta_s)
    n_real = d1 / h + d2
    n = _ceil(n_real)
    return BoundReport(
        n=n, n_real=n_real, failure_probability=math.exp(-d3 * n), g=g, h=h, tau_alpha=tau,
        alpha_low=a_low, alpha_min=inp.alpha0 * inp.gamma1**tau, d1=d1, d2=d2, d3=d3,
        expectation_bound=n_real + math.exp(-d3 * n_real) / d3 if d3 > 0 else math.inf,
        variant=inp.variant)


@dataclass(frozen=True)
class ChernoffResult:
    empirical: float
    bound: float
    exact: float
    sigma: float
    trials: int

    @property
    def within_bound(self) -> bool:
        """Empirical rate no larger than the bound plus three binomial standard deviations."""
        return self.empirical <= self.bound + 3.0 * self.sigma


def chernoff_bound(delta_s: float, delta_1: float, N: int) -> float:
    return math.exp(-0.5 * delta_1**2 * (1.0 - delta_s) * N)


def verify_chernoff(delta_s: float, delta_1: float, N: int, trials: int,
                    rng: np.random.Generator | int | None = None,
                    block: int = 10_000) -> ChernoffResult:
    """Simulate ``trials`` chains of ``N`` i.i.d. true/false iterations.

    Each iteration is true with probability ``1 - delta_S``. Returns the
    empirical probability that at most ``(1 - delta_S)(1 - delta_1) N``
    iterations are true, next to the exponential bound and the exact binomial
    tail.
    """
    if not 0.0 <= delta_s < 1.0 or not 0.0 <= delta_1 < 1.0 or N < 1 or trials < 1:
        raise ValueError("need delta_s, delta_1 in [0, 1), N >= 1 and trials >= 1")
    rng = make_rng(rng)
    threshold = (1.0 - delta_s) * (1.0 - delta_1) * N
    hits = 0
    for start in range(0, trials, block):
        rows = min(block, trials - start)
        n_true = (rng.random((rows, N)) >= delta_s).sum(axis=1)
        hits += int(np.count_nonzero(n_true <= threshold))
    bound = chernoff_bound(delta_s, delta_1, N)
    p = min(bound, 1.0)
    exact = float(stats.binom.cdf(math.floor(threshold + 1e-12), N, 1.0 - delta_s))
    return ChernoffResult(hits / trials, bound, exact, math.sqrt(p * (1.0 - p) / trials), trials)


def estimate_lipschitz(points: np.ndarray, grads: np.ndarray) -> float:
    """Largest ``||g_i - g_j|| / ||x_i - x_j||`` over pairs of distinct points (heuristic)."""
    points = np.asarray(points, dtype=float)
    grads = np.asarray(grads, dtype=float)
    best = 0.0
    for i in range(len(points)):
        dx = np.linalg.norm(points[i + 1:] - points[i], axis=1)
        dg = np.linalg.norm(grads[i + 1:] - grads[i], axis=1)
        mask = dx > 0
        if np.any(mask):
            best = max(best, float(np.max(dg[mask] / dx[mask])))
    return best


def observed_n_eps(trace, eps: float) -> int | None:
    """First iteration index whose monitored gradient norm is at most ``eps``."""
    for rec in trace.records:
        if rec.grad_norm is not None and rec.grad_norm <= eps:
            return rec.k
    if trace.termination == "grad_tol":
        return len(trace.records)
    return None
