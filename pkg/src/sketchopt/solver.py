"""Outer iteration of the random-subspace methods.

Each iteration draws a sketch, builds the reduced model through the objective,
computes a quadratic-regularisation or trust-region step, applies the
sufficient-decrease test and updates the step parameter ``alpha``.

``alpha`` is stored as an exponent ``m`` with ``alpha = alpha_max * gamma1**m``:
success maps ``m -> max(m - c, 0)`` (that is ``min(alpha_max, gamma2 * alpha)``)
and failure maps ``m -> m + 1``, so every ``alpha_k`` sits exactly on the lattice.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Protocol

import numpy as np

from sketchopt.model import ReducedModel, StepResult, eval_model, solve_qr_step, solve_tr_step
from sketchopt.sketch import SketchKind, SketchMatrix, SketchSpec, apply, draw, grow, make_rng

logger = logging.getLogger(__name__)


class Variant(str, Enum):
    QUAD_REG = "quad_reg"
    TRUST_REGION = "trust_region"


class SolverError(ValueError):
    pass


@dataclass(frozen=True)
class AdaptiveConfig:
    """Subspace growth: add ``l_increment`` rows until ``m(s) <= kappa * m(0)``."""

    kappa: float = 0.9
    l_increment: int = 1

    def __post_init__(self):
        if not 0.0 < self.kappa < 1.0:
            raise SolverError("adaptive kappa must lie in (0, 1)")
        if self.l_increment < 1:
            raise SolverError("l_increment must be positive")


@dataclass(frozen=True)
class SolverConfig:
    """Algorithm constants and stopping rules.

    ``sketch=None`` means the full-space (identity) model. ``action_budget=None``
    resolves to ``budget_multiplier * d``. ``true_eps_s``/``true_s_max`` switch
    on the diagnostic true-iteration flag, which needs the full gradient.
    """

    sketch: SketchSpec | None = None
    variant: Variant = Variant.TRUST_REGION
    gamma1: float = 0.5
    c: int = 1
    p: int = 1
    theta: float = 1e-4
    alpha_max: float = 100.0
    kappa_T: float = 0.01
    tr_method: str = "cauchy"
    adaptive: AdaptiveConfig | None = None
    grad_tol: float = 0.0
    max_iters: int = 100_000
    action_budget: int | None = None
    budget_multiplier: float = 50.0
    true_eps_s: float | None = None
    true_s_max: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if not 0.0 < self.gamma1 < 1.0:
            raise SolverError("gamma1 must lie in (0, 1)")
        if not 0.0 < self.theta < 1.0:
            raise SolverError("theta must lie in (0, 1)")
        if int(self.c) != self.c or self.c < 1 or int(self.p) != self.p or self.p < 1:
            raise SolverError("c and p must be positive integers")
        if not self.alpha_max > 0:
            raise SolverError("alpha_max must be positive")
        if self.kappa_T < 0:
            raise SolverError("kappa_T must be non-negative")
        if self.action_budget is not None and self.action_budget <= 0:
            raise SolverError("action budget must be positive")

    @property
    def gamma2(self) -> float:
        return self.gamma1 ** (-self.c)

    @property
    def alpha0(self) -> float:
        return self.alpha_max * self.gamma1**self.p

    def budget_for(self, d: int) -> float:
        if self.action_budget is not None:
            return self.action_budget
        return self.budget_multiplier * d

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["variant"] = self.variant.value
        out["sketch"] = self.sketch.to_dict() if self.sketch is not None else None
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> SolverConfig:
        data = dict(data)
        if data.get("sketch") is not None:
            data["sketch"] = SketchSpec.from_dict(data["sketch"])
        if data.get("adaptive") is not None:
            data["adaptive"] = AdaptiveConfig(**data["adaptive"])
        return cls(**data)


class Objective(Protocol):
    """What the outer loop needs from a problem.

    ``actions`` counts the derivative actions spent building reduced models;
    ``gradient`` is only used for monitoring and is not counted.
    """

    d: int
    actions: int

    def value(self, x: np.ndarray) -> float: ...

    def gradient(self, x: np.ndarray) -> np.ndarray | None: ...

    def reduced_model(self, x: np.ndarray, S: SketchMatrix, fx: float,
                      previous: Any = None) -> ReducedModel: ...


class SmoothObjective:
    """Generic objective from ``f``, its gradient and an optional PSD ``B(x)``.

    Each model build costs ``l`` actions (the sketched gradient).
    """

    def __init__(self, fun, grad, d: int, hess=None):
        self.fun, self.grad, self.hess, self.d = fun, grad, hess, d
        self.actions = 0
        self.evaluations = 0

    def value(self, x):
        self.evaluations += 1
        return float(self.fun(x))

    def gradient(self, x):
        return np.asarray(self.grad(x), dtype=float)

    def reduced_model(self, x, S, fx, previous=None):
        g = self.gradient(x)
        self.actions += model_cost(S, previous)
        if self.hess is None:
            bhat = np.zeros((S.spec.l, S.spec.l))
        else:
            sb = S.sketch_rows(np.asarray(self.hess(x), dtype=float))
            bhat = S.sketch_cols(sb)
            bhat = 0.5 * (bhat + bhat.T)
        return ReducedModel(fx, apply(S, g), bhat, S.gram())


@dataclass(frozen=True)
class IterationRecord:
    k: int
    f_before: float
    f_after: float
    f_trial: float | None
    alpha: float
    l: int
    successful: bool
    true_iter: bool | None
    model_decrease: float
    actions_used: int
    grad_norm: float | None = None
    step_norm: float = 0.0


@dataclass
class RunTrace:
    config: dict
    records: list[IterationRecord]
    x0: np.ndarray
    x_final: np.ndarray
    f0: float
    termination: str
    seed: int | None = None
    problem: str | None = None
    d: int = 0
    evaluations: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def f_final(self) -> float:
        return self.records[-1].f_after if self.records else self.f0

    @property
    def actions(self) -> int:
        return self.records[-1].actions_used if self.records else 0

    def f_values(self) -> np.ndarray:
        """Objective after each iteration, preceded by ``f(x0)``."""
        return np.array([self.f0] + [r.f_after for r in self.records])


def model_cost(S: SketchMatrix, previous: Any = None) -> int:
    """Derivative actions charged for a model on ``S``.

    ``previous`` is the ``(sketch, model)`` pair being grown. A grown sampling
    sketch reuses the columns it already had, so only the new rows are charged.
    """
    if previous is not None and S.spec.kind is SketchKind.SAMPLING:
        return S.spec.l - previous[0].spec.l
    return S.spec.l


def next_alpha(alpha: float, successful: bool, gamma1: float, c: int, alpha_max: float) -> float:
    """Step-parameter update: ``min(alpha_max, gamma1**-c * alpha)`` or ``gamma1 * alpha``."""
    return min(alpha_max, alpha * gamma1 ** (-c)) if successful else gamma1 * alpha


def classify_true(full_grad: np.ndarray, S: SketchMatrix, eps_s: float, s_max: float) -> bool:
    """Whether ``S`` embeds ``full_grad`` within ``eps_s`` and has ``||S|| <= s_max``."""
    g = np.asarray(full_grad, dtype=float)
    sg = apply(S, g)
    return bool(sg @ sg >= (1.0 - eps_s) * (g @ g) and S.norm() <= s_max)


def _as_objective(problem) -> Objective:
    if hasattr(problem, "reduced_model"):
        return problem
    if hasattr(problem, "objective"):
        return problem.objective()
    raise SolverError(f"cannot build an objective from {type(problem).__name__}")


def _sketch_spec(config: SolverConfig, d: int) -> SketchSpec:
    if config.sketch is None:
        return SketchSpec(SketchKind.IDENTITY, d, d)
    if config.sketch.d != d:
        raise SolverError(f"sketch is for d={config.sketch.d} but the problem has d={d}")
    return config.sketch


def _step(config: SolverConfig, model: ReducedModel, alpha: float, S: SketchMatrix) -> StepResult:
    if config.variant is Variant.QUAD_REG:
        return solve_qr_step(model, alpha, config.kappa_T, S)
    return solve_tr_step(model, alpha, S, config.tr_method)


class _Loop:
    """Shared state of one run; ``iterate`` applies the acceptance test and alpha update."""

    def __init__(self, problem, x0, config: SolverConfig, rng, seed):
        self.obj = _as_objective(problem)
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (self.obj.d,):
            raise SolverError(f"x0 has shape {x0.shape}, expected ({self.obj.d},)")
        if not np.all(np.isfinite(x0)):
            raise SolverError("x0 must be finite")
        self.config = config
        self.spec = _sketch_spec(config, self.obj.d)
        self.rng = make_rng(seed) if rng is None else rng
        self.seed = seed
        self.x0 = x0.copy()
        self.x = x0.copy()
        self.fx = self.obj.value(self.x)
        if not math.isfinite(self.fx):
            raise SolverError("objective is not finite at x0")
        self.f0 = self.fx
        self.exponent = config.p
        self.budget = config.budget_for(self.obj.d)
        self.records: list[IterationRecord] = []
        self._grad = None
        self._refresh_gradient()

    @property
    def alpha(self) -> float:
        return self.config.alpha_max * self.config.gamma1**self.exponent

    def _refresh_gradient(self):
        self._grad = self.obj.gradient(self.x)
        self.grad_norm = None if self._grad is None else float(np.linalg.norm(self._grad))

    def converged(self) -> bool:
        tol = self.config.grad_tol
        return tol > 0 and self.grad_norm is not None and self.grad_norm <= tol

    def affordable(self, l: int) -> bool:
        return self.obj.actions + l <= self.budget

    def true_flag(self, S: SketchMatrix) -> bool | None:
        c = self.config
        if c.true_eps_s is None or c.true_s_max is None or self._grad is None:
            return None
        return classify_true(self._grad, S, c.true_eps_s, c.true_s_max)

    def iterate(self, S: SketchMatrix, model: ReducedModel, step: StepResult) -> IterationRecord:
        c = self.config
        alpha = self.alpha
        decrease = step.model_decrease
        trial = self.x + step.s_full
        with np.errstate(all="ignore"):
            try:
                f_trial = self.obj.value(trial)
            except (FloatingPointError, OverflowError, ValueError):
                f_trial = math.nan
        ok = decrease > 0.0 and math.isfinite(f_trial) and self.fx - f_trial >= c.theta * decrease
        f_before = self.fx
        true_iter = self.true_flag(S)
        if ok:
            self.x, self.fx = trial, f_trial
            self.exponent = max(self.exponent - c.c, 0)
        else:
            self.exponent += 1
        record = IterationRecord(
            k=len(self.records), f_before=f_before, f_after=self.fx,
            f_trial=f_trial if math.isfinite(f_trial) else None, alpha=alpha, l=S.spec.l,
            successful=bool(ok), true_iter=true_iter, model_decrease=decrease,
            actions_used=int(self.obj.actions), grad_norm=self.grad_norm,
            step_norm=float(np.linalg.norm(step.s_full)))
        self.records.append(record)
        if ok:
            self._refresh_gradient()
        return record

    def trace(self, termination: str, **meta) -> RunTrace:
        return RunTrace(
            config=self.config.to_dict(), records=self.records, x0=self.x0, x_final=self.x.copy(),
            f0=self.f0, termination=termination, seed=self.seed,
            problem=getattr(self.obj, "name", None), d=self.obj.d,
            evaluations=int(getattr(self.obj, "evaluations", 0)), meta=meta)


def run(problem, x0, config: SolverConfig, rng: np.random.Generator | None = None,
        seed: int | None = None) -> RunTrace:
    """Run the fixed-dimension random-subspace method.

    Args:
      problem: an :class:`Objective`, or anything with an ``objective()`` method
        returning one (e.g. :class:`sketchopt.nls.NlsProblem`).
      x0: finite starting point.
      config: algorithm constants, sketch and stopping rules.
      rng: generator for the sketches; built from ``seed`` when omitted.
      seed: recorded in the trace.

    Returns:
      The per-iteration trace. Runs stop when the monitored gradient norm drops
      to ``grad_tol``, after ``max_iters`` iterations, or when the next model
      build would exceed the action budget.
    """
    if config.adaptive is not None:
        return run_adaptive(problem, x0, config, rng, seed)
    loop = _Loop(problem, x0, config, rng, seed)
    l = loop.spec.l
    for _ in range(config.max_iters):
        if loop.converged():
            return loop.trace("grad_tol")
        if not loop.affordable(l):
            return loop.trace("budget")
        S = draw(loop.spec, loop.rng)
        model = loop.obj.reduced_model(loop.x, S, loop.fx)
        loop.iterate(S, model, _step(config, model, loop.alpha, S))
    return loop.trace("grad_tol" if loop.converged() else "max_iters")


def run_adaptive(problem, x0, config: SolverConfig, rng: np.random.Generator | None = None,
                 seed: int | None = None) -> RunTrace:
    """Random-subspace method whose subspace grows until the model decreases enough.

    Within an iteration the sketch grows by ``adaptive.l_increment`` rows (capped
    at ``d``) until ``m(s) <= kappa * m(0)`` or ``l = d``; the accepted step then
    goes through the usual sufficient-decrease test. The grown ``l`` carries
    over to later iterations.
    """
    if config.adaptive is None:
        raise SolverError("run_adaptive needs config.adaptive")
    kappa, inc = config.adaptive.kappa, config.adaptive.l_increment
    loop = _Loop(problem, x0, config, rng, seed)
    d = loop.obj.d
    l = loop.spec.l
    growth = []
    for _ in range(config.max_iters):
        if loop.converged():
            return loop.trace("grad_tol", l_growth=growth)
        if not loop.affordable(l):
            return loop.trace("budget", l_growth=growth)
        S = draw(loop.spec.with_l(l), loop.rng)
        model = loop.obj.reduced_model(loop.x, S, loop.fx)
        step = _step(config, model, loop.alpha, S)
        while eval_model(model, step.shat) > kappa * model.f0 and l < d:
            l_next = min(d, l + inc)
            S_next = grow(S, l_next, loop.rng)
            if not loop.affordable(model_cost(S_next, (S, model))):
                break
            model = loop.obj.reduced_model(loop.x, S_next, loop.fx, previous=(S, model))
            S, l = S_next, l_next
            step = _step(config, model, loop.alpha, S)
        growth.append(l)
        loop.iterate(S, model, step)
    return loop.trace("grad_tol" if loop.converged() else "max_iters", l_growth=growth)
