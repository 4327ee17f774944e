"""Reduced quadratic models and their step computations.

A reduced model lives in the sketched space::

    m(shat) = f0 + <ghat, shat> + 0.5 <shat, bhat shat>

with ``ghat = S grad f(x)`` and ``bhat = S B S^T``. The quadratic-regularisation
step minimises ``q(shat) = m(shat) + ||S^T shat||^2 / (2 alpha)``; the
trust-region step decreases ``m`` inside ``||shat|| <= alpha``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from sketchopt.sketch import SketchMatrix, apply_transpose

RIDGE = 1e-12
C7 = 0.5


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ReducedModel:
    f0: float
    ghat: np.ndarray
    bhat: np.ndarray
    gram: np.ndarray

    def __post_init__(self):
        l = self.ghat.shape[0]
        if self.bhat.shape != (l, l) or self.gram.shape != (l, l):
            raise ModelError("ghat, bhat and gram dimensions disagree")
        if not (np.isfinite(self.f0) and np.all(np.isfinite(self.ghat))
                and np.all(np.isfinite(self.bhat)) and np.all(np.isfinite(self.gram))):
            raise ModelError("reduced model contains NaN or Inf")

    @property
    def l(self) -> int:
        return self.ghat.shape[0]


@dataclass(frozen=True)
class StepResult:
    shat: np.ndarray
    s_full: np.ndarray | None
    model_decrease: float
    diagnostics: dict = field(default_factory=dict)


def eval_model(m: ReducedModel, shat: np.ndarray) -> float:
    shat = np.asarray(shat, dtype=float)
    if shat.shape != m.ghat.shape:
        raise ModelError(f"shat has shape {shat.shape}, model has l={m.l}")
    return float(m.f0 + m.ghat @ shat + 0.5 * shat @ (m.bhat @ shat))


def _decrease(m, shat):
    return float(-(m.ghat @ shat) - 0.5 * shat @ (m.bhat @ shat))


def _result(m, shat, S, decrease, **diag):
    s_full = apply_transpose(S, shat) if S is not None else None
    return StepResult(shat, s_full, decrease, diag)


def qr_gradient(m: ReducedModel, alpha: float, shat: np.ndarray) -> np.ndarray:
    """Gradient of the regularised model ``q`` at ``shat``."""
    return m.ghat + m.bhat @ shat + (m.gram @ shat) / alpha


def default_atol(m: ReducedModel) -> float:
    return 1e-10 * max(1.0, float(np.linalg.norm(m.ghat)))


def qr_conditions(m: ReducedModel, alpha: float, kappa_T: float, shat: np.ndarray,
                  atol: float | None = None) -> tuple[bool, bool]:
    """Check the approximate-stationarity and decrease conditions on ``q``.

    Returns ``(stationary_ok, decrease_ok)``.
    """
    if atol is None:
        atol = default_atol(m)
    step_norm = math.sqrt(max(float(shat @ (m.gram @ shat)), 0.0))
    grad_norm = float(np.linalg.norm(qr_gradient(m, alpha, shat)))
    q_change = -_decrease(m, shat) + step_norm**2 / (2.0 * alpha)
    return grad_norm <= kappa_T * step_norm + atol, q_change <= 0.0


def solve_qr_step(m: ReducedModel, alpha: float, kappa_T: float = 0.01,
                  S: SketchMatrix | None = None, atol: float | None = None) -> StepResult:
    """Minimise the regularised model by a direct symmetric solve.

    Solves ``(bhat + gram / alpha) shat = -ghat``. A singular system (possible
    when hashing or sampling rows collide) is retried with a ``1e-12`` ridge and
    then with least squares; the returned step is checked against both step
    conditions either way.
    """
    if not alpha > 0:
        raise ModelError("alpha must be positive")
    if not np.any(m.ghat):
        return _result(m, np.zeros(m.l), S, 0.0, residual=0.0, solve="zero-gradient")

    a = m.bhat + m.gram / alpha
    a = 0.5 * (a + a.T)
    rhs = -m.ghat
    solve = "cholesky"
    try:
        shat = scipy.linalg.cho_solve(scipy.linalg.cho_factor(a), rhs)
    except np.linalg.LinAlgError:
        solve = "ridge"
        try:
            shat = scipy.linalg.cho_solve(scipy.linalg.cho_factor(a + RIDGE * np.eye(m.l)), rhs)
        except np.linalg.LinAlgError:
            shat = np.full(m.l, np.nan)
    ok = np.all(np.isfinite(shat)) and all(qr_conditions(m, alpha, kappa_T, shat, atol))
    if not ok:
        solve = "lstsq"
        shat = np.linalg.lstsq(a, rhs, rcond=None)[0]

    decrease = _decrease(m, shat)
    if decrease < 0.0:
        # only reachable through rounding when ghat is negligible
        shat, decrease, solve = np.zeros(m.l), 0.0, "zero"
    residual = float(np.linalg.norm(qr_gradient(m, alpha, shat)))
    return _result(m, shat, S, decrease, residual=residual, solve=solve)


def _boundary_root(s, p, radius):
    # largest tau >= 0 with ||s + tau p|| = radius
    a = p @ p
    b = 2.0 * (s @ p)
    c = s @ s - radius**2
    disc = max(b * b - 4.0 * a * c, 0.0)
    return (-b + math.sqrt(disc)) / (2.0 * a)


def cauchy_point(m: ReducedModel, alpha: float) -> np.ndarray:
    g = m.ghat
    gnorm = float(np.linalg.norm(g))
    if gnorm == 0.0:
        return np.zeros(m.l)
    curv = float(g @ (m.bhat @ g))
    t = alpha / gnorm
    if curv > 0.0:
        t = min(gnorm**2 / curv, t)
    return -t * g


def steihaug_cg(m: ReducedModel, alpha: float, rtol: float = 1e-10,
                max_iter: int | None = None) -> np.ndarray:
    """Truncated CG on the model within ``||shat|| <= alpha``.

    The first iterate is the Cauchy point and the model decreases monotonically
    along the CG path.
    """
    g = m.ghat
    l = m.l
    s = np.zeros(l)
    r = g.copy()
    p = -g
    rr = float(r @ r)
    stop = rtol * math.sqrt(rr)
    for _ in range(max_iter or 2 * l):
        bp = m.bhat @ p
        curv = float(p @ bp)
        if curv <= 1e-30 * float(p @ p):
            return s + _boundary_root(s, p, alpha) * p
        step = rr / curv
        s_next = s + step * p
        if np.linalg.norm(s_next) >= alpha:
            return s + _boundary_root(s, p, alpha) * p
        s = s_next
        r = r + step * bp
        rr_next = float(r @ r)
        if math.sqrt(rr_next) <= stop:
            break
        p = -r + (rr_next / rr) * p
        rr = rr_next
    return s


def solve_tr_step(m: ReducedModel, alpha: float, S: SketchMatrix | None = None,
                  method: str = "cauchy") -> StepResult:
    """Trust-region step with at least Cauchy decrease.

    Args:
      m: reduced model with PSD ``bhat``.
      alpha: trust-region radius.
      S: sketch, used only to fill ``StepResult.s_full``.
      method: ``"cauchy"`` returns the Cauchy point; ``"cg"`` runs truncated CG
        and keeps whichever of the CG and Cauchy steps decreases the model more.
    """
    if not alpha > 0:
        raise ModelError("alpha must be positive")
    if not np.any(m.ghat):
        return _result(m, np.zeros(m.l), S, 0.0, method=method)
    shat = cauchy_point(m, alpha)
    decrease = _decrease(m, shat)
    if method == "cg":
        cg = steihaug_cg(m, alpha)
        cg_decrease = _decrease(m, cg)
        if cg_decrease > decrease and np.linalg.norm(cg) <= alpha * (1 + 1e-12):
            shat, decrease = cg, cg_decrease
    elif method != "cauchy":
        raise ModelError(f"unknown trust-region step method {method!r}")
    return _result(m, shat, S, max(decrease, 0.0), method=method,
                   step_norm=float(np.linalg.norm(shat)))


def tr_conditions(m: ReducedModel, alpha: float, shat: np.ndarray,
                  c7: float = C7) -> tuple[bool, bool]:
    """Check ``||shat|| <= alpha`` and the fraction-of-Cauchy decrease.

    ``||bhat||`` is the exact spectral norm. Returns ``(radius_ok, cauchy_ok)``.
    """
    gnorm = float(np.linalg.norm(m.ghat))
    bnorm = float(np.max(np.abs(np.linalg.eigvalsh(m.bhat)))) if m.l else 0.0
    reach = alpha if bnorm == 0.0 else min(alpha, gnorm / bnorm)
    required = c7 * gnorm * reach
    decrease = _decrease(m, shat)
    radius_ok = float(np.linalg.norm(shat)) <= alpha * (1.0 + 1e-12)
    cauchy_ok = decrease >= required * (1.0 - 1e-12) - 1e-15 * max(1.0, abs(m.f0))
    return radius_ok, cauchy_ok
