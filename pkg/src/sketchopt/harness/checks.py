"""Quick invariant suites behind ``sketchopt check``.

Each check returns a :class:`CheckResult`; the suites are small enough to run
in a few seconds and are meant as a smoke test of an installation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from sketchopt.model import ReducedModel, qr_conditions, solve_qr_step, solve_tr_step, tr_conditions
from sketchopt.nls import problem_suite
from sketchopt.sketch import SketchKind, SketchSpec, draw, make_rng, theory_params
from sketchopt.solver import SolverConfig, Variant, run
from sketchopt.theory import verify_chernoff


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def structure_violations(S) -> int:
    """Count structural violations of a drawn sketch against its kind."""
    spec = S.spec
    l, d = spec.l, spec.d
    A = S.toarray()
    nz = A != 0
    kind = spec.kind
    bad = 0
    if kind is SketchKind.S_HASHING:
        bad += int(np.sum(nz.sum(axis=0) != spec.s))
        bad += int(np.sum(~np.isclose(np.abs(A[nz]), 1.0 / math.sqrt(spec.s), rtol=0, atol=1e-15)))
    elif kind is SketchKind.STABLE_ONE_HASHING:
        bad += int(np.sum(nz.sum(axis=0) != 1))
        bad += int(np.sum(nz.sum(axis=1) > math.ceil(d / l)))
        bad += int(np.sum(np.abs(A[nz]) != 1.0))
    elif kind is SketchKind.SAMPLING:
        bad += int(np.sum(nz.sum(axis=1) != 1))
        bad += int(np.sum(nz.sum(axis=0) > 1))
        bad += int(np.sum(A[nz] != math.sqrt(d / l)))
    elif kind is SketchKind.IDENTITY:
        bad += int(not np.array_equal(A, np.eye(d)))
    return bad


def check_sketch_structure(draws: int = 100, d: int = 100) -> CheckResult:
    rng = make_rng(1)
    bad = 0
    for kind in (SketchKind.S_HASHING, SketchKind.STABLE_ONE_HASHING, SketchKind.SAMPLING):
        for l in (5, 25, 75):
            spec = SketchSpec(kind, l, d)
            s_max = theory_params(spec, 0.5, nu=1.0).s_max
            for _ in range(draws):
                S = draw(spec, rng)
                bad += structure_violations(S) + int(S.norm() > s_max * (1 + 1e-12))
    return CheckResult("sketch structure", bad == 0, f"{bad} violations")


def random_model(rng, l: int, S=None) -> ReducedModel:
    g = rng.standard_normal(l)
    M = rng.standard_normal((l, max(1, l // 2)))
    gram = S.gram() if S is not None else np.eye(l)
    return ReducedModel(float(rng.standard_normal()), g, M @ M.T, gram)


def check_step_conditions(models: int = 200) -> CheckResult:
    rng = make_rng(2)
    bad = 0
    for _ in range(models):
        l = int(rng.integers(1, 21))
        S = draw(SketchSpec(SketchKind.GAUSSIAN, l, l + 10), rng)
        m = random_model(rng, l, S)
        alpha = float(10.0 ** rng.uniform(-3, 2))
        q = solve_qr_step(m, alpha, 0.01, S)
        t = solve_tr_step(m, alpha, S)
        bad += (not all(qr_conditions(m, alpha, 0.01, q.shat))) + (not all(tr_conditions(m, alpha, t.shat)))
    return CheckResult("step certificates", bad == 0, f"{bad} violations over {models} models")


def check_solver_invariants(seeds: int = 3, d: int = 24) -> CheckResult:
    bad = runs = 0
    for p in problem_suite(d)[:6]:
        for variant in Variant:
            for seed in range(seeds):
                cfg = SolverConfig(sketch=SketchSpec(SketchKind.GAUSSIAN, max(1, p.d // 4), p.d),
                                   variant=variant, action_budget=20 * p.d)
                tr = run(p, p.x0, cfg, seed=seed)
                f = tr.f_values()
                bad += int(np.sum(np.diff(f) > 0))
                m = np.log([r.alpha / cfg.alpha_max for r in tr.records]) / math.log(cfg.gamma1)
                bad += int(np.sum(np.abs(m - np.round(m)) > 1e-9))
                runs += 1
    return CheckResult("monotone decrease and alpha lattice", bad == 0,
                       f"{bad} violations over {runs} runs")


def check_chernoff(trials: int = 20_000) -> CheckResult:
    failures = []
    for ds in (0.05, 0.1):
        for d1 in (0.2, 0.3):
            res = verify_chernoff(ds, d1, 100, trials, rng=3)
            if not res.within_bound:
                failures.append((ds, d1))
    return CheckResult("chernoff tail", not failures, f"{len(failures)} of 4 cells above bound")


ALL_CHECKS = {
    "sketch": check_sketch_structure,
    "steps": check_step_conditions,
    "solver": check_solver_invariants,
    "chernoff": check_chernoff,
}


def run_checks(names=None) -> list[CheckResult]:
    names = list(ALL_CHECKS) if not names else names
    return [ALL_CHECKS[n]() for n in names]
