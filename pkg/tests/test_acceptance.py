"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from sketchopt.harness.checks import random_model, structure_violations
from sketchopt.harness.profiles import ProfileRun, compute_profiles
from sketchopt.model import qr_conditions, solve_qr_step, solve_tr_step, tr_conditions
from sketchopt.nls import full_gn_reference, get_problem, problem_suite
from sketchopt.sketch import SketchKind, SketchSpec, apply, draw, make_rng, theory_params
from sketchopt.solver import AdaptiveConfig, SolverConfig, Variant, run
from sketchopt.theory import ComplexityInputs, iteration_bound, qr_h, tr_h, verify_chernoff

RANDOM_KINDS = (SketchKind.GAUSSIAN, SketchKind.S_HASHING, SketchKind.STABLE_ONE_HASHING,
                SketchKind.SAMPLING)


@pytest.fixture
def report(capsys):
    def emit(number, passed, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if passed else 'FAIL'}  criterion {number}: {detail}")
        assert passed, detail
    return emit


def test_criterion_1_ensemble_structure(report):
    start = time.perf_counter()
    d, draws = 100, 1000
    rng = make_rng(101)
    bad_structure = bad_norm = 0
    worst = {}
    for kind in RANDOM_KINDS:
        for l in (5, 25, 75):
            spec = SketchSpec(kind, l, d)
            s_max = None if kind is SketchKind.GAUSSIAN else theory_params(spec, 0.5, nu=1.0).s_max
            for _ in range(draws):
                S = draw(spec, rng)
                A = S.toarray()
                bad_structure += structure_violations(S) + int(
                    A.shape != (l, d) or not np.all(np.isfinite(A)))
                if s_max is not None:
                    ratio = S.norm() / s_max
                    worst[kind.value] = max(worst.get(kind.value, 0.0), ratio)
                    bad_norm += ratio > 1.0
    elapsed = time.perf_counter() - start
    detail = (f"{bad_structure} structural and {bad_norm} norm violations over "
              f"{4 * 3 * draws} draws; max ||S||/S_max "
              + ", ".join(f"{k} {v:.3f}" for k, v in sorted(worst.items()))
              + f"; {elapsed:.1f}s")
    report(1, bad_structure == 0 and bad_norm == 0 and elapsed < 10.0, detail)


def test_criterion_2_gaussian_embedding(report):
    start = time.perf_counter()
    d, l, eps_s = 100, 64, 0.5
    spec = SketchSpec(SketchKind.GAUSSIAN, l, d)
    rng = make_rng(202)
    directions, per_direction = 10, 10_000
    failures = 0
    for _ in range(directions):
        y = rng.standard_normal(d)
        threshold = (1.0 - eps_s) * float(y @ y)
        for _ in range(per_direction):
            sy = apply(draw(spec, rng), y)
            failures += float(sy @ sy) < threshold
    trials = directions * per_direction
    rate = failures / trials
    p = math.exp(-eps_s**2 * l / 4.0)
    assert p == pytest.approx(theory_params(spec, eps_s, delta2=0.5).delta1)
    limit = p + 3.0 * math.sqrt(p * (1.0 - p) / trials)
    elapsed = time.perf_counter() - start
    report(2, rate <= limit and elapsed < 60.0,
           f"failure rate {rate:.5f} <= {limit:.5f} (e^-4 + 3 sigma) over {trials} trials; "
           f"{elapsed:.1f}s")


def test_criterion_3_step_certificates(report):
    rng = make_rng(303)
    bad_qr = bad_tr = 0
    models = 1000
    for i in range(models):
        l = int(rng.integers(1, 21))
        kind = RANDOM_KINDS[i % 4]
        S = draw(SketchSpec(kind, l, l + int(rng.integers(0, 30)), s=min(3, l)), rng)
        m = random_model(rng, l, S)
        alpha = float(10.0 ** rng.uniform(-4, 3))
        q = solve_qr_step(m, alpha, 0.01, S)
        bad_qr += not all(qr_conditions(m, alpha, 0.01, q.shat))
        for method in ("cauchy", "cg"):
            t = solve_tr_step(m, alpha, S, method)
            bad_tr += not all(tr_conditions(m, alpha, t.shat))
    report(3, bad_qr == 0 and bad_tr == 0,
           f"{bad_qr} QR and {bad_tr} TR certificate violations over {models} models")


def classical_tr_gauss_newton(p, iters, alpha_max=100.0, theta=1e-4):
    """Textbook Cauchy-point trust-region Gauss-Newton, written from scratch."""
    x = p.x0.astype(float).copy()
    r = p.residual(x)
    f = 0.5 * float(r @ r)
    radius = alpha_max / 2.0
    fs, flags = [f], []
    for _ in range(iters):
        J = p.jacobian(x)
        g = J.T @ r
        gn = math.sqrt(float(g @ g))
        if gn == 0.0:
            step, pred = np.zeros_like(x), 0.0
        else:
            Jg = J @ g
            curv = float(Jg @ Jg)
            t = radius / gn if curv <= 0.0 else min(gn * gn / curv, radius / gn)
            step = -t * g
            pred = t * gn * gn - 0.5 * t * t * curv
        r_new = p.residual(x + step)
        f_new = 0.5 * float(r_new @ r_new)
        ok = pred > 0.0 and math.isfinite(f_new) and f - f_new >= theta * pred
        if ok:
            x, r, f = x + step, r_new, f_new
            radius = min(alpha_max, 2.0 * radius)
        else:
            radius = 0.5 * radius
        fs.append(f)
        flags.append(ok)
    return np.array(fs), flags


def test_criterion_4_full_space_equivalence(report):
    names = ("broyden_tridiagonal", "extended_rosenbrock", "discrete_bvp")
    worst = worst_pointwise = 0.0
    mismatched = 0
    for name in names:
        p = get_problem(name, 30)
        fs, flags = classical_tr_gauss_newton(p, 100)
        cfg = SolverConfig(variant=Variant.TRUST_REGION, tr_method="cauchy", max_iters=100,
                           action_budget=10**9)
        tr = full_gn_reference(p, config=cfg)
        mismatched += [r.successful for r in tr.records] != flags
        f = tr.f_values()
        if len(f) != len(fs):
            worst = math.inf
            continue
        # differences are measured on the scale of the sequence, f(x0); pointwise
        # relative differences are also reported but blow up as f approaches 0
        worst = max(worst, float(np.max(np.abs(f - fs))) / fs[0])
        worst_pointwise = max(worst_pointwise, float(np.max(np.abs(f - fs) / np.abs(fs))))
    report(4, mismatched == 0 and worst <= 1e-12,
           f"{mismatched} success-pattern mismatches; max |f - f_ref| / f0 {worst:.2e} "
           f"(pointwise relative {worst_pointwise:.1e}) over 100 iterations on "
           f"{len(names)} problems")


def test_criterion_5_monotone_decrease(report):
    problems = problem_suite(24)
    violations_f = violations_alpha = runs = 0
    for p in problems:
        for kind in RANDOM_KINDS:
            for frac in (0.25, 0.5, 0.75):
                l = max(1, round(frac * p.d))
                for variant in Variant:
                    cfg = SolverConfig(sketch=SketchSpec(kind, l, p.d, s=min(3, l)),
                                       variant=variant, budget_multiplier=20)
                    for seed in range(20):
                        tr = run(p, p.x0, cfg, seed=seed)
                        violations_f += int(np.sum(np.diff(tr.f_values()) > 0.0))
                        m = np.log(np.array([r.alpha for r in tr.records]) / cfg.alpha_max)
                        m = m / math.log(cfg.gamma1)
                        violations_alpha += int(np.sum((np.abs(m - np.round(m)) > 1e-9)
                                                       | (m < -1e-9)))
                        runs += 1
    report(5, violations_f == 0 and violations_alpha == 0,
           f"{violations_f} f-increase and {violations_alpha} alpha-lattice violations over "
           f"{runs} runs ({len(problems)} problems x 4 ensembles x 3 fractions x 2 variants "
           f"x 20 seeds, d~24)")


def test_criterion_6_desk_scale_convergence(report):
    problems = problem_suite(100, zero_residual_only=True)
    runs = []
    for p in problems:
        tr = full_gn_reference(p, config=SolverConfig(tr_method="cg"))
        runs.append(ProfileRun.from_trace(tr, "full", 0, p.zero_residual))
        for kind in RANDOM_KINDS:
            for frac in (0.25, 0.5, 0.75):
                cfg = SolverConfig(sketch=SketchSpec(kind, round(frac * p.d), p.d),
                                   tr_method="cg")
                for seed in range(3):
                    tr = run(p, p.x0, cfg, seed=seed)
                    runs.append(ProfileRun.from_trace(tr, f"{kind.value}-{frac:g}", seed,
                                                      p.zero_residual))
    profiles = compute_profiles(runs, 0.1, budget_multiplier=50)
    full = profiles.pop("full").pi(50.0)
    grid = np.linspace(0.0, 50.0, 501)
    monotone = all(np.all(np.diff(prof.pi(grid)) >= 0) for prof in profiles.values())
    dominated = all(prof.pi(50.0) <= full for prof in profiles.values())
    sketched = ", ".join(f"{k} {v.pi(50.0):.2f}" for k, v in sorted(profiles.items()))
    report(6, full >= 0.8 and monotone and dominated,
           f"full GN solves {full:.0%} of {len(problems)} problems; sketched pi(50): {sketched}")


def test_criterion_7_chernoff(report):
    cells = []
    for ds in (0.05, 0.1):
        for d1 in (0.2, 0.3):
            for N in (100, 200):
                cells.append(verify_chernoff(ds, d1, N, 100_000, rng=int(7000 + 100 * ds + 10 * d1 + N)))
    bad = sum(not c.within_bound for c in cells)
    worst = max(c.empirical - c.bound for c in cells)
    report(7, bad == 0,
           f"{8 - bad} of 8 cells within bound + 3 sigma; max empirical - bound {worst:.4f}")


def test_criterion_8_bound_calculator(report):
    base = ComplexityInputs(eps=1e-2, L=1.0, B_max=1.0, s_max=2.0, eps_s=0.5, theta=0.5,
                            gamma1=0.5, c=1, alpha0=50.0, alpha_max=100.0, kappa_T=0.01,
                            delta_s=0.05, delta_1=0.1, f0_minus_fstar=10.0)
    tr = ComplexityInputs(**{**base.__dict__, "variant": "trust_region"})
    fixtures = [
        abs(qr_h(base) / 2.4713320539082534780e-10 - 1) <= 1e-12,
        abs(tr_h(tr) / 1.3020833333333333333e-7 - 1) <= 1e-12,
        abs(tr_h(tr, exact=True) / 1.6858739404357612715e-7 - 1) <= 1e-12,
        iteration_bound(base).n == 385371504800,
        iteration_bound(tr).n == 731428658,
    ]
    sweeps = []
    for inp in (base, tr):
        ns = [iteration_bound(ComplexityInputs(**{**inp.__dict__, "eps": e})).n
              for e in np.geomspace(1e-1, 1e-4, 15)]
        nh = [iteration_bound(ComplexityInputs(**{**inp.__dict__, "h_value": h})).n
              for h in np.geomspace(1e-9, 1.0, 15)]
        sweeps += [ns == sorted(ns), nh == sorted(nh, reverse=True)]
    ratios = [iteration_bound(ComplexityInputs(**{**inp.__dict__, "eps": 5e-3})).n
              / iteration_bound(inp).n for inp in (base, tr)]
    halving = all(3.5 <= r <= 4.5 for r in ratios)
    report(8, all(fixtures) and all(sweeps) and halving,
           f"{sum(fixtures)}/5 fixtures, {sum(sweeps)}/4 sweeps, eps-halving ratios "
           + ", ".join(f"{r:.4f}" for r in ratios))


def test_criterion_9_adaptive(report):
    p = get_problem("bratu2d", 100)
    budget = 2000
    wins = 0
    finals = []
    for seed in range(20):
        base = dict(tr_method="cg", action_budget=budget)
        fixed = run(p, p.x0, SolverConfig(sketch=SketchSpec(SketchKind.SAMPLING, 10, p.d),
                                          **base), seed=seed)
        adaptive = run(p, p.x0, SolverConfig(sketch=SketchSpec(SketchKind.SAMPLING, 1, p.d),
                                             adaptive=AdaptiveConfig(0.9, 5), **base), seed=seed)
        assert fixed.actions <= budget and adaptive.actions <= budget
        wins += adaptive.f_final <= fixed.f_final
        finals.append((adaptive.f_final, fixed.f_final))
    med = np.median(np.array(finals), axis=0)
    report(9, wins >= 14,
           f"adaptive final f <= fixed-l final f in {wins}/20 seeds on bratu2d (d=100, "
           f"budget {budget}); median f {med[0]:.2e} vs {med[1]:.2e}")
