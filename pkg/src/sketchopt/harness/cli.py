"""Command-line interface.

    sketchopt run --config experiment.yaml [--output DIR] [--workers N] [--seeds N]
    sketchopt profile --runs DIR [--tau 0.1] [--out DIR] [--format csv]
    sketchopt theory --variant quad_reg --eps 1e-2 --L 1 --B-max 1 --s-max 2 ...
    sketchopt check [sketch steps solver chernoff]

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

from sketchopt.harness.checks import ALL_CHECKS, run_checks
from sketchopt.harness.config import ConfigError, load_config
from sketchopt.harness.persistence import PersistenceError, load_runs, read_index
from sketchopt.harness.profiles import compute_profiles, emit_plot_data
from sketchopt.harness.runner import run_experiment
from sketchopt.sketch import SketchError, SketchKind, SketchSpec, theory_params
from sketchopt.theory import BoundInapplicable, ComplexityInputs, iteration_bound

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if args.output:
        config = config.with_output(args.output)
    if args.seeds is not None:
        if args.seeds < 1:
            raise ConfigError("--seeds must be positive")
        config = replace(config, seeds=tuple(range(args.seeds)))
    result = run_experiment(config, workers=args.workers)
    print(f"wrote {len(result.entries)} traces and {result.index_path}")
    if args.profile:
        return _profile(result.out_dir, config.tau, None, "csv", config.budget_multiplier)
    return EXIT_OK


def _profile(runs_dir, tau, out, fmt, budget_multiplier=None) -> int:
    index = read_index(runs_dir)
    cfg = index.get("config", {})
    tau = tau if tau is not None else cfg.get("tau", 0.1)
    budget = budget_multiplier or cfg.get("budget_multiplier", 50.0)
    runs, missing = load_runs(runs_dir)
    for name in missing:
        print(f"warning: missing trace {name}", file=sys.stderr)
    profiles = compute_profiles(runs, tau, budget)
    out = out or f"{runs_dir}/profiles"
    paths = emit_plot_data(profiles, out, alpha_max=budget, fmt=fmt)
    for name, prof in sorted(profiles.items()):
        print(f"{name:40s} pi({budget:g}) = {prof.pi(budget):.3f}  over {len(prof.n_values)} runs")
    print(f"wrote {len(paths)} files to {out}")
    return EXIT_OK


def _cmd_profile(args) -> int:
    if args.tau is not None and not 0 < args.tau < 1:
        raise ConfigError("--tau must lie in (0, 1)")
    return _profile(args.runs, args.tau, args.out, args.format)


def _cmd_theory(args) -> int:
    s_max, delta_s = args.s_max, args.delta_s
    if args.ensemble:
        if args.l is None or args.d is None:
            raise ConfigError("--ensemble needs --l and --d")
        params = theory_params(SketchSpec(SketchKind(args.ensemble), args.l, args.d),
                               args.eps_s, delta2=args.delta2, nu=args.nu)
        s_max = params.s_max if s_max is None else s_max
        delta_s = params.delta_s if delta_s is None else delta_s
    if s_max is None:
        raise ConfigError("give --s-max or --ensemble")
    inp = ComplexityInputs(
        eps=args.eps, L=args.L, B_max=args.B_max, s_max=s_max, eps_s=args.eps_s,
        theta=args.theta, gamma1=args.gamma1, c=args.c, alpha0=args.alpha0,
        alpha_max=args.alpha_max, kappa_T=args.kappa_T, delta_s=delta_s, delta_1=args.delta_1,
        f0_minus_fstar=args.f_gap, variant=args.variant)
    try:
        out = {"applicable": True, **iteration_bound(inp).to_dict()}
    except BoundInapplicable as exc:
        out = {"applicable": False, "reason": str(exc), "s_max": s_max, "delta_s": delta_s}
    print(json.dumps(out, indent=1, sort_keys=True))
    return EXIT_OK


def _cmd_check(args) -> int:
    unknown = set(args.suites) - set(ALL_CHECKS)
    if unknown:
        raise ConfigError(f"unknown suites {sorted(unknown)}; choose from {sorted(ALL_CHECKS)}")
    results = run_checks(args.suites)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sketchopt", description="Random-subspace Gauss-Newton experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run an experiment grid")
    p.add_argument("--config", required=True, help="YAML or JSON experiment file")
    p.add_argument("--output", help="override output_dir")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--seeds", type=int, default=None, help="use seeds 0..N-1")
    p.add_argument("--profile", action="store_true", help="emit data profiles afterwards")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("profile", help="compute data profiles from a run directory")
    p.add_argument("--runs", required=True)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("csv", "tsv"), default="csv")
    p.set_defaults(func=_cmd_profile)

    p = sub.add_parser("theory", help="evaluate the iteration-complexity bound")
    p.add_argument("--variant", choices=("quad_reg", "trust_region"), default="quad_reg")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--L", type=float, required=True)
    p.add_argument("--B-max", dest="B_max", type=float, required=True)
    p.add_argument("--s-max", dest="s_max", type=float, default=None)
    p.add_argument("--eps-s", dest="eps_s", type=float, default=0.5)
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--gamma1", type=float, default=0.5)
    p.add_argument("--c", type=int, default=1)
    p.add_argument("--alpha0", type=float, default=50.0)
    p.add_argument("--alpha-max", dest="alpha_max", type=float, default=100.0)
    p.add_argument("--kappa-T", dest="kappa_T", type=float, default=0.01)
    p.add_argument("--delta-s", dest="delta_s", type=float, default=None)
    p.add_argument("--delta-1", dest="delta_1", type=float, default=0.1)
    p.add_argument("--f-gap", dest="f_gap", type=float, default=1.0, help="f(x0) - f*")
    p.add_argument("--ensemble", choices=[k.value for k in SketchKind], default=None)
    p.add_argument("--l", type=int, default=None)
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--delta2", type=float, default=None)
    p.add_argument("--nu", type=float, default=None)
    p.set_defaults(func=_cmd_theory)

    p = sub.add_parser("check", help="run quick invariant suites")
    p.add_argument("suites", nargs="*", default=[])
    p.set_defaults(func=_cmd_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, SketchError, BoundInapplicable) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PersistenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime failure
        logging.getLogger(__name__).debug("runtime failure", exc_info=True)
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
