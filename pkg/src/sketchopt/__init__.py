"""Random-subspace trust-region and quadratic-regularisation solvers.

The package is organised as

- :mod:`sketchopt.sketch`  -- random sketching ensembles and their quality parameters
- :mod:`sketchopt.model`   -- reduced quadratic models and subproblem solvers
- :mod:`sketchopt.solver`  -- the outer iteration (fixed and adaptive subspace size)
- :mod:`sketchopt.nls`     -- nonlinear least squares, sketched Gauss-Newton, test problems
- :mod:`sketchopt.theory`  -- complexity-bound calculator and Monte Carlo verifiers
- :mod:`sketchopt.harness` -- experiments, trace persistence, data profiles, CLI
"""

from sketchopt.model import ReducedModel, StepResult, eval_model, solve_qr_step, solve_tr_step
from sketchopt.sketch import (
    EnsembleTheory,
    SketchKind,
    SketchMatrix,
    SketchSpec,
    apply,
    apply_transpose,
    draw,
    embedding_trial,
    theory_params,
)
from sketchopt.solver import (
    AdaptiveConfig,
    IterationRecord,
    RunTrace,
    SolverConfig,
    Variant,
    classify_true,
    run,
    run_adaptive,
)

__version__ = "0.1.0"

__all__ = [
    "AdaptiveConfig",
    "EnsembleTheory",
    "IterationRecord",
    "ReducedModel",
    "RunTrace",
    "SketchKind",
    "SketchMatrix",
    "SketchSpec",
    "SolverConfig",
    "StepResult",
    "Variant",
    "apply",
    "apply_transpose",
    "classify_true",
    "draw",
    "embedding_trial",
    "eval_model",
    "run",
    "run_adaptive",
    "solve_qr_step",
    "solve_tr_step",
    "theory_params",
]
