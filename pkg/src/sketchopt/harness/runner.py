"""Experiment execution: one trace per (problem, solver, seed), then an index."""

from __future__ import annotations

import logging
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from sketchopt.harness.config import ExperimentConfig, SolverEntry
from sketchopt.harness.persistence import PersistenceError, RunKey, write_index, write_trace
from sketchopt.nls import get_problem
from sketchopt.sketch import make_rng
from sketchopt.solver import RunTrace, run

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Job:
    problem: str
    d: int
    solver: SolverEntry
    seed: int
    budget_multiplier: float

    @property
    def key(self) -> RunKey:
        return RunKey(self.problem, self.d, self.solver.name, self.seed)


def run_seed(problem: str, d: int, solver: str, seed: int) -> np.random.SeedSequence:
    """Seed sequence for one run, a pure function of its identifiers."""
    tag = zlib.crc32(f"{problem}/{d}/{solver}".encode())
    return np.random.SeedSequence([seed, tag])


def expand_jobs(config: ExperimentConfig) -> list[Job]:
    jobs = []
    for p in config.problems:
        for s in config.solvers:
            # the full-space method is deterministic: one run per problem
            seeds = config.seeds if s.randomized else config.seeds[:1]
            jobs += [Job(p.name, p.d, s, seed, config.budget_multiplier) for seed in seeds]
    return jobs


def execute(job: Job) -> RunTrace:
    problem = get_problem(job.problem, job.d)
    cfg = job.solver.solver_config(problem.d, job.budget_multiplier)
    rng = make_rng(run_seed(job.problem, job.d, job.solver.name, job.seed))
    return run(problem, problem.x0, cfg, rng=rng, seed=job.seed)


def _execute_and_write(args):
    job, out_dir = args
    start = time.perf_counter()
    trace = execute(job)
    problem = get_problem(job.problem, job.d)
    path = write_trace(Path(out_dir) / job.key.filename, trace, job.key,
                       {"zero_residual": problem.zero_residual, "l": job.solver.subspace_dim(job.d)})
    return {
        "file": path.name, "problem": job.problem, "d": job.d, "solver": job.solver.name,
        "seed": job.seed, "termination": trace.termination, "iterations": len(trace.records),
        "actions": trace.actions, "f_final": trace.f_final,
        "wall_time": time.perf_counter() - start,
    }


@dataclass
class RunSet:
    out_dir: Path
    entries: list[dict]

    @property
    def index_path(self) -> Path:
        return self.out_dir / "index.json"


def run_experiment(config: ExperimentConfig, workers: int | None = None) -> RunSet:
    """Run every job of ``config`` and write traces plus ``index.json``.

    Args:
      config: validated experiment description.
      workers: process count; defaults to ``config.workers``. ``1`` runs inline.

    Raises:
      PersistenceError: the output directory cannot be created or written.
    """
    out_dir = Path(config.output_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise PersistenceError(f"cannot create {out_dir}: {exc}") from exc
    jobs = expand_jobs(config)
    workers = config.workers if workers is None else workers
    args = [(job, str(out_dir)) for job in jobs]
    logger.info("running %d jobs with %d worker(s)", len(jobs), workers)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(_execute_and_write, args))
    else:
        entries = [_execute_and_write(a) for a in args]
    write_index(out_dir, entries, config.to_dict())
    return RunSet(out_dir, entries)
