"""Data profiles over derivative actions.

For a run on problem ``p`` of dimension ``d_p``, ``N_p`` is the number of
actions spent when an iterate first satisfies ``f <= f* + tau (f0 - f*)``
(infinite if it never does within the budget). The profile of a solver is

    pi(alpha) = |{runs : N_p <= alpha d_p}| / |runs|

where every seeded run of a randomised solver counts as its own problem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from sketchopt.harness.persistence import PersistenceError, StoredRun
from sketchopt.solver import RunTrace

PLOT_SCRIPT = "plot_profiles.py"

_SCRIPT_TEMPLATE = '''"""Plot the data profiles in this directory (needs matplotlib)."""
import csv
import glob
import os

import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
fig, ax = plt.subplots()
for path in sorted(glob.glob(os.path.join(here, "profile_*.csv"))):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    alpha = [float(r["alpha"]) for r in rows]
    pi = [float(r["pi"]) for r in rows]
    label = os.path.basename(path)[len("profile_"):-len(".csv")]
    ax.step(alpha, pi, where="post", label=label)
ax.set_xlabel("budget (multiples of d)")
ax.set_ylabel("fraction solved")
ax.set_ylim(0, 1.02)
ax.legend(fontsize="small")
fig.savefig(os.path.join(here, "profiles.png"), dpi=150)
'''


@dataclass(frozen=True)
class ProfileRun:
    problem: str
    d: int
    solver: str
    seed: int
    f_values: np.ndarray
    actions: np.ndarray
    zero_residual: bool

    @classmethod
    def from_stored(cls, run: StoredRun) -> ProfileRun:
        k = run.key
        return cls(k.problem, k.d, k.solver, k.seed, run.f_values(), run.actions(),
                   run.zero_residual)

    @classmethod
    def from_trace(cls, trace: RunTrace, solver: str, seed: int = 0,
                   zero_residual: bool = True) -> ProfileRun:
        actions = np.array([0] + [r.actions_used for r in trace.records])
        return cls(trace.problem or "?", trace.d, solver, seed, trace.f_values(), actions,
                   zero_residual)


def n_p(run: ProfileRun, tau: float, f_star: float, budget: float = math.inf) -> float:
    """Actions needed to reach ``f <= f* + tau (f0 - f*)``; ``inf`` if never within budget."""
    target = f_star + tau * (run.f_values[0] - f_star)
    hit = np.flatnonzero((run.f_values <= target) & (run.actions <= budget))
    return float(run.actions[hit[0]]) if hit.size else math.inf


def resolve_f_star(runs: Iterable[ProfileRun]) -> dict[tuple[str, int], float]:
    """0 for zero-residual problems, else the best value any run reached."""
    best: dict[tuple[str, int], float] = {}
    for r in runs:
        key = (r.problem, r.d)
        val = 0.0 if r.zero_residual else float(np.min(r.f_values))
        best[key] = min(best.get(key, math.inf), val)
    return best


@dataclass
class DataProfile:
    solver: str
    tau: float
    problems: list[tuple[str, int, int]] = field(default_factory=list)
    n_values: list[float] = field(default_factory=list)
    dims: list[int] = field(default_factory=list)

    @property
    def ratios(self) -> np.ndarray:
        return np.array(self.n_values, dtype=float) / np.array(self.dims, dtype=float)

    def pi(self, alpha: float | np.ndarray) -> float | np.ndarray:
        r = self.ratios
        if r.size == 0:
            return np.zeros_like(alpha, dtype=float) if np.ndim(alpha) else 0.0
        out = np.mean(r[None, :] <= np.atleast_1d(alpha)[:, None], axis=1)
        return out if np.ndim(alpha) else float(out[0])

    def breakpoints(self, alpha_max: float = 50.0) -> list[tuple[float, float]]:
        """``(alpha, pi(alpha))`` at 0, every jump up to ``alpha_max``, and ``alpha_max``."""
        r = self.ratios
        jumps = sorted({float(v) for v in r if 0.0 < v <= alpha_max})
        xs = [0.0] + jumps + ([alpha_max] if not jumps or jumps[-1] < alpha_max else [])
        return [(x, float(self.pi(x))) for x in xs]


def compute_profiles(runs: Iterable[ProfileRun | StoredRun], tau: float,
                     budget_multiplier: float = 50.0,
                     f_star: dict[tuple[str, int], float] | None = None) -> dict[str, DataProfile]:
    """One :class:`DataProfile` per solver name.

    Iterates reached with more than ``budget_multiplier * d`` actions do not count.
    """
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    runs = [r if isinstance(r, ProfileRun) else ProfileRun.from_stored(r) for r in runs]
    fs = resolve_f_star(runs)
    if f_star:
        fs.update(f_star)
    out: dict[str, DataProfile] = {}
    for r in sorted(runs, key=lambda r: (r.solver, r.problem, r.d, r.seed)):
        prof = out.setdefault(r.solver, DataProfile(r.solver, tau))
        prof.problems.append((r.problem, r.d, r.seed))
        prof.n_values.append(n_p(r, tau, fs[(r.problem, r.d)], budget_multiplier * r.d))
        prof.dims.append(r.d)
    return out


def _safe_name(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in name)


def emit_plot_data(profiles: dict[str, DataProfile], out_dir: str | Path,
                   alpha_max: float = 50.0, fmt: str = "csv") -> list[Path]:
    """Write one ``(alpha, pi)`` breakpoint file per profile and a plotting script.

    Returns the written paths; nothing is written for an empty profile set.
    """
    if fmt not in ("csv", "tsv"):
        raise ValueError(f"unsupported format {fmt!r}")
    if not profiles:
        return []
    sep = "," if fmt == "csv" else "\t"
    out_dir = Path(out_dir)
    written = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, prof in sorted(profiles.items()):
            path = out_dir / f"profile_{_safe_name(name)}.{fmt}"
            rows = [f"alpha{sep}pi"] + [f"{a!r}{sep}{p!r}" for a, p in prof.breakpoints(alpha_max)]
            path.write_text("\n".join(rows) + "\n")
            written.append(path)
        script = out_dir / PLOT_SCRIPT
        script.write_text(_SCRIPT_TEMPLATE.replace('"profile_*.csv"', f'"profile_*.{fmt}"')
                          .replace("csv.DictReader(fh)",
                                   "csv.DictReader(fh)" if fmt == "csv"
                                   else 'csv.DictReader(fh, delimiter="\\t")')
                          .replace('-len(".csv")', f'-len(".{fmt}")'))
        written.append(script)
    except OSError as exc:
        raise PersistenceError(f"cannot write profile data to {out_dir}: {exc}") from exc
    return written


def read_plot_data(path: str | Path) -> list[tuple[float, float]]:
    text = Path(path).read_text().splitlines()
    sep = "\t" if "\t" in text[0] else ","
    return [tuple(float(v) for v in line.split(sep)) for line in text[1:] if line]
