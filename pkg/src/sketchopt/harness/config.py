"""Experiment configuration.

A config file (YAML or JSON) looks like::

    problems:
      - {name: broyden_tridiagonal, d: 100}
      - {name: bratu2d, d: 100}
    solvers:
      - {name: full_gn, full: true}
      - {variant: trust_region, ensemble: sampling, l_fraction: 0.5}
    grid:                      # optional cartesian product, appended to solvers
      variants: [trust_region]
      ensembles: [gaussian, s_hashing, stable_1_hashing, sampling]
      l_fractions: [0.25, 0.5, 0.75]
    seeds: 20                  # or an explicit list
    tau: 0.1
    budget_multiplier: 50
    output_dir: runs/demo
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import yaml

from sketchopt.nls import NlsError, get_problem, problem_names
from sketchopt.sketch import SketchError, SketchKind, SketchSpec
from sketchopt.solver import AdaptiveConfig, SolverConfig, SolverError, Variant


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ProblemEntry:
    name: str
    d: int


@dataclass(frozen=True)
class SolverEntry:
    """One solver of the grid.

    ``full=True`` is the deterministic full-space method; otherwise the sketch
    has ``l = max(1, round(l_fraction * d))`` rows of ``ensemble``.
    """

    name: str | None = None
    variant: str = "trust_region"
    ensemble: str = "sampling"
    l_fraction: float = 0.5
    full: bool = False
    s: int = 3
    tr_method: str = "cg"
    adaptive: dict | None = None
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        try:
            Variant(self.variant)
            SketchKind(self.ensemble)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not self.full and not 0.0 < self.l_fraction <= 1.0:
            raise ConfigError("l_fraction must lie in (0, 1]")
        if self.tr_method not in ("cauchy", "cg"):
            raise ConfigError(f"unknown tr_method {self.tr_method!r}")
        if self.name is None:
            object.__setattr__(self, "name", self.default_name())

    def default_name(self) -> str:
        short = "qr" if self.variant == Variant.QUAD_REG.value else "tr"
        if self.full:
            return f"{short}-full"
        tag = f"{short}-{self.ensemble}-{self.l_fraction:g}"
        return tag + "-adaptive" if self.adaptive else tag

    @property
    def randomized(self) -> bool:
        return not self.full

    def subspace_dim(self, d: int) -> int:
        return d if self.full else min(d, max(1, round(self.l_fraction * d)))

    def solver_config(self, d: int, budget_multiplier: float) -> SolverConfig:
        try:
            sketch = None
            if not self.full:
                l = self.subspace_dim(d)
                sketch = SketchSpec(SketchKind(self.ensemble), l, d, s=min(self.s, l))
            adaptive = AdaptiveConfig(**self.adaptive) if self.adaptive else None
            return SolverConfig(sketch=sketch, variant=Variant(self.variant),
                                tr_method=self.tr_method, adaptive=adaptive,
                                budget_multiplier=budget_multiplier, **self.options)
        except (SolverError, SketchError, TypeError) as exc:
            raise ConfigError(f"solver {self.name}: {exc}") from None


@dataclass(frozen=True)
class ExperimentConfig:
    problems: tuple[ProblemEntry, ...]
    solvers: tuple[SolverEntry, ...]
    seeds: tuple[int, ...] = (0,)
    tau: float = 0.1
    budget_multiplier: float = 50.0
    output_dir: str = "runs"
    workers: int = 1

    def __post_init__(self):
        if not self.problems:
            raise ConfigError("no problems configured")
        if not self.solvers:
            raise ConfigError("empty solver grid")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if not 0.0 < self.tau < 1.0:
            raise ConfigError("tau must lie in (0, 1)")
        if not self.budget_multiplier > 0:
            raise ConfigError("budget_multiplier must be positive")
        names = [s.name for s in self.solvers]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate solver names in {names}")
        for p in self.problems:
            try:
                get_problem(p.name, p.d)
            except NlsError as exc:
                raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def with_output(self, output_dir: str | Path) -> ExperimentConfig:
        return replace(self, output_dir=str(output_dir))


def _solver_entries(data):
    out = [SolverEntry(**s) for s in data.get("solvers", [])]
    grid = data.get("grid")
    if grid:
        extra = set(grid) - {"variants", "ensembles", "l_fractions", "tr_method", "s"}
        if extra:
            raise ConfigError(f"unknown grid keys {sorted(extra)}")
        for variant in grid.get("variants", ["trust_region"]):
            for ens in grid.get("ensembles", ["sampling"]):
                for frac in grid.get("l_fractions", [0.5]):
                    out.append(SolverEntry(variant=variant, ensemble=ens, l_fraction=frac,
                                           tr_method=grid.get("tr_method", "cg"),
                                           s=grid.get("s", 3)))
    return tuple(out)


def config_from_dict(data: dict[str, Any]) -> ExperimentConfig:
    """Build and validate an :class:`ExperimentConfig` from plain data."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    known = {"problems", "solvers", "grid", "seeds", "tau", "budget_multiplier",
             "output_dir", "workers"}
    extra = set(data) - known
    if extra:
        raise ConfigError(f"unknown config keys {sorted(extra)}")
    try:
        problems = []
        for p in data.get("problems", []):
            if isinstance(p, str):
                raise ConfigError(f"problem {p!r} needs a dimension")
            problems.append(ProblemEntry(str(p["name"]), int(p["d"])))
        solvers = _solver_entries(data)
        seeds = data.get("seeds", 1)
        seeds = tuple(range(int(seeds))) if isinstance(seeds, int) else tuple(int(s) for s in seeds)
        return ExperimentConfig(
            problems=tuple(problems), solvers=solvers, seeds=seeds,
            tau=float(data.get("tau", 0.1)),
            budget_multiplier=float(data.get("budget_multiplier", 50.0)),
            output_dir=str(data.get("output_dir", "runs")), workers=int(data.get("workers", 1)))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed config: {exc!r}") from None


def load_config(path: str | Path) -> ExperimentConfig:
    """Read a YAML or JSON config file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return config_from_dict(data)


def available_problems() -> list[str]:
    return problem_names()
