"""Trace files and the run index.

Each run is one JSON-lines file: a ``header`` record, one ``iter`` record per
iteration and a ``footer``. Floats are written with Python's shortest
round-trip representation; non-finite values become ``null``. Trace files hold
no timestamps, so reruns with the same seeds are byte-identical. Wall-clock
times live only in ``index.json``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from sketchopt.solver import IterationRecord, RunTrace

SCHEMA_VERSION = 1
INDEX_NAME = "index.json"


class PersistenceError(OSError):
    pass


def _clean(value):
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return _clean(value.item())
    if isinstance(value, np.ndarray):
        return [_clean(v) for v in value.tolist()]
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    return value


def _line(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, allow_nan=False, separators=(",", ":"))


@dataclass(frozen=True)
class RunKey:
    problem: str
    d: int
    solver: str
    seed: int

    @property
    def filename(self) -> str:
        return f"{self.problem}-d{self.d}__{self.solver}__s{self.seed}.jsonl"


def trace_lines(trace: RunTrace, key: RunKey, extra: dict | None = None) -> list[str]:
    header = {
        "type": "header", "schema": SCHEMA_VERSION, "problem": key.problem, "d": key.d,
        "solver": key.solver, "seed": key.seed, "config": trace.config, "f0": trace.f0,
        "x0": trace.x0,
    }
    header.update(extra or {})
    lines = [_line(header)]
    lines += [_line({"type": "iter", **asdict(r)}) for r in trace.records]
    lines.append(_line({
        "type": "footer", "termination": trace.termination, "x_final": trace.x_final,
        "iterations": len(trace.records), "evaluations": trace.evaluations, "meta": trace.meta,
    }))
    return lines


def write_trace(path: str | Path, trace: RunTrace, key: RunKey, extra: dict | None = None) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(trace_lines(trace, key, extra)) + "\n")
    except OSError as exc:
        raise PersistenceError(f"cannot write {path}: {exc}") from exc
    return path


@dataclass
class StoredRun:
    """A trace read back from disk."""

    key: RunKey
    header: dict[str, Any]
    records: list[IterationRecord]
    footer: dict[str, Any]

    @property
    def f0(self) -> float:
        return self.header["f0"]

    @property
    def zero_residual(self) -> bool:
        return bool(self.header.get("zero_residual", False))

    def f_values(self) -> np.ndarray:
        return np.array([self.f0] + [r.f_after for r in self.records])

    def actions(self) -> np.ndarray:
        """Cumulative actions spent to reach each iterate (0 for ``x0``)."""
        return np.array([0] + [r.actions_used for r in self.records])


def read_trace(path: str | Path) -> StoredRun:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise PersistenceError(f"cannot read {path}: {exc}") from exc
    items = [json.loads(line) for line in lines if line.strip()]
    if not items or items[0].get("type") != "header":
        raise PersistenceError(f"{path} has no header record")
    header = items[0]
    if header.get("schema") != SCHEMA_VERSION:
        raise PersistenceError(f"{path}: unsupported schema {header.get('schema')}")
    fields = IterationRecord.__dataclass_fields__
    records = []
    for item in items[1:]:
        if item["type"] == "iter":
            records.append(IterationRecord(**{k: v for k, v in item.items() if k in fields}))
    footer = items[-1] if items[-1].get("type") == "footer" else {}
    key = RunKey(header["problem"], header["d"], header["solver"], header["seed"])
    return StoredRun(key, header, records, footer)


def write_index(out_dir: str | Path, entries: Iterable[dict], config: dict) -> Path:
    path = Path(out_dir) / INDEX_NAME
    body = {"schema": SCHEMA_VERSION, "config": _clean(config), "runs": _clean(list(entries))}
    try:
        path.write_text(json.dumps(body, indent=1, sort_keys=True) + "\n")
    except OSError as exc:
        raise PersistenceError(f"cannot write {path}: {exc}") from exc
    return path


def read_index(out_dir: str | Path) -> dict:
    path = Path(out_dir) / INDEX_NAME
    try:
        return json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise PersistenceError(f"cannot read {path}: {exc}") from exc


def load_runs(out_dir: str | Path) -> tuple[list[StoredRun], list[str]]:
    """Read every run listed in the index. Returns ``(runs, missing_files)``."""
    out_dir = Path(out_dir)
    index = read_index(out_dir)
    runs, missing = [], []
    for entry in index["runs"]:
        path = out_dir / entry["file"]
        if not path.exists():
            missing.append(entry["file"])
            continue
        runs.append(read_trace(path))
    return runs, missing
