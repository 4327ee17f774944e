"""Random sketching ensembles.

Every ensemble produces an ``l x d`` matrix ``S``. Gaussian sketches are stored
densely; the hashing and sampling ensembles are stored as column-major
``(row, col, value)`` triplets, so products cost ``O(nnz)``.

Randomness comes from a counter-based Philox generator seeded through
:class:`numpy.random.SeedSequence`, which keeps draws reproducible across
platforms. Gaussian entries use numpy's ``standard_normal`` (ziggurat) scaled by
``1/sqrt(l)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Any

import numpy as np
from scipy import sparse


# sparse sketches with at most this many entries use dense block products
DENSE_LIMIT = 1 << 20


class SketchKind(str, Enum):
    GAUSSIAN = "gaussian"
    S_HASHING = "s_hashing"
    STABLE_ONE_HASHING = "stable_1_hashing"
    SAMPLING = "sampling"
    IDENTITY = "identity"


class SketchError(ValueError):
    """Invalid sketch specification or operand."""


def make_rng(seed: int | np.random.SeedSequence | None = None) -> np.random.Generator:
    """Counter-based generator used for every random draw in the package."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class SketchSpec:
    """Ensemble kind plus shape.

    ``s`` (nonzeros per column) is only read for :attr:`SketchKind.S_HASHING`.
    ``seed`` is used by :func:`draw` when no generator is passed.
    """

    kind: SketchKind
    l: int
    d: int
    s: int = 3
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", SketchKind(self.kind))
        if not (isinstance(self.l, (int, np.integer)) and isinstance(self.d, (int, np.integer))):
            raise SketchError("l and d must be integers")
        if self.d < 1 or not 1 <= self.l <= self.d:
            raise SketchError(f"need 1 <= l <= d, got l={self.l}, d={self.d}")
        if self.kind is SketchKind.S_HASHING and not 1 <= self.s <= self.l:
            raise SketchError(f"s-hashing needs 1 <= s <= l, got s={self.s}, l={self.l}")
        if self.kind is SketchKind.IDENTITY and self.l != self.d:
            raise SketchError("identity sketch requires l == d")

    def with_l(self, l: int) -> SketchSpec:
        if self.kind is SketchKind.IDENTITY:
            return self
        return SketchSpec(self.kind, l, self.d, min(self.s, l), self.seed)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind.value, "l": int(self.l), "d": int(self.d),
                "s": int(self.s), "seed": self.seed}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> SketchSpec:
        return cls(SketchKind(data["kind"]), int(data["l"]), int(data["d"]),
                   int(data.get("s", 3)), data.get("seed"))


@dataclass(frozen=True, eq=False)
class SketchMatrix:
    """A drawn sketch.

    Exactly one storage is populated: ``dense`` for Gaussian sketches, the
    triplet arrays for the sparse kinds, neither for the identity.
    """

    spec: SketchSpec
    dense: np.ndarray | None = None
    rows: np.ndarray | None = None
    cols: np.ndarray | None = None
    vals: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.spec.l, self.spec.d)

    @property
    def is_identity(self) -> bool:
        return self.spec.kind is SketchKind.IDENTITY

    @property
    def nnz(self) -> int:
        if self.dense is not None:
            return int(np.count_nonzero(self.dense))
        if self.is_identity:
            return self.spec.d
        return int(self.vals.size)

    @cached_property
    def csr(self) -> sparse.csr_matrix:
        l, d = self.shape
        if self.is_identity:
            return sparse.identity(d, format="csr")
        if self.dense is not None:
            return sparse.csr_matrix(self.dense)
        return sparse.csr_matrix((self.vals, (self.rows, self.cols)), shape=(l, d))

    @cached_property
    def _block(self) -> np.ndarray | None:
        # dense copy for block products when that is cheaper than sparse overhead
        if self.dense is not None:
            return self.dense
        if self.is_identity or self.spec.l * self.spec.d > DENSE_LIMIT:
            return None
        return self.toarray()

    def toarray(self) -> np.ndarray:
        if self.dense is not None:
            return self.dense.copy()
        if self.is_identity:
            return np.eye(self.spec.d)
        out = np.zeros(self.shape)
        out[self.rows, self.cols] = self.vals
        return out

    def gram(self) -> np.ndarray:
        """``S S^T`` as a dense ``l x l`` array."""
        if "gram" not in self._cache:
            if self.is_identity:
                g = np.eye(self.spec.d)
            elif self._block is not None:
                g = self._block @ self._block.T
            else:
                g = (self.csr @ self.csr.T).toarray()
            self._cache["gram"] = g
        return self._cache["gram"]

    def norm(self) -> float:
        """Spectral norm, computed exactly from the Gram matrix."""
        if "norm" not in self._cache:
            if self.is_identity:
                val = 1.0
            else:
                eig = np.linalg.eigvalsh(self.gram())
                val = math.sqrt(max(float(eig[-1]), 0.0))
            self._cache["norm"] = val
        return self._cache["norm"]

    def sketch_rows(self, m: np.ndarray) -> np.ndarray:
        """``S @ m`` for a ``d x k`` array."""
        if self.is_identity:
            return np.array(m, dtype=float, copy=True)
        if self._block is not None:
            return self._block @ m
        return np.asarray(self.csr @ m)

    def sketch_cols(self, m: np.ndarray) -> np.ndarray:
        """``m @ S^T`` for an ``n x d`` array (e.g. the reduced Jacobian)."""
        if self.is_identity:
            return np.array(m, dtype=float, copy=True)
        if self._block is not None:
            return m @ self._block.T
        return np.asarray((self.csr @ np.asarray(m).T).T)


def _draw_gaussian(spec, rng):
    return SketchMatrix(spec, dense=rng.standard_normal((spec.l, spec.d)) / math.sqrt(spec.l))


def _signs(rng, size):
    return np.where(rng.integers(0, 2, size=size) == 1, 1.0, -1.0)


def _draw_s_hashing(spec, rng):
    l, d, s = spec.l, spec.d, spec.s
    # s distinct rows per column: first s entries of a random permutation of [l]
    keys = rng.random((d, l))
    rows = np.argpartition(keys, s - 1, axis=1)[:, :s] if s < l else np.tile(np.arange(l), (d, 1))
    rows = np.sort(rows, axis=1).ravel()
    cols = np.repeat(np.arange(d), s)
    vals = _signs(rng, d * s) / math.sqrt(s)
    return SketchMatrix(spec, rows=rows, cols=cols, vals=vals)


def _draw_stable_one_hashing(spec, rng):
    l, d = spec.l, spec.d
    pool = np.tile(np.arange(l), math.ceil(d / l))
    rows = rng.permutation(pool)[:d]
    return SketchMatrix(spec, rows=rows, cols=np.arange(d), vals=_signs(rng, d))


def _draw_sampling(spec, rng):
    l, d = spec.l, spec.d
    picked = rng.choice(d, size=l, replace=False)
    order = np.argsort(picked, kind="stable")
    return SketchMatrix(spec, rows=order.astype(np.int64), cols=picked[order],
                        vals=np.full(l, math.sqrt(d / l)))


_DRAWERS = {
    SketchKind.GAUSSIAN: _draw_gaussian,
    SketchKind.S_HASHING: _draw_s_hashing,
    SketchKind.STABLE_ONE_HASHING: _draw_stable_one_hashing,
    SketchKind.SAMPLING: _draw_sampling,
}


def draw(spec: SketchSpec, rng: np.random.Generator | None = None) -> SketchMatrix:
    """Draw one sketch from the ensemble described by ``spec``.

    Args:
      spec: ensemble kind and shape.
      rng: generator to consume. When ``None`` a fresh generator is seeded from
        ``spec.seed``, so equal specs with a seed give identical matrices.
    """
    if spec.kind is SketchKind.IDENTITY:
        return SketchMatrix(spec)
    if rng is None:
        rng = make_rng(spec.seed)
    return _DRAWERS[spec.kind](spec, rng)


def _check_vec(v, n, what):
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.shape[0] != n:
        raise SketchError(f"{what} must have length {n}, got shape {v.shape}")
    return v


def apply(S: SketchMatrix, v: np.ndarray) -> np.ndarray:
    """``S v`` for a length-``d`` vector."""
    l, d = S.shape
    v = _check_vec(v, d, "v")
    if S.is_identity:
        return v.copy()
    if S.dense is not None:
        return S.dense @ v
    return np.bincount(S.rows, weights=S.vals * v[S.cols], minlength=l)


def apply_transpose(S: SketchMatrix, shat: np.ndarray) -> np.ndarray:
    """``S^T shat`` for a length-``l`` vector (the step prolongation)."""
    l, d = S.shape
    shat = _check_vec(shat, l, "shat")
    if S.is_identity:
        return shat.copy()
    if S.dense is not None:
        return S.dense.T @ shat
    return np.bincount(S.cols, weights=S.vals * shat[S.rows], minlength=d)


@dataclass(frozen=True)
class EnsembleTheory:
    """Closed-form embedding and norm parameters of an ensemble.

    ``delta1`` bounds the probability that ``||S y||^2 < (1 - eps_s) ||y||^2``
    for a fixed ``y``; ``delta2`` bounds ``P(||S|| > s_max)``.
    """

    eps_s: float
    delta1: float
    delta2: float
    s_max: float
    nu: float | None = None

    @property
    def delta_s(self) -> float:
        return self.delta1 + self.delta2


def theory_params(spec: SketchSpec, eps_s: float, delta2: float | None = None,
                  nu: float | None = None, c1: float = 1.0, c3: float = 1.0) -> EnsembleTheory:
    """Embedding failure bound and norm bound for ``spec``'s ensemble.

    ``c1`` and ``c3`` are the unspecified absolute constants of the s-hashing
    and stable 1-hashing embedding results; the defaults of 1 are placeholders,
    so only the ``s_max`` entries are meaningful for those two kinds.

    The s-hashing ``s_max = sqrt(d / s)`` is the customary tabulated value but
    not a worst-case bound: when ``l`` is close to ``s`` rows can align and
    ``||S||`` exceeds it (the Frobenius norm ``sqrt(d)`` always bounds it).

    Raises:
      SketchError: ``eps_s`` outside the kind's admissible interval, or a
        missing ``delta2`` (Gaussian) / ``nu`` (sampling).
    """
    kind, l, d = spec.kind, spec.l, spec.d
    upper = 0.75 if kind is SketchKind.STABLE_ONE_HASHING else 1.0
    if not 0.0 < eps_s < upper:
        raise SketchError(f"eps_s must lie in (0, {upper}) for {kind.value}, got {eps_s}")

    if kind is SketchKind.GAUSSIAN:
        if delta2 is None or not 0.0 < delta2 < 1.0:
            raise SketchError("gaussian ensemble needs delta2 in (0, 1)")
        s_max = 1.0 + math.sqrt(d / l) + math.sqrt(2.0 * math.log(1.0 / delta2) / l)
        return EnsembleTheory(eps_s, math.exp(-eps_s**2 * l / 4.0), delta2, s_max)
    if kind is SketchKind.S_HASHING:
        return EnsembleTheory(eps_s, math.exp(-l * eps_s**2 / c1), 0.0, math.sqrt(d / spec.s))
    if kind is SketchKind.STABLE_ONE_HASHING:
        return EnsembleTheory(eps_s, math.exp(-l * (eps_s - 0.25) ** 2 / c3), 0.0,
                              math.sqrt(math.ceil(d / l)))
    if kind is SketchKind.SAMPLING:
        if nu is None or not 0.0 < nu <= 1.0:
            raise SketchError("sampling ensemble needs the gradient non-uniformity nu in (0, 1]")
        return EnsembleTheory(eps_s, math.exp(-eps_s**2 * l / (2.0 * d * nu**2)), 0.0,
                              math.sqrt(d / l), nu)
    return EnsembleTheory(eps_s, 0.0, 0.0, 1.0)


def embedding_trial(spec: SketchSpec, y: np.ndarray, eps_s: float, trials: int,
                    rng: np.random.Generator | None = None) -> float:
    """Empirical rate at which fresh sketches fail ``||S y||^2 >= (1 - eps_s) ||y||^2``."""
    y = _check_vec(y, spec.d, "y")
    if trials < 1:
        raise SketchError("trials must be >= 1")
    ynorm2 = float(y @ y)
    if ynorm2 == 0.0:
        raise SketchError("y = 0 makes the embedding condition trivial")
    if rng is None:
        rng = make_rng(spec.seed)
    threshold = (1.0 - eps_s) * ynorm2
    failures = 0
    for _ in range(trials):
        sy = apply(draw(spec, rng), y)
        failures += float(sy @ sy) < threshold
    return failures / trials


def grow(S: SketchMatrix, l_new: int, rng: np.random.Generator) -> SketchMatrix:
    """Enlarge a sketch to ``l_new`` rows.

    Sampling sketches keep their selected coordinates and add fresh distinct
    ones (rescaled to ``sqrt(d / l_new)``); every other kind is redrawn.
    """
    spec = S.spec.with_l(l_new)
    if l_new < S.spec.l:
        raise SketchError("grow cannot shrink a sketch")
    if S.spec.kind is not SketchKind.SAMPLING:
        return draw(spec, rng)
    d = spec.d
    unused = np.setdiff1d(np.arange(d), S.cols, assume_unique=True)
    extra = rng.choice(unused, size=l_new - S.spec.l, replace=False)
    picked = np.concatenate([S.cols, extra])
    order = np.argsort(picked, kind="stable")
    return SketchMatrix(spec, rows=order.astype(np.int64), cols=picked[order],
                        vals=np.full(l_new, math.sqrt(d / l_new)))
