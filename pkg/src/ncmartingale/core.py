"""Finite filtered trace spaces of matrix-valued operators.

The model is M = l_inf(S; M_n(C)): a finite sample space of S weighted
sites, each carrying an n x n complex matrix, with the normalized trace

    tau(x) = sum_s mu_s * Tr(x_s) / n,        sum_s mu_s = 1.

A chain of refining partitions of the sites plays the role of an
increasing filtration; the conditional expectation onto level k is the
weighted average over the level-k cells (acting as the identity on the
matrix factor).  Martingale conventions: x_0 = 0 and E_0 = E_1.

Everything here is immutable after construction and every operation is a
pure function, so values can be shared across threads and evaluated
sitewise in parallel without synchronization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "NonHermitianInput",
    "NegativeSpectrum",
    "TraceSpace",
    "Operator",
    "MartingaleDiffs",
    "ProjectionWitness",
    "make_dyadic_space",
    "identity",
    "zero",
    "trace",
    "cond_exp",
    "partial_sum",
    "martingale_diffs",
    "is_level_measurable",
    "level_deviation",
    "herm_calculus",
    "supports",
    "operator_norm",
    "singular_values",
    "abs2",
    "space_to_json",
    "space_from_json",
    "operator_to_json",
    "operator_from_json",
]

# Relative thresholds used by the spectral calculus and measurability
# tests.  All of them scale with the operator norm of the input.
HERMITIAN_RTOL = 1e-8
SPECTRUM_RTOL = 1e-6
CLIP_RTOL = 1e-10
MEASURABLE_RTOL = 1e-12
SUPPORT_RTOL = 1e-12


class NonHermitianInput(ValueError):
    """Spectral calculus received an operator that is not selfadjoint."""


class NegativeSpectrum(ValueError):
    """Spectral calculus received an operator with a clearly negative eigenvalue."""


def _adj_mats(mats: np.ndarray) -> np.ndarray:
    return np.conj(np.transpose(mats, (0, 2, 1)))


@dataclass(frozen=True, eq=False)
class TraceSpace:
    """Weighted finite sample space with a refining partition chain.

    weights    -- site weights mu_s > 0 summing to 1
    matrix_dim -- size n of the matrix factor carried by every site
    partitions -- int array of shape (levels, sites); row k-1 holds the
                  level-k cell id of every site.  Level k+1 refines level
                  k, and the last level separates all sites.
    """

    weights: np.ndarray
    matrix_dim: int
    partitions: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        parts = np.array(self.partitions, dtype=np.int64)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a nonempty vector")
        if np.any(w <= 0.0):
            raise ValueError("site weights must be positive")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise ValueError("site weights must sum to 1 (normalized trace)")
        if int(self.matrix_dim) < 1:
            raise ValueError("matrix_dim must be a positive integer")
        if parts.ndim != 2 or parts.shape[0] < 1 or parts.shape[1] != w.size:
            raise ValueError("partitions must have shape (levels, sites)")
        for k in range(1, parts.shape[0]):
            fine, coarse = parts[k], parts[k - 1]
            for cell in np.unique(fine):
                if np.unique(coarse[fine == cell]).size > 1:
                    raise ValueError(f"partition level {k + 1} does not refine level {k}")
        if np.unique(parts[-1]).size != w.size:
            raise ValueError("the final partition level must separate all sites")
        w.setflags(write=False)
        parts.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "partitions", parts)
        object.__setattr__(self, "matrix_dim", int(self.matrix_dim))

    @property
    def site_count(self) -> int:
        return self.weights.size

    @property
    def levels(self) -> int:
        return self.partitions.shape[0]

    @cached_property
    def _cells(self):
        out = []
        for k in range(self.levels):
            row = self.partitions[k]
            out.append(tuple(np.flatnonzero(row == c) for c in np.unique(row)))
        return tuple(out)

    def cells(self, level: int):
        """Site-index arrays of the level-`level` cells (1-based level)."""
        if not 1 <= level <= self.levels:
            raise ValueError(f"level must be in 1..{self.levels}, got {level}")
        return self._cells[level - 1]

    def cell_weight(self, sites: np.ndarray) -> float:
        return float(self.weights[sites].sum())


@dataclass(frozen=True, eq=False)
class Operator:
    """Site-indexed family of n x n complex matrices; an element of M.

    Immutable.  Arithmetic is sitewise: ``x @ y`` multiplies matrices,
    ``x.adjoint()`` conjugate-transposes them.
    """

    space: TraceSpace
    mats: np.ndarray

    def __post_init__(self):
        n, s = self.space.matrix_dim, self.space.site_count
        mats = np.array(self.mats, dtype=np.complex128)
        if mats.shape != (s, n, n):
            raise ValueError(f"mats must have shape ({s}, {n}, {n}), got {mats.shape}")
        mats.setflags(write=False)
        object.__setattr__(self, "mats", mats)

    @cached_property
    def _cache(self) -> dict:
        # private memo for conditional expectations, norms, diffs
        return {}

    def adjoint(self) -> "Operator":
        cached = self._cache.get("adj")
        if cached is None:
            cached = Operator(self.space, _adj_mats(self.mats))
            cached._cache["adj"] = self
            self._cache["adj"] = cached
        return cached

    def __add__(self, other: "Operator") -> "Operator":
        self._check_same_space(other)
        return Operator(self.space, self.mats + other.mats)

    def __sub__(self, other: "Operator") -> "Operator":
        self._check_same_space(other)
        return Operator(self.space, self.mats - other.mats)

    def __neg__(self) -> "Operator":
        return Operator(self.space, -self.mats)

    def __mul__(self, scalar) -> "Operator":
        return Operator(self.space, self.mats * complex(scalar))

    __rmul__ = __mul__

    def __matmul__(self, other: "Operator") -> "Operator":
        self._check_same_space(other)
        return Operator(self.space, self.mats @ other.mats)

    def _check_same_space(self, other: "Operator") -> None:
        if other.space is not self.space and (
            other.space.site_count != self.space.site_count
            or other.space.matrix_dim != self.space.matrix_dim
        ):
            raise ValueError("operators live on incompatible trace spaces")


@dataclass(frozen=True, eq=False)
class MartingaleDiffs:
    """The difference sequence dx_1..dx_K of an operator (dx_1 = E_1 x)."""

    diffs: tuple
    source: Operator


@dataclass(frozen=True, eq=False)
class ProjectionWitness:
    """A projection measurable at a given level, with tau(e) > 0.

    Used as the deflator e / tau(e)^{1/p} inside the projection-indexed
    John-Nirenberg functionals.
    """

    level: int
    proj: Operator
    trace_value: float

    @staticmethod
    def make(proj: Operator, level: int, rtol: float = 1e-10) -> "ProjectionWitness":
        scale = max(operator_norm(proj), 1.0)
        herm = operator_norm(proj - proj.adjoint())
        idem = operator_norm(proj @ proj - proj)
        if herm > rtol * scale or idem > rtol * scale:
            raise ValueError("witness is not a projection (e = e* = e^2 fails)")
        if not is_level_measurable(proj, level, rtol=1e-10):
            raise ValueError(f"witness is not measurable at level {level}")
        tv = float(trace(proj).real)
        if tv <= 0.0:
            raise ValueError("witness must have positive trace")
        return ProjectionWitness(level=level, proj=proj, trace_value=tv)


def make_dyadic_space(depth: int, matrix_dim: int) -> TraceSpace:
    """Uniform dyadic space: 2^depth sites, level k groups by the first k bits."""
    if depth < 1:
        raise ValueError("depth must be a positive integer")
    if matrix_dim < 1:
        raise ValueError("matrix_dim must be a positive integer")
    s = 1 << depth
    sites = np.arange(s, dtype=np.int64)
    partitions = np.stack([sites >> (depth - k) for k in range(1, depth + 1)])
    weights = np.full(s, 1.0 / s)
    return TraceSpace(weights=weights, matrix_dim=matrix_dim, partitions=partitions)


def identity(space: TraceSpace) -> Operator:
    eye = np.broadcast_to(np.eye(space.matrix_dim, dtype=np.complex128),
                          (space.site_count, space.matrix_dim, space.matrix_dim))
    return Operator(space, eye.copy())


def zero(space: TraceSpace) -> Operator:
    return Operator(space, np.zeros((space.site_count, space.matrix_dim, space.matrix_dim),
                                    dtype=np.complex128))


def trace(x: Operator) -> complex:
    """Normalized trace tau(x) = sum_s mu_s Tr(x_s)/n."""
    site_traces = np.trace(x.mats, axis1=1, axis2=2)
    return complex(np.dot(x.space.weights, site_traces) / x.space.matrix_dim)


def cond_exp(x: Operator, k: int) -> Operator:
    """Conditional expectation onto level k (weighted cell average).

    k = 0 is treated as k = 1; k > levels is rejected.
    """
    space = x.space
    if k < 0 or k > space.levels:
        raise ValueError(f"level must be in 0..{space.levels}, got {k}")
    if k == 0:
        k = 1
    cached = x._cache.get(("ce", k))
    if cached is not None:
        return cached
    out = np.empty_like(x.mats)
    for sites in space.cells(k):
        cw = space.weights[sites]
        out[sites] = np.tensordot(cw, x.mats[sites], axes=(0, 0)) / cw.sum()
    result = Operator(space, out)
    x._cache[("ce", k)] = result
    return result


def partial_sum(x: Operator, k: int) -> Operator:
    """The martingale x_k = E_k(x), with the convention x_0 = 0."""
    if k == 0:
        return zero(x.space)
    return cond_exp(x, k)


def martingale_diffs(x: Operator) -> MartingaleDiffs:
    """dx_1 = E_1 x and dx_k = E_k x - E_{k-1} x for k >= 2."""
    cached = x._cache.get("diffs")
    if cached is not None:
        return cached
    prev = zero(x.space)
    diffs = []
    for k in range(1, x.space.levels + 1):
        cur = cond_exp(x, k)
        diffs.append(cur - prev)
        prev = cur
    result = MartingaleDiffs(diffs=tuple(diffs), source=x)
    x._cache["diffs"] = result
    return result


def level_deviation(x: Operator, level: int) -> float:
    """Operator-norm deviation of x from its level-cell averages."""
    return operator_norm(x - cond_exp(x, level))


def is_level_measurable(x: Operator, level: int, rtol: float = MEASURABLE_RTOL) -> bool:
    return level_deviation(x, level) <= rtol * operator_norm(x)


def singular_values(x: Operator) -> np.ndarray:
    """Descending singular values per site, shape (sites, n)."""
    return np.linalg.svd(x.mats, compute_uv=False)


def operator_norm(x: Operator) -> float:
    """The L_inf norm: largest singular value over all sites."""
    cached = x._cache.get("opnorm")
    if cached is None:
        cached = float(singular_values(x).max()) if x.space.site_count else 0.0
        x._cache["opnorm"] = cached
    return cached


def abs2(x: Operator) -> Operator:
    """|x|^2 = x* x, hermitized to tame roundoff."""
    h = _adj_mats(x.mats) @ x.mats
    return Operator(x.space, (h + _adj_mats(h)) / 2.0)


def _eigh(x: Operator):
    h = (x.mats + _adj_mats(x.mats)) / 2.0
    return np.linalg.eigh(h)


def _require_hermitian(x: Operator) -> None:
    scale = operator_norm(x)
    if operator_norm(x - x.adjoint()) > HERMITIAN_RTOL * max(scale, 1e-300):
        raise NonHermitianInput("input is not selfadjoint within tolerance")


def _gate_spectrum(w: np.ndarray, scale: float) -> np.ndarray:
    if w.size and float(w.min()) < -SPECTRUM_RTOL * max(scale, 1e-300):
        raise NegativeSpectrum(f"eigenvalue {w.min():.3e} below -{SPECTRUM_RTOL:.0e}*scale")
    return np.clip(w, 0.0, None)


def _recompose(space: TraceSpace, w: np.ndarray, v: np.ndarray) -> Operator:
    mats = np.einsum("sij,sj,skj->sik", v, w, np.conj(v))
    return Operator(space, mats)


def herm_calculus(x: Operator, kind: str, param: float | None = None) -> Operator:
    """Sitewise spectral calculus.

    kind = "abs-power":  |x|^alpha via (x* x)^{alpha/2}; accepts any x.
    kind = "sqrt":       square root of a selfadjoint PSD operator.
    kind = "indicator":  spectral projection 1_{(lambda, inf)} of a
                         selfadjoint PSD operator (param = lambda).
    kind = "exp-scale":  exp(s * x) of a selfadjoint operator (param = s).

    Eigenvalues of PSD inputs in [-1e-6*scale, 0) are clipped to 0;
    anything lower raises NegativeSpectrum.
    """
    if kind == "abs-power":
        if param is None or param <= 0:
            raise ValueError("abs-power needs a positive exponent")
        w, v = _eigh(abs2(x))
        w = np.clip(w, 0.0, None)
        return _recompose(x.space, w ** (param / 2.0), v)
    if kind == "sqrt":
        _require_hermitian(x)
        w, v = _eigh(x)
        w = _gate_spectrum(w, operator_norm(x))
        return _recompose(x.space, np.sqrt(w), v)
    if kind == "indicator":
        if param is None:
            raise ValueError("indicator needs a threshold lambda")
        _require_hermitian(x)
        w, v = _eigh(x)
        w = _gate_spectrum(w, operator_norm(x))
        return _recompose(x.space, (w > float(param)).astype(np.float64), v)
    if kind == "exp-scale":
        _require_hermitian(x)
        s = 1.0 if param is None else float(param)
        w, v = _eigh(x)
        return _recompose(x.space, np.exp(s * w), v)
    raise ValueError(f"unknown calculus kind: {kind!r}")


def supports(x: Operator) -> tuple[Operator, Operator]:
    """(left support, right support) of x as projection-valued operators.

    r(x) is the spectral projection of x* x above eps = 1e-12 * |x|_inf^2,
    the least projection with x r(x) = x; l(x) analogously from x x*.
    """
    eps = SUPPORT_RTOL * operator_norm(x) ** 2
    right = herm_calculus(abs2(x), "indicator", eps)
    left = herm_calculus(abs2(x.adjoint()), "indicator", eps)
    return left, right


# ---------------------------------------------------------------------------
# JSON wire format
#
# Operator: {"space": {"weights": [...], "matrix_dim": n,
#                      "partitions": [[cell id per site] per level]},
#            "mats": [[[re, im], ...] row-major per site]}
# Floats survive a JSON round trip bit-exactly (shortest-repr encoding).
# ---------------------------------------------------------------------------


def space_to_json(space: TraceSpace) -> dict:
    return {
        "weights": [float(w) for w in space.weights],
        "matrix_dim": space.matrix_dim,
        "partitions": [[int(c) for c in row] for row in space.partitions],
    }


def space_from_json(data: dict) -> TraceSpace:
    return TraceSpace(
        weights=np.asarray(data["weights"], dtype=np.float64),
        matrix_dim=int(data["matrix_dim"]),
        partitions=np.asarray(data["partitions"], dtype=np.int64),
    )


def operator_to_json(x: Operator) -> dict:
    n = x.space.matrix_dim
    mats = []
    for s in range(x.space.site_count):
        flat = x.mats[s].reshape(n * n)
        mats.append([[float(z.real), float(z.imag)] for z in flat])
    return {"space": space_to_json(x.space), "mats": mats}


def operator_from_json(data: dict, space: TraceSpace | None = None) -> Operator:
    if space is None:
        space = space_from_json(data["space"])
    n = space.matrix_dim
    raw = data["mats"]
    if len(raw) != space.site_count:
        raise ValueError(f"expected {space.site_count} site matrices, got {len(raw)}")
    mats = np.empty((space.site_count, n, n), dtype=np.complex128)
    for s, entries in enumerate(raw):
        if len(entries) != n * n:
            raise ValueError(f"site {s}: expected {n * n} entries, got {len(entries)}")
        flat = np.array([complex(re, im) for re, im in entries], dtype=np.complex128)
        mats[s] = flat.reshape(n, n)
    return Operator(space, mats)


def operator_dumps(x: Operator, **kwargs) -> str:
    return json.dumps(operator_to_json(x), **kwargs)


def operator_loads(text: str) -> Operator:
    return operator_from_json(json.loads(text))
