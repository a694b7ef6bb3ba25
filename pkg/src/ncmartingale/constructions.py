"""Named extremal constructions and seeded random samplers.

The two named instances drive the verification harness:

* ``rademacher_row(n)``: the row martingale x = sum_k r_k (x) e_{1k} on the
  depth-n dyadic space with an n x n matrix factor.  Its tail norms obey
  the closed form sup_m |x - x_m|_p = (n-1)^{1/2} n^{-1/p} while its
  column bmo norm stays 1, so the gap grows without bound in n for p > 2.

* ``bmo_p_blowup_instance(n, p)`` (0 < p < 2): a +-1 coin at a final
  two-point level times a matched Rademacher-row deflator.  The deflator
  certifies a lower bound n^{1/p-1/2} for the column H_p functional of
  the coin, whose two-sided p = 2 norm is exactly 1 -- the ratio doubles
  with every doubling of n at p = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    Operator,
    ProjectionWitness,
    TraceSpace,
    abs2,
    cond_exp,
    herm_calculus,
    identity,
    make_dyadic_space,
    martingale_diffs,
    operator_norm,
    operator_to_json,
    space_to_json,
    zero,
)
from .norms import bmo_norm, lp_norm, square_functions
from .seeds import split_rng

__all__ = [
    "NamedInstance",
    "rademacher_row",
    "bmo_p_blowup_instance",
    "sweep",
    "sweep_growth_experiment",
    "operator_convexity_checks",
    "conditional_cauchy_schwarz_check",
    "random_martingale",
    "random_projection",
    "InequalityFailure",
]

RADEMACHER_RANGE = (2, 10)
BLOWUP_RANGE = (2, 8)


class InequalityFailure(AssertionError):
    """An asserted operator inequality failed; carries the instance."""

    def __init__(self, message: str, details: dict | None = None):
        super().__init__(message)
        self.details = details or {}


@dataclass(frozen=True, eq=False)
class NamedInstance:
    """A named operator with companions and expected values.

    ``expected`` maps a quantity name to {"value": float, "provenance":
    "closed-form" | "brute-force"}; every entry must reproduce under the
    norms module to 1e-9.
    """

    name: str
    space: TraceSpace
    x: Operator
    companions: dict = field(default_factory=dict)
    expected: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "space": space_to_json(self.space),
            "x": operator_to_json(self.x)["mats"],
            "companions": {k: operator_to_json(v)["mats"] for k, v in self.companions.items()},
            "expected": self.expected,
        }


def rademacher_signs(depth: int) -> np.ndarray:
    """(2^depth, depth) array; column k-1 is the level-k Rademacher sign.

    r_k depends on the k-th binary digit of the site index, so it is
    level-k measurable with E_{k-1} r_k = 0.
    """
    sites = np.arange(1 << depth)
    cols = [1.0 - 2.0 * ((sites >> (depth - k)) & 1) for k in range(1, depth + 1)]
    return np.stack(cols, axis=1)


def rademacher_row(n: int) -> NamedInstance:
    """The row martingale sum_k r_k (x) e_{1k} on the depth-n dyadic space."""
    lo, hi = RADEMACHER_RANGE
    if not lo <= n <= hi:
        raise ValueError(f"n must be in {lo}..{hi}, got {n}")
    space = make_dyadic_space(n, n)
    signs = rademacher_signs(n)
    mats = np.zeros((space.site_count, n, n), dtype=np.complex128)
    mats[:, 0, :] = signs
    x = Operator(space, mats)
    expected = {"bmo_c": {"value": 1.0, "provenance": "closed-form"}}
    for p in (1.0, 2.0, 3.0, 4.0, 8.0):
        expected[f"sup_tail_p{p:g}"] = {
            "value": math.sqrt(n - 1) * n ** (-1.0 / p),
            "provenance": "closed-form",
        }
    expected["square_function_lp"] = {"value": 1.0, "provenance": "brute-force"}
    return NamedInstance(name="rademacher-row", space=space, x=x, expected=expected)


def bmo_p_blowup_instance(n: int, p: float) -> NamedInstance:
    """Coin-times-deflator instance showing the column H_p functional of a
    norm-1 two-sided element can be as large as n^{1/p-1/2} for p < 2.

    The space is the depth-n dyadic space with a final two-point level
    (a +-1 coin).  x is the coin times the identity matrix (so all its
    partial sums below the top level vanish and its two-sided p = 2 norm
    is 1); the deflator a carries the coin sign times the L_p-normalized
    Rademacher row y, so that (x - x_{K-1}) a = y exactly.
    """
    lo, hi = BLOWUP_RANGE
    if not lo <= n <= hi:
        raise ValueError(f"n must be in {lo}..{hi}, got {n}")
    if not 0.0 < p < 2.0:
        raise ValueError(f"p must lie in (0, 2), got {p}")

    base_sites = 1 << n
    s = base_sites * 2
    sites = np.arange(s, dtype=np.int64)
    dyadic, coin = sites >> 1, sites & 1
    partitions = np.stack(
        [dyadic >> (n - k) for k in range(1, n + 1)] + [sites]
    )
    space = TraceSpace(weights=np.full(s, 1.0 / s), matrix_dim=n, partitions=partitions)

    signs = rademacher_signs(n)[dyadic]           # lifted to the doubled space
    scale = n ** (1.0 / p - 0.5)                  # makes |y|_p = 1
    y_mats = np.zeros((s, n, n), dtype=np.complex128)
    y_mats[:, 0, :] = signs * scale
    y = Operator(space, y_mats)

    coin_sign = (1.0 - 2.0 * coin)[:, None, None]
    x = Operator(space, coin_sign * np.broadcast_to(np.eye(n), (s, n, n)))
    a = Operator(space, coin_sign * y_mats)

    c_n = n ** (1.0 / p - 0.5)
    expected = {
        "core_unit_lp": {"value": 1.0, "provenance": "brute-force"},
        "core_hardy_col": {"value": c_n, "provenance": "brute-force"},
        "witness_value": {"value": c_n, "provenance": "brute-force"},
        "BMO_c_2": {"value": 1.0, "provenance": "closed-form"},
        "deflator_lp": {"value": 1.0, "provenance": "brute-force"},
    }
    return NamedInstance(
        name="bmo-blowup",
        space=space,
        x=x,
        companions={"deflator": a, "core": y},
        expected=expected,
    )


def sweep(b: Operator) -> Operator:
    """The sweep S(b) = sum_k |db_k|^2, i.e. the square of S_c(b).

    With the x_0 = 0 convention a constant b contributes |b|^2 at level 1.
    """
    out = zero(b.space)
    for d in martingale_diffs(b).diffs:
        out = out + abs2(d)
    return out


def sweep_growth_experiment(n_list, seed, budget: int = 40, depth: int = 4) -> list[dict]:
    """Random search for b with |b|_inf = 1 maximizing |S(b)|_{BMO_c}.

    Exploratory: emits best-found values and their ratio to (log(n+1))^2,
    with best-so-far semantics in the trial budget.  No assertions.
    """
    rows = []
    for n in n_list:
        space = make_dyadic_space(depth, n)
        best = 0.0
        for t in range(budget):
            rng = split_rng(seed, "sweep", n, t)
            b = _random_operator(space, rng, hermitian=bool(t % 2))
            b = b * (1.0 / max(operator_norm(b), 1e-300))
            val = bmo_norm(sweep(b), "BMO_c").value
            for _ in range(4):
                pert = _random_operator(space, rng, hermitian=False)
                cand = b + 0.3 * pert
                cand = cand * (1.0 / max(operator_norm(cand), 1e-300))
                cand_val = bmo_norm(sweep(cand), "BMO_c").value
                if cand_val > val:
                    b, val = cand, cand_val
            if val > best:
                best = val
        log_sq = math.log(n + 1) ** 2
        rows.append({
            "n": int(n),
            "depth": depth,
            "trials": budget,
            "best_value": best,
            "log_bound": log_sq,
            "ratio": best / log_sq,
        })
    return rows


def _min_eig(x: Operator) -> float:
    h = (x.mats + np.conj(np.transpose(x.mats, (0, 2, 1)))) / 2.0
    return float(np.linalg.eigvalsh(h).min())


def operator_convexity_checks(trials: int, seed, space: TraceSpace | None = None) -> dict:
    """Two operator-inequality steps on random positive pairs (x, y):

    (1) |(x-y)/2|^2 <= (|x|^2 + |y|^2)/2            (convexity of the square)
    (2) |(x-y)/2| <= (|x| + |y|_inf 1)/sqrt(2)      (via operator monotonicity
                                                     of the square root)

    Both are asserted as positive semidefiniteness of the difference with
    margin -1e-9 * scale.
    """
    if space is None:
        space = make_dyadic_space(3, 3)
    one = identity(space)
    min1 = min2 = math.inf
    for t in range(trials):
        rng = split_rng(seed, "convexity", t)
        x = _random_psd(space, rng)
        y = _random_psd(space, rng)
        scale = operator_norm(x) + operator_norm(y)
        half = 0.5 * (x - y)
        gap1 = 0.5 * (x @ x + y @ y) - half @ half
        m1 = _min_eig(gap1) / max(scale ** 2, 1e-300)
        y_inf = operator_norm(y)
        gap2 = (1.0 / math.sqrt(2.0)) * (x + y_inf * one) - herm_calculus(half, "abs-power", 1.0)
        m2 = _min_eig(gap2) / max(scale, 1e-300)
        min1, min2 = min(min1, m1), min(min2, m2)
        if m1 < -1e-9 or m2 < -1e-9:
            raise InequalityFailure(
                "operator convexity step failed",
                {"trial": t, "margin_square": m1, "margin_root": m2,
                 "x": operator_to_json(x), "y": operator_to_json(y)},
            )
    return {"trials": trials, "min_margin_square": min1, "min_margin_root": min2,
            "passed": True}


def conditional_cauchy_schwarz_check(x: Operator, m: int, p: float) -> dict:
    """Checks |E_m |x|^{(p+1)/2}|_inf <= |E_m |x|^p|_inf^{1/2} |E_m |x||_inf^{1/2}."""
    if not p > 0:
        raise ValueError("p must be positive")
    absx = herm_calculus(x, "abs-power", 1.0)
    lhs = operator_norm(cond_exp(herm_calculus(absx, "abs-power", (p + 1.0) / 2.0), m))
    rhs = math.sqrt(
        operator_norm(cond_exp(herm_calculus(absx, "abs-power", p), m))
        * operator_norm(cond_exp(absx, m))
    )
    if lhs > rhs * (1.0 + 1e-9) + 1e-15:
        raise InequalityFailure(
            "conditional Cauchy-Schwarz interpolation failed",
            {"m": m, "p": p, "lhs": lhs, "rhs": rhs, "x": operator_to_json(x)},
        )
    return {"m": m, "p": p, "lhs": lhs, "rhs": rhs, "passed": True}


def _random_operator(space: TraceSpace, rng: np.random.Generator,
                     hermitian: bool = False) -> Operator:
    shape = (space.site_count, space.matrix_dim, space.matrix_dim)
    g = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    if hermitian:
        g = (g + np.conj(np.transpose(g, (0, 2, 1)))) / 2.0
    return Operator(space, g)


def _random_psd(space: TraceSpace, rng: np.random.Generator) -> Operator:
    g = _random_operator(space, rng)
    return abs2(g)


def random_martingale(space: TraceSpace, scale: float, seed,
                      hermitian: bool = False) -> Operator:
    """Gaussian operator with the given entry scale; deterministic per seed."""
    rng = split_rng(seed, "martingale", int(hermitian))
    return _random_operator(space, rng, hermitian=hermitian) * scale


def _random_level_operator(space: TraceSpace, level: int,
                           rng: np.random.Generator) -> Operator:
    """Level-measurable Gaussian operator (one matrix per level cell)."""
    n = space.matrix_dim
    mats = np.empty((space.site_count, n, n), dtype=np.complex128)
    for sites in space.cells(level):
        g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        mats[sites] = g
    return Operator(space, mats)


def _frame_projection(n: int, rank: int, rng: np.random.Generator) -> np.ndarray:
    """Rank-`rank` orthogonal projection from an orthonormalized Gaussian frame."""
    if rank == 0:
        return np.zeros((n, n), dtype=np.complex128)
    g = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    q, _ = np.linalg.qr(g)
    return q @ np.conj(q.T)


def _random_projection(space: TraceSpace, level: int, rank_profile,
                       rng: np.random.Generator) -> ProjectionWitness:
    cells = space.cells(level)
    n = space.matrix_dim
    if isinstance(rank_profile, (int, np.integer)):
        ranks = [int(rank_profile)] * len(cells)
    else:
        ranks = [int(r) for r in rank_profile]
        if len(ranks) != len(cells):
            raise ValueError(f"rank profile must list {len(cells)} cells")
    if any(r < 0 or r > n for r in ranks):
        raise ValueError(f"ranks must lie in 0..{n}")
    mats = np.zeros((space.site_count, n, n), dtype=np.complex128)
    for sites, rank in zip(cells, ranks):
        mats[sites] = _frame_projection(n, rank, rng)
    return ProjectionWitness.make(Operator(space, mats), level)


def random_projection(space: TraceSpace, level: int, rank_profile, seed) -> ProjectionWitness:
    """Projection witness with the given per-cell ranks; deterministic per seed."""
    rng = split_rng(seed, "projection", level)
    return _random_projection(space, level, rank_profile, rng)
