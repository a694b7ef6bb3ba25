"""Norm families over the finite model.

Lp (quasi-)norms from singular values, the column/row square functions
S_c, s_c and their row analogues, the Hardy norms H_p^c, h_p^c, h_p^d,
and the bmo / BMO families.  Row norms are always evaluated by applying
the column machinery to the adjoint, so column/row duality holds exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    Operator,
    abs2,
    cond_exp,
    herm_calculus,
    martingale_diffs,
    operator_norm,
    partial_sum,
    singular_values,
    zero,
)

__all__ = [
    "NormReport",
    "lp_norm",
    "square_functions",
    "hardy_norm",
    "bmo_norm",
    "h1_upper",
    "conditional_square_tail",
    "HARDY_FAMILIES",
    "BMO_FAMILIES",
]

HARDY_FAMILIES = ("Hc", "Hr", "hc", "hr", "hd")
BMO_FAMILIES = ("bmo_c", "bmo_r", "bmo_d", "bmo", "BMO_c", "BMO_r", "BMO")

# Spectra are denoised at this relative floor before fractional powers are
# taken: eigenvalues of squared quantities carry absolute error ~eps*max,
# and sqrt turns that into ~1e-8 absolute noise in singular values, which
# would overwhelm the 1e-9 tolerances of the direction checks.
_NOISE_REL = 1e-13


def _denoise(values: np.ndarray) -> np.ndarray:
    vals = np.clip(values, 0.0, None)
    top = float(vals.max()) if vals.size else 0.0
    if top <= 0.0:
        return np.zeros_like(vals)
    return np.where(vals < _NOISE_REL * top, 0.0, vals)


@dataclass(frozen=True)
class NormReport:
    """One evaluated norm.  argmax_level records which level attains the
    sup in BMO-type norms (0 when the E_1 term wins), None otherwise."""

    family: str
    p: float
    value: float
    argmax_level: int | None = None

    def to_json(self) -> dict:
        return {
            "family": self.family,
            "p": "inf" if math.isinf(self.p) else self.p,
            "value": self.value,
            "argmax_level": self.argmax_level,
        }


def lp_norm(x: Operator, p: float) -> float:
    """(tau |x|^p)^{1/p}; p = inf is the largest singular value over sites."""
    if not p > 0:
        raise ValueError("p must be positive")
    if math.isinf(p):
        return operator_norm(x)
    sv = _denoise(singular_values(x))
    moments = (sv ** p).mean(axis=1)  # (1/n) sum_i sigma_i^p per site
    return float(np.dot(x.space.weights, moments) ** (1.0 / p))


def _lp_of_psd_sqrt(sq: Operator, p: float) -> float:
    """|sqrt(sq)|_p from the eigenvalues of the PSD operator sq, without
    forming the square root operator."""
    h = (sq.mats + np.conj(np.transpose(sq.mats, (0, 2, 1)))) / 2.0
    w = _denoise(np.linalg.eigvalsh(h))
    if math.isinf(p):
        return float(np.sqrt(w.max())) if w.size else 0.0
    moments = (w ** (p / 2.0)).mean(axis=1)
    return float(np.dot(sq.space.weights, moments) ** (1.0 / p))


def conditional_square_tail(x: Operator, n: int) -> Operator:
    """sum_{k>n} E_{k-1} |dx_k|^2, the square of s_c(x - x_n)."""
    key = ("sqtail", n)
    cached = x._cache.get(key)
    if cached is not None:
        return cached
    out = zero(x.space)
    for k, d in enumerate(martingale_diffs(x).diffs, start=1):
        if k > n:
            out = out + cond_exp(abs2(d), k - 1)
    x._cache[key] = out
    return out


def square_functions(x: Operator):
    """(S_c, s_c, S_r, s_r) with S_c = (sum |dx_k|^2)^{1/2} and
    s_c = (sum E_{k-1} |dx_k|^2)^{1/2} (E_0 = E_1); rows via x*."""

    def column_pair(y: Operator):
        big = zero(y.space)
        small = zero(y.space)
        for k, d in enumerate(martingale_diffs(y).diffs, start=1):
            sq = abs2(d)
            big = big + sq
            small = small + cond_exp(sq, k - 1)
        return herm_calculus(big, "sqrt"), herm_calculus(small, "sqrt")

    s_big_c, s_small_c = column_pair(x)
    s_big_r, s_small_r = column_pair(x.adjoint())
    return s_big_c, s_small_c, s_big_r, s_small_r


def hardy_norm(x: Operator, family: str, p: float) -> float:
    """H_p^c = |S_c(x)|_p, h_p^c = |s_c(x)|_p, h_p^d the l_p sum of
    difference norms (sup over levels at p = inf); rows via x*."""
    if not p > 0:
        raise ValueError("p must be positive")
    if family == "Hr":
        return hardy_norm(x.adjoint(), "Hc", p)
    if family == "hr":
        return hardy_norm(x.adjoint(), "hc", p)
    if family == "Hc":
        sq = zero(x.space)
        for d in martingale_diffs(x).diffs:
            sq = sq + abs2(d)
        return _lp_of_psd_sqrt(sq, p)
    if family == "hc":
        return _lp_of_psd_sqrt(conditional_square_tail(x, 0), p)
    if family == "hd":
        per_level = [lp_norm(d, p) for d in martingale_diffs(x).diffs]
        if math.isinf(p):
            return max(per_level)
        return float(sum(v ** p for v in per_level) ** (1.0 / p))
    raise ValueError(f"unknown Hardy family: {family!r}")


def column_p2_profile(x: Operator, center_prev: bool):
    """Per level n: (|E_n |x - x_c|^2|_inf^{1/2}, best cell sites, top
    eigenvector), with c = n-1 if center_prev else n (and x_0 = 0).

    This is simultaneously the level profile of the bmo/BMO column norms
    and the p = 2 optimal-deflator profile: the supremum of
    |(x - x_c) b|_2 over the unit 2-ball of the level algebra equals the
    sup norm above and is attained at b = e / tau(e)^{1/2} with
    e = 1_C (x) vv*.
    """
    key = ("p2prof", center_prev)
    cached = x._cache.get(key)
    if cached is not None:
        return cached
    space = x.space
    out = []
    for n in range(1, space.levels + 1):
        c = n - 1 if center_prev else n
        a = cond_exp(abs2(x - partial_sum(x, c)), n)
        best_val, best_sites, best_vec = 0.0, None, None
        for sites in space.cells(n):
            m = a.mats[sites[0]]
            m = (m + np.conj(m.T)) / 2.0
            w, v = np.linalg.eigh(m)
            if w[-1] > best_val:
                best_val, best_sites, best_vec = float(w[-1]), sites, v[:, -1]
        out.append((math.sqrt(max(best_val, 0.0)), best_sites, best_vec))
    result = tuple(out)
    x._cache[key] = result
    return result


def _bmo_column(x: Operator) -> tuple[float, int]:
    """max(|E_1 x|_inf, sup_n |E_n |x - x_n|^2|_inf^{1/2}) with argmax."""
    best, level = operator_norm(cond_exp(x, 1)), 0
    for n, (v, _, _) in enumerate(column_p2_profile(x, False), start=1):
        if v > best:
            best, level = v, n
    return best, level


def _big_bmo_column(x: Operator) -> tuple[float, int]:
    """sup_n |E_n |x - x_{n-1}|^2|_inf^{1/2} with x_0 = 0, and its argmax."""
    best, level = -1.0, 0
    for n, (v, _, _) in enumerate(column_p2_profile(x, True), start=1):
        if v > best:
            best, level = v, n
    return best, level


def bmo_norm(x: Operator, family: str) -> NormReport:
    """bmo_c, bmo_r, bmo_d, bmo, BMO_c, BMO_r, BMO as NormReports."""
    cached = x._cache.get(("bmo", family))
    if cached is not None:
        return cached

    if family == "bmo_c":
        value, level = _bmo_column(x)
    elif family == "bmo_r":
        value, level = _bmo_column(x.adjoint())
    elif family == "bmo_d":
        per = [operator_norm(d) for d in martingale_diffs(x).diffs]
        value = max(per)
        level = int(np.argmax(per)) + 1
    elif family == "bmo":
        parts = [bmo_norm(x, f) for f in ("bmo_c", "bmo_r", "bmo_d")]
        best = max(parts, key=lambda r: r.value)
        value, level = best.value, best.argmax_level
    elif family == "BMO_c":
        value, level = _big_bmo_column(x)
    elif family == "BMO_r":
        value, level = _big_bmo_column(x.adjoint())
    elif family == "BMO":
        parts = [bmo_norm(x, f) for f in ("BMO_c", "BMO_r")]
        best = max(parts, key=lambda r: r.value)
        value, level = best.value, best.argmax_level
    else:
        raise ValueError(f"unknown bmo family: {family!r}")

    report = NormReport(family=family, p=math.inf, value=value, argmax_level=level)
    x._cache[("bmo", family)] = report
    return report


def h1_upper(x: Operator, family: str) -> float:
    """Certified upper bound on the sum-space norm at p = 1.

    The true norm is an infimum over decompositions; each single-component
    decomposition is feasible, so the minimum of the component norms is a
    sound upper bound.  family = "h1" uses (h_1^c, h_1^r, h_1^d),
    family = "H1" uses (H_1^c, H_1^r).
    """
    if family == "h1":
        return min(hardy_norm(x, f, 1.0) for f in ("hc", "hr", "hd"))
    if family == "H1":
        return min(hardy_norm(x, f, 1.0) for f in ("Hc", "Hr"))
    raise ValueError(f"unknown sum-space family: {family!r}")
