"""Martingale atoms: validators, conversions, and the testable bounds.

Three atom notions over a level n and exponent q in (1, inf]:

* crude (factorized): a = y b with E_n(y) = 0, |b|_{q'} <= 1 and
  |y|_{h_q^c} <= 1 (or |y|_{bmo_c} <= 1 at q = inf); row version a = b y.
* projection-supported: E_n(a) = 0, a e = a for a level-n projection e,
  |a|_{h_q^c} <= tau(e)^{-1/q'} (or |a|_{bmo_c} <= tau(e)^{-1} at q = inf).
* plain: E_n(a) = 0, a e = a or e a = a, |a|_q <= tau(e)^{-1/q'}.

Support conditions r(a) <= e are checked as a e = a (equivalent and
numerically stabler than computing supports).  Every projection-supported
atom converts constructively to a crude one via y = a tau(e)^{1/q'},
b = e tau(e)^{-1/q'}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import (
    Operator,
    ProjectionWitness,
    TraceSpace,
    cond_exp,
    identity,
    is_level_measurable,
    operator_norm,
    operator_to_json,
    trace,
)
from .norms import bmo_norm, h1_upper, hardy_norm, lp_norm
from .jn import bmo_c2_exact
from .constructions import _random_level_operator, _random_operator, _random_projection
from .seeds import split_rng

__all__ = [
    "AtomCertificate",
    "MalformedCertificate",
    "InvalidInput",
    "AssertionFailure",
    "DecompositionPiece",
    "validate_atom",
    "pr_to_crude",
    "crude_atom_h1_bound",
    "two_atom_decompose",
    "pairing_bound_check",
    "plain_atom_h1_ratio",
    "conditional_root_trace_check",
    "random_crude_atom",
    "random_pr_atom",
    "random_plain_atom",
    "pairing_tightness_search",
]

ATOM_KINDS = ("crude_c", "crude_r", "pr_c", "pr_r", "plain")
RESIDUAL_TOL = 1e-8


class MalformedCertificate(ValueError):
    """Certificate payload is missing or has the wrong shape."""


class InvalidInput(ValueError):
    """A conversion was asked for from an invalid certificate."""


class AssertionFailure(AssertionError):
    """A bound that must hold on valid atoms failed; instance attached."""

    def __init__(self, message: str, details: dict | None = None):
        super().__init__(message)
        self.details = details or {}


def conjugate_exponent(q: float) -> float:
    if math.isinf(q):
        return 1.0
    return q / (q - 1.0)


@dataclass(frozen=True)
class AtomCertificate:
    """An atom candidate: its kind, level, exponent and payload.

    checks maps a check name to {"residual", "tol", "ok"}; bound checks
    use residual = measured/limit (ok iff <= 1 + 1e-8), equality checks
    use residual = deviation/scale (ok iff <= 1e-8).
    """

    kind: str
    q: float
    level: int
    payload: dict = field(default_factory=dict)
    checks: dict | None = None
    valid: bool | None = None

    def to_json(self) -> dict:
        payload = {}
        for key, value in self.payload.items():
            if isinstance(value, Operator):
                payload[key] = operator_to_json(value)
            elif isinstance(value, ProjectionWitness):
                payload[key] = {
                    "level": value.level,
                    "trace_value": value.trace_value,
                    "operator": operator_to_json(value.proj),
                }
            else:
                payload[key] = value
        return {
            "kind": self.kind,
            "q": "inf" if math.isinf(self.q) else self.q,
            "level": self.level,
            "payload": payload,
            "checks": self.checks,
            "valid": self.valid,
        }


def _equality_check(deviation: float, scale: float) -> dict:
    residual = deviation / scale if scale > 0.0 else deviation
    return {"residual": residual, "tol": RESIDUAL_TOL, "ok": residual <= RESIDUAL_TOL}


def _bound_check(measured: float, limit: float) -> dict:
    residual = measured / limit if limit > 0.0 else (0.0 if measured == 0.0 else math.inf)
    return {"residual": residual, "tol": 1.0 + RESIDUAL_TOL, "ok": residual <= 1.0 + RESIDUAL_TOL}


def _core_norm(y: Operator, q: float, column: bool) -> float:
    if math.isinf(q):
        return bmo_norm(y, "bmo_c" if column else "bmo_r").value
    return hardy_norm(y, "hc" if column else "hr", q)


def validate_atom(a: Operator, cert: AtomCertificate) -> AtomCertificate:
    """Run the defining checks of cert.kind and return the graded certificate."""
    if cert.kind not in ATOM_KINDS:
        raise MalformedCertificate(f"unknown atom kind: {cert.kind!r}")
    if not cert.q > 1.0:
        raise ValueError("q must exceed 1")
    if not 1 <= cert.level <= a.space.levels:
        raise ValueError(f"level must be in 1..{a.space.levels}")
    qp = conjugate_exponent(cert.q)
    scale = operator_norm(a)
    checks = {}

    if cert.kind in ("crude_c", "crude_r"):
        try:
            y, b = cert.payload["y"], cert.payload["b"]
        except KeyError as exc:
            raise MalformedCertificate("crude certificate needs payload y, b") from exc
        column = cert.kind == "crude_c"
        product = y @ b if column else b @ y
        checks["factorization"] = _equality_check(operator_norm(a - product), max(scale, operator_norm(product)))
        checks["mean_zero"] = _equality_check(
            operator_norm(cond_exp(y, cert.level)), operator_norm(y))
        checks["deflator_measurable"] = _equality_check(
            operator_norm(b - cond_exp(b, cert.level)), operator_norm(b))
        checks["deflator_norm"] = _bound_check(lp_norm(b, qp), 1.0)
        checks["core_norm"] = _bound_check(_core_norm(y, cert.q, column), 1.0)
    elif cert.kind in ("pr_c", "pr_r"):
        e = _payload_projection(cert)
        column = cert.kind == "pr_c"
        supported = a @ e.proj if column else e.proj @ a
        checks["mean_zero"] = _equality_check(operator_norm(cond_exp(a, cert.level)), scale)
        checks["support"] = _equality_check(operator_norm(supported - a), scale)
        limit = e.trace_value ** (-1.0) if math.isinf(cert.q) else e.trace_value ** (-1.0 / qp)
        checks["norm_bound"] = _bound_check(_core_norm(a, cert.q, column), limit)
    else:  # plain
        e = _payload_projection(cert)
        side = cert.payload.get("side", "right")
        if side not in ("right", "left"):
            raise MalformedCertificate(f"plain atom side must be right or left, got {side!r}")
        supported = a @ e.proj if side == "right" else e.proj @ a
        checks["mean_zero"] = _equality_check(operator_norm(cond_exp(a, cert.level)), scale)
        checks["support"] = _equality_check(operator_norm(supported - a), scale)
        checks["norm_bound"] = _bound_check(lp_norm(a, cert.q), e.trace_value ** (-1.0 / qp))

    return replace(cert, checks=checks, valid=all(c["ok"] for c in checks.values()))


def _payload_projection(cert: AtomCertificate) -> ProjectionWitness:
    try:
        e = cert.payload["proj"]
    except KeyError as exc:
        raise MalformedCertificate("certificate needs a projection payload") from exc
    if isinstance(e, ProjectionWitness):
        return e
    return ProjectionWitness.make(e, cert.level)


def pr_to_crude(a: Operator, cert: AtomCertificate) -> AtomCertificate:
    """Constructive conversion of a projection-supported atom to a crude one:
    y = a tau(e)^{1/q'}, b = e tau(e)^{-1/q'}."""
    if cert.kind not in ("pr_c", "pr_r"):
        raise InvalidInput(f"expected a projection-supported atom, got {cert.kind!r}")
    graded = cert if cert.valid is not None else validate_atom(a, cert)
    if not graded.valid:
        raise InvalidInput("projection-supported certificate is invalid")
    e = _payload_projection(cert)
    qp = conjugate_exponent(cert.q)
    y = a * e.trace_value ** (1.0 / qp)
    b = e.proj * e.trace_value ** (-1.0 / qp)
    kind = "crude_c" if cert.kind == "pr_c" else "crude_r"
    crude = AtomCertificate(kind=kind, q=cert.q, level=cert.level, payload={"y": y, "b": b})
    return validate_atom(a, crude)


def crude_atom_h1_bound(a: Operator, cert: AtomCertificate) -> float:
    """|a|_{h_1} of the matching column/row component; must be at most 1
    for every valid crude atom."""
    if cert.kind not in ("crude_c", "crude_r"):
        raise InvalidInput(f"expected a crude atom, got {cert.kind!r}")
    graded = cert if cert.valid is not None else validate_atom(a, cert)
    if not graded.valid:
        raise InvalidInput("crude certificate is invalid")
    value = hardy_norm(a, "hc" if cert.kind == "crude_c" else "hr", 1.0)
    if value > 1.0 + RESIDUAL_TOL:
        raise AssertionFailure(
            "crude atom h1 bound exceeded",
            {"value": value, "q": cert.q, "level": cert.level, "a": operator_to_json(a)},
        )
    return value


def conditional_root_trace_check(a_psd: Operator, level: int, tol: float = 1e-9) -> dict:
    """tau((E_n A)^{1/2}) >= tau(A^{1/2}) for PSD A (trace form of the
    operator Jensen inequality for the square root)."""
    from .core import herm_calculus

    lhs = float(trace(herm_calculus(cond_exp(a_psd, level), "abs-power", 1.0)).real)
    rhs = float(trace(herm_calculus(a_psd, "abs-power", 1.0)).real)
    if lhs + tol * max(1.0, rhs) < rhs:
        raise AssertionFailure(
            "conditional root trace inequality failed",
            {"level": level, "lhs": lhs, "rhs": rhs, "a": operator_to_json(a_psd)},
        )
    return {"lhs": lhs, "rhs": rhs, "passed": True}


@dataclass(frozen=True)
class DecompositionPiece:
    coefficient: float
    element: Operator
    role: str                       # "atom" | "m1"
    certificate: AtomCertificate | None = None
    meta: dict = field(default_factory=dict)


def two_atom_decompose(x: Operator, q: float) -> list[DecompositionPiece]:
    """Split x into a crude atom plus a unit-ball element of L_1 at level 1.

    q <= 2: coefficients (|x - E_1 x|_2, |E_1 x|_2); their sum never
    exceeds sqrt(2) |x|_2.  q > 2: the atom is normalized in h_q^c, with
    the measured ratio |x - E_1 x|_{h_q^c} / |x - E_1 x|_q recorded in
    the piece metadata (there is no universal closed form for it).
    Degenerate inputs yield a single piece.
    """
    if not q > 1.0:
        raise ValueError("q must exceed 1")
    if lp_norm(x, 2.0) == 0.0:
        raise ValueError("x must be nonzero")
    level_one = cond_exp(x, 1)
    diff = x - level_one
    pieces: list[DecompositionPiece] = []

    diff_scale = lp_norm(diff, 2.0)
    if diff_scale > 1e-14 * lp_norm(x, 2.0):
        if q <= 2.0:
            coeff = diff_scale
            meta = {}
        else:
            hq = hardy_norm(diff, "hc", q)
            coeff = hq
            meta = {"c_q": hq / lp_norm(diff, q)}
        y = diff * (1.0 / coeff)
        cert = validate_atom(
            y, AtomCertificate(kind="crude_c", q=q, level=1,
                               payload={"y": y, "b": identity(x.space)}))
        pieces.append(DecompositionPiece(coeff, y, "atom", cert, meta))

    m1_scale = lp_norm(level_one, 2.0 if q <= 2.0 else q)
    if m1_scale > 1e-14 * lp_norm(x, 2.0):
        pieces.append(DecompositionPiece(m1_scale, level_one * (1.0 / m1_scale), "m1"))
    return pieces


def pairing_bound_check(x: Operator, a: Operator, cert: AtomCertificate,
                        tol: float = 1e-9) -> dict:
    """|tau(x* a)| <= exact p = 2 column functional of x, for q = 2 crude
    column atoms (the pairing side of the atomic duality)."""
    if cert.kind != "crude_c" or cert.q != 2.0:
        raise InvalidInput("pairing bound needs a q = 2 crude column atom")
    graded = cert if cert.valid is not None else validate_atom(a, cert)
    if not graded.valid:
        raise InvalidInput("certificate is invalid")
    value = abs(trace(x.adjoint() @ a))
    bound = bmo_c2_exact(x).lower_bound
    if value > bound * (1.0 + tol) + 1e-15:
        raise AssertionFailure(
            "pairing bound violated",
            {"value": value, "bound": bound, "x": operator_to_json(x),
             "a": operator_to_json(a)},
        )
    return {"pairing": value, "bound": bound,
            "ratio": value / bound if bound > 0.0 else 0.0, "passed": True}


def plain_atom_h1_ratio(a: Operator, cert: AtomCertificate) -> float:
    """h1_upper(a) * (q-1)/q for a plain atom.

    The constant relating plain atoms to the sum-space norm is not
    numeric, so nothing is asserted; callers aggregate ratios across q.
    """
    if cert.kind != "plain":
        raise InvalidInput(f"expected a plain atom, got {cert.kind!r}")
    factor = 1.0 if math.isinf(cert.q) else (cert.q - 1.0) / cert.q
    return h1_upper(a, "h1") * factor


# ---------------------------------------------------------------------------
# Random, boundary-tight atom generators
# ---------------------------------------------------------------------------


def _random_atom_support(space: TraceSpace, level: int, rng: np.random.Generator) -> ProjectionWitness:
    cells = space.cells(level)
    n = space.matrix_dim
    mask = rng.random(len(cells)) < 0.6
    if not mask.any():
        mask[int(rng.integers(len(cells)))] = True
    ranks = [int(rng.integers(1, n + 1)) if keep else 0 for keep in mask]
    return _random_projection(space, level, ranks, rng)


def _centered_gaussian(space: TraceSpace, level: int, rng: np.random.Generator) -> Operator:
    g = _random_operator(space, rng)
    return g - cond_exp(g, level)


def random_plain_atom(space: TraceSpace, level: int, q: float, seed,
                      side: str = "right"):
    """Boundary-tight plain atom: (g - E_n g) cut to a random projection
    support and rescaled so the defining bound holds with equality."""
    rng = split_rng(seed, "plain-atom", level, repr(float(q)), side)
    e = _random_atom_support(space, level, rng)
    core = _centered_gaussian(space, level, rng)
    a = core @ e.proj if side == "right" else e.proj @ core
    nrm = lp_norm(a, q)
    if nrm <= 1e-14:
        raise ValueError("degenerate draw; use another seed")
    target = e.trace_value ** (-1.0 / conjugate_exponent(q))
    a = a * (target / nrm)
    cert = AtomCertificate(kind="plain", q=q, level=level,
                           payload={"proj": e, "side": side})
    return a, validate_atom(a, cert)


def random_pr_atom(space: TraceSpace, level: int, q: float, seed):
    """Boundary-tight projection-supported column atom."""
    rng = split_rng(seed, "pr-atom", level, repr(float(q)))
    e = _random_atom_support(space, level, rng)
    a = _centered_gaussian(space, level, rng) @ e.proj
    value = _core_norm(a, q, column=True)
    if value <= 1e-14:
        raise ValueError("degenerate draw; use another seed")
    if math.isinf(q):
        target = e.trace_value ** (-1.0)
    else:
        target = e.trace_value ** (-1.0 / conjugate_exponent(q))
    a = a * (target / value)
    cert = AtomCertificate(kind="pr_c", q=q, level=level, payload={"proj": e})
    return a, validate_atom(a, cert)


def random_crude_atom(space: TraceSpace, level: int, q: float, seed):
    """Boundary-tight crude column atom with a Gaussian core and deflator."""
    rng = split_rng(seed, "crude-atom", level, repr(float(q)))
    y = _centered_gaussian(space, level, rng)
    y_norm = _core_norm(y, q, column=True)
    if y_norm <= 1e-14:
        raise ValueError("degenerate draw; use another seed")
    y = y * (1.0 / y_norm)
    b = _random_level_operator(space, level, rng)
    b = b * (1.0 / lp_norm(b, conjugate_exponent(q)))
    a = y @ b
    cert = AtomCertificate(kind="crude_c", q=q, level=level, payload={"y": y, "b": b})
    return a, validate_atom(a, cert)


def pairing_tightness_search(space: TraceSpace, trials: int, seed) -> dict:
    """Report-only ascent for the tightness of the pairing bound: the best
    ratio |tau(x* a)| / bound found over random pairs, never above 1."""
    best = 0.0
    for t in range(trials):
        rng = split_rng(seed, "pairing-tight", t)
        level = int(rng.integers(1, space.levels + 1))
        a, cert = random_crude_atom(space, level, 2.0, split_rng(seed, "pt-atom", t).integers(2 ** 32))
        x = _random_operator(space, rng)
        ratio = pairing_bound_check(x, a, cert)["ratio"]
        for _ in range(4):
            cand = x + 0.4 * _random_operator(space, rng)
            c_ratio = pairing_bound_check(cand, a, cert)["ratio"]
            if c_ratio > ratio:
                x, ratio = cand, c_ratio
        best = max(best, ratio)
    return {"trials": trials, "best_ratio": best}
