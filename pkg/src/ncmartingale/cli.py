"""Batch verification harness (`ncmart`).

Subcommands: norms, jn-verify, atoms-verify, counterexample, sweep-growth,
random-suite.  Reports are JSON (source of truth) or a CSV projection of
the row table; output is canonically ordered and carries no timestamps,
so a fixed seed reproduces the report byte for byte, at any `--jobs`.
Exit code 0 iff every asserted inequality passed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

from .core import make_dyadic_space, operator_from_json, operator_norm, partial_sum
from .norms import BMO_FAMILIES, NormReport, bmo_norm, h1_upper, hardy_norm, lp_norm
from .jn import (
    DIRECTION_FUNCTIONALS,
    ViolationFound,
    bmo_c2_exact,
    check_constant_free_directions,
    deflator_value,
    distribution_tail,
    evaluate_estimate,
    jn_lower_bound,
)
from .atoms import (
    AssertionFailure,
    crude_atom_h1_bound,
    pairing_bound_check,
    plain_atom_h1_ratio,
    pr_to_crude,
    conditional_root_trace_check,
    pairing_tightness_search,
    random_crude_atom,
    random_plain_atom,
    random_pr_atom,
    two_atom_decompose,
)
from .constructions import (
    InequalityFailure,
    bmo_p_blowup_instance,
    conditional_cauchy_schwarz_check,
    operator_convexity_checks,
    rademacher_row,
    random_martingale,
    random_projection,
    sweep_growth_experiment,
)
from .core import abs2, identity
from .seeds import split_rng

P_DEPENDENT_FAMILIES = ("lp", "Hc", "Hr", "hc", "hr")
EXTRA_FAMILIES = ("hd", "op", "h1", "H1") + BMO_FAMILIES

CSV_COLUMNS = {
    "norms": ("family", "p", "value", "argmax_level"),
    "jn-verify": ("row_type", "instance", "functional", "p", "direction", "samples",
                  "max_ratio", "lower_bound", "exact", "witness_level", "witness_side",
                  "mode", "level", "fitted_c", "bound_constant", "passed"),
    "counterexample": ("name", "n", "p", "quantity", "expected", "computed",
                       "provenance", "abs_dev", "passed"),
    "atoms-verify": ("suite", "q", "trials", "statistic", "value", "passed"),
    "sweep-growth": ("n", "depth", "trials", "best_value", "log_bound", "ratio"),
    "random-suite": ("row_type", "p", "trials", "statistic", "value", "passed"),
}

RANDOM_SPACES = ((2, 2), (3, 2), (3, 3), (4, 2))


class UsageError(Exception):
    pass


def _parse_float(token: str) -> float:
    if token.strip().lower() in ("inf", "infinity"):
        return math.inf
    return float(token)


def _parse_plist(text: str) -> list:
    values = [_parse_float(tok) for tok in text.split(",") if tok.strip()]
    if not values or any(v <= 0 for v in values):
        raise UsageError(f"exponents must be positive, got {text!r}")
    return values


def _parse_ints(text: str) -> list:
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _sort_rows(rows, keys):
    def keyfn(row):
        out = []
        for key in keys:
            v = row.get(key)
            out.append((v is None, str(type(v).__name__), v if v is not None else 0))
        return out
    return sorted(rows, key=keyfn)


def _emit(report: dict, args) -> None:
    if args.format == "json":
        text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    else:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        columns = CSV_COLUMNS[report["command"]]
        writer.writerow(columns)
        for row in report["rows"]:
            writer.writerow(["" if row.get(c) is None else row.get(c) for c in columns])
        text = buf.getvalue()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)


def _report(command: str, params: dict, rows: list, checks: list,
            extra: dict | None = None) -> dict:
    report = {
        "command": command,
        "params": params,
        "rows": rows,
        "checks": checks,
        "all_passed": all(c["passed"] for c in checks) if checks else True,
    }
    if extra:
        report.update(extra)
    return report


def _check(checks: list, name: str, passed: bool, detail: str = "") -> None:
    checks.append({"name": name, "passed": bool(passed), "detail": detail})


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------


def _cmd_norms(args) -> dict:
    try:
        with open(args.input, "r", encoding="utf-8") as handle:
            data = json.load(handle)
    except json.JSONDecodeError as exc:
        raise UsageError(f"malformed operator JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}")
    except OSError as exc:
        raise UsageError(f"cannot read {args.input}: {exc}")
    try:
        x = operator_from_json(data)
    except (KeyError, ValueError, TypeError) as exc:
        raise UsageError(f"invalid operator file: {exc}")

    plist = _parse_plist(args.p)
    requested = []
    for token in args.families.split(","):
        token = token.strip()
        if not token:
            continue
        if token == "all":
            requested.extend(P_DEPENDENT_FAMILIES)
        elif token in P_DEPENDENT_FAMILIES + EXTRA_FAMILIES:
            requested.append(token)
        else:
            raise UsageError(f"unknown norm family: {token!r}")

    rows = []
    for family in dict.fromkeys(requested):
        if family in P_DEPENDENT_FAMILIES + ("hd",):
            for p in plist:
                value = lp_norm(x, p) if family == "lp" else hardy_norm(x, family, p)
                rows.append(NormReport(family, p, value).to_json())
        elif family == "op":
            rows.append(NormReport("op", math.inf, operator_norm(x)).to_json())
        elif family in BMO_FAMILIES:
            rows.append(bmo_norm(x, family).to_json())
        else:  # h1 / H1 upper bounds
            rows.append(NormReport(family, 1.0, h1_upper(x, family)).to_json())
    rows = _sort_rows(rows, ("family", "p", "argmax_level"))
    params = {"families": args.families, "p": args.p}
    return _report("norms", params, rows, [])


# ---------------------------------------------------------------------------
# jn-verify
# ---------------------------------------------------------------------------


def _jn_instances(args):
    if args.random:
        out = []
        for t in range(args.trials):
            depth, dim = RANDOM_SPACES[t % len(RANDOM_SPACES)]
            space = make_dyadic_space(depth, dim)
            x = random_martingale(space, 1.0, split_rng(args.seed, "suite-x", t).integers(2 ** 32),
                                  hermitian=(t % 3 == 0))
            out.append((f"random-{t}", x))
        return out
    if args.instance == "rademacher":
        inst = rademacher_row(args.n)
        return [("rademacher", inst.x)]
    if args.instance == "blowup":
        p_small = next((p for p in _parse_plist(args.p) if p < 2), 1.0)
        inst = bmo_p_blowup_instance(args.n, p_small)
        return [("blowup", inst.x)]
    raise UsageError(f"unknown instance: {args.instance!r}")


def _cmd_jn_verify(args) -> dict:
    plist = _parse_plist(args.p)
    instances = _jn_instances(args)
    rows, checks, estimates = [], [], []

    for label, x in instances:
        for p in plist:
            trials = args.trials if args.random else 200
            dirs = check_constant_free_directions(x, p, trials=min(trials, 200),
                                                  seed=args.seed, tol=args.tol)
            for functional, entry in sorted(dirs["families"].items()):
                rows.append({
                    "row_type": "direction", "instance": label, "functional": functional,
                    "p": p, "direction": "beta" if p <= 2 else "alpha",
                    "samples": entry.get("beta_samples"),
                    "max_ratio": entry.get("beta_max_ratio", entry.get("alpha_ratio")),
                    "passed": True,
                })
            _check(checks, f"{label}-directions-p{p:g}", True)
            if not args.random:
                for functional in DIRECTION_FUNCTIONALS + ("BMO_c_p",):
                    est = jn_lower_bound(x, functional, p, budget=args.budget,
                                         seed=args.seed, jobs=args.jobs)
                    repro = evaluate_estimate(x, est)
                    sound = abs(repro - est.lower_bound) <= 1e-9 * max(1.0, est.lower_bound)
                    _check(checks, f"{label}-witness-{functional}-p{p:g}", sound,
                           f"lb={est.lower_bound!r} repro={repro!r}")
                    rows.append({
                        "row_type": "lower-bound", "instance": label,
                        "functional": functional, "p": p,
                        "lower_bound": est.lower_bound, "exact": est.exact,
                        "witness_level": est.witness_level,
                        "witness_side": est.witness_side, "passed": sound,
                    })
                    estimates.append(est.to_json() | {"instance": label})

        # distributional tails at the identity witness and a random one
        space = x.space
        witnesses = [("identity", random_projection(space, 1, space.matrix_dim, args.seed))]
        if space.matrix_dim > 1:
            witnesses.append(
                ("random", random_projection(space, min(2, space.levels),
                                             max(1, space.matrix_dim // 2), args.seed)))
        for wlabel, wit in witnesses:
            for mode in ("conditional-sc", "plain-right", "plain-left"):
                level = wit.level
                curve = distribution_tail(x, level, wit, mode)
                monotone = all(a >= b - 1e-15 for a, b in zip(curve.values, curve.values[1:]))
                vanishes = curve.values[-1] == 0.0
                positive = curve.fitted_c > 0.0
                ok = monotone and vanishes and positive
                _check(checks, f"{label}-tail-{wlabel}-{mode}", ok,
                       f"fitted_c={curve.fitted_c!r}")
                rows.append({
                    "row_type": "tail", "instance": label, "mode": mode,
                    "level": level, "fitted_c": None if math.isinf(curve.fitted_c) else curve.fitted_c,
                    "bound_constant": curve.bound_constant, "passed": ok,
                })

    rows = _sort_rows(rows, ("row_type", "instance", "functional", "p", "mode"))
    params = {"instance": None if args.random else args.instance,
              "random": bool(args.random), "n": args.n, "p": args.p,
              "trials": args.trials, "budget": args.budget, "seed": args.seed,
              "jobs": args.jobs, "tol": args.tol}
    return _report("jn-verify", params, rows, checks, {"estimates": estimates})


# ---------------------------------------------------------------------------
# counterexample
# ---------------------------------------------------------------------------

COUNTEREXAMPLE_ALIASES = {"remark320": "rademacher-row", "remark39": "bmo-blowup"}


def _cmd_counterexample(args) -> dict:
    name = COUNTEREXAMPLE_ALIASES.get(args.name, args.name)
    rows, checks = [], []
    if name == "rademacher-row":
        n_list = _parse_ints(args.n_list) if args.n_list else [2, 3, 4, 5, 6]
        plist = _parse_plist(args.p) if args.p else [2.0, 3.0, 4.0, 8.0]
        for n in n_list:
            inst = rademacher_row(n)
            x = inst.x
            for p in plist:
                expected = math.sqrt(n - 1) * n ** (-1.0 / p)
                computed = max(lp_norm(x - partial_sum(x, m), p)
                               for m in range(1, x.space.levels + 1))
                dev = abs(computed - expected)
                rows.append({"name": name, "n": n, "p": p, "quantity": "sup_tail_lp",
                             "expected": expected, "computed": computed,
                             "provenance": "closed-form", "abs_dev": dev,
                             "passed": dev <= 1e-10})
            bmo_val = bmo_norm(x, "bmo_c").value
            dev = abs(bmo_val - 1.0)
            rows.append({"name": name, "n": n, "p": None, "quantity": "bmo_c",
                         "expected": 1.0, "computed": bmo_val,
                         "provenance": "closed-form", "abs_dev": dev,
                         "passed": dev <= 1e-10})
        _check(checks, "rademacher-row", all(r["passed"] for r in rows))
    elif name == "bmo-blowup":
        n_list = _parse_ints(args.n_list) if args.n_list else [2, 4, 8]
        plist = _parse_plist(args.p) if args.p else [1.0]
        p = next((v for v in plist if 0 < v < 2), 1.0)
        witness_values = {}
        for n in n_list:
            inst = bmo_p_blowup_instance(n, p)
            x, a = inst.x, inst.companions["deflator"]
            level = x.space.levels
            computed = deflator_value(x, "BMO_c_p", p, level, a, "right")
            expected = n ** (1.0 / p - 0.5)
            witness_values[n] = computed
            rows.append({"name": name, "n": n, "p": p, "quantity": "witness_value",
                         "expected": expected, "computed": computed,
                         "provenance": "brute-force",
                         "abs_dev": abs(computed - expected),
                         "passed": computed >= expected - 1e-9})
            bmo2 = bmo_norm(x, "BMO_c").value
            rows.append({"name": name, "n": n, "p": 2.0, "quantity": "BMO_c_2",
                         "expected": 1.0, "computed": bmo2,
                         "provenance": "closed-form", "abs_dev": abs(bmo2 - 1.0),
                         "passed": abs(bmo2 - 1.0) <= 1e-10})
        if len(n_list) > 1:
            lo, hi = min(n_list), max(n_list)
            growth = witness_values[hi] / witness_values[lo]
            rows.append({"name": name, "n": hi, "p": p, "quantity": "growth_ratio",
                         "expected": (hi / lo) ** (1.0 / p - 0.5), "computed": growth,
                         "provenance": "brute-force",
                         "abs_dev": abs(growth - (hi / lo) ** (1.0 / p - 0.5)),
                         "passed": growth >= (hi / lo) ** (1.0 / p - 0.5) - 1e-8})
        _check(checks, "bmo-blowup", all(r["passed"] for r in rows))
    elif name == "sweep-growth":
        n_list = _parse_ints(args.n_list) if args.n_list else [1, 2, 4]
        rows = sweep_growth_experiment(n_list, args.seed, budget=args.budget)
        return _report("sweep-growth", {"name": name, "seed": args.seed,
                                        "budget": args.budget}, rows, [])
    else:
        raise UsageError(f"unknown counterexample name: {args.name!r}")
    rows = _sort_rows(rows, ("name", "quantity", "n", "p"))
    params = {"name": name, "n_list": args.n_list, "p": args.p, "seed": args.seed}
    return _report("counterexample", params, rows, checks)


# ---------------------------------------------------------------------------
# atoms-verify
# ---------------------------------------------------------------------------


def _cmd_atoms_verify(args) -> dict:
    qlist = _parse_plist(args.q)
    if any(q <= 1 for q in qlist):
        raise UsageError("atom exponents must exceed 1")
    trials = args.trials
    rows, checks = [], []
    spaces = [make_dyadic_space(3, 2), make_dyadic_space(2, 3)]

    worst = 0.0
    for t in range(trials):
        q = qlist[t % len(qlist)]
        space = spaces[t % len(spaces)]
        level = 1 + t % (space.levels - 1)
        a, cert = random_crude_atom(space, level, q, split_rng(args.seed, "h1b", t).integers(2 ** 32))
        worst = max(worst, crude_atom_h1_bound(a, cert))
    rows.append({"suite": "crude-h1-bound", "q": "mixed", "trials": trials,
                 "statistic": "max_value", "value": worst, "passed": worst <= 1.0 + 1e-8})
    _check(checks, "crude-h1-bound", worst <= 1.0 + 1e-8, f"max={worst!r}")

    conv = max(1, trials // 2)
    converted = 0
    for t in range(conv):
        q = qlist[t % len(qlist)]
        space = spaces[t % len(spaces)]
        level = 1 + t % (space.levels - 1)
        a, cert = random_pr_atom(space, level, q, split_rng(args.seed, "prc", t).integers(2 ** 32))
        if pr_to_crude(a, cert).valid:
            converted += 1
    rows.append({"suite": "pr-to-crude", "q": "mixed", "trials": conv,
                 "statistic": "converted", "value": converted, "passed": converted == conv})
    _check(checks, "pr-to-crude", converted == conv, f"{converted}/{conv}")

    dec = max(1, trials // 2)
    dec_ok = 0
    for t in range(dec):
        space = spaces[t % len(spaces)]
        x = random_martingale(space, 1.0, split_rng(args.seed, "dec", t).integers(2 ** 32))
        pieces = two_atom_decompose(x, 2.0)
        total = sum(p.coefficient for p in pieces)
        resummed = pieces[0].element * pieces[0].coefficient
        for piece in pieces[1:]:
            resummed = resummed + piece.element * piece.coefficient
        recon = operator_norm(resummed - x) <= 1e-10 * max(1.0, operator_norm(x))
        bound = total <= math.sqrt(2.0) * lp_norm(x, 2.0) + 1e-9
        valids = all(p.certificate is None or p.certificate.valid for p in pieces)
        if recon and bound and valids:
            dec_ok += 1
    rows.append({"suite": "two-atom", "q": 2.0, "trials": dec,
                 "statistic": "passed_count", "value": dec_ok, "passed": dec_ok == dec})
    _check(checks, "two-atom", dec_ok == dec, f"{dec_ok}/{dec}")

    pair_ok = 0
    for t in range(trials):
        space = spaces[t % len(spaces)]
        level = 1 + t % (space.levels - 1)
        a, cert = random_crude_atom(space, level, 2.0, split_rng(args.seed, "pair-a", t).integers(2 ** 32))
        x = random_martingale(space, 1.0, split_rng(args.seed, "pair-x", t).integers(2 ** 32))
        if pairing_bound_check(x, a, cert)["passed"]:
            pair_ok += 1
    rows.append({"suite": "pairing", "q": 2.0, "trials": trials,
                 "statistic": "passed_count", "value": pair_ok, "passed": pair_ok == trials})
    _check(checks, "pairing", pair_ok == trials, f"{pair_ok}/{trials}")

    ratio_trials = max(1, trials // 10)
    for q in qlist:
        ratios = []
        for t in range(ratio_trials):
            space = spaces[t % len(spaces)]
            level = 1 + t % (space.levels - 1)
            a, cert = random_plain_atom(space, level, q,
                                        split_rng(args.seed, "ratio", repr(q), t).integers(2 ** 32))
            ratios.append(plain_atom_h1_ratio(a, cert))
        rows.append({"suite": "plain-h1-ratio", "q": "inf" if math.isinf(q) else q,
                     "trials": ratio_trials, "statistic": "max_ratio",
                     "value": max(ratios), "passed": True})

    jt = max(1, trials // 4)
    for t in range(jt):
        space = spaces[t % len(spaces)]
        g = random_martingale(space, 1.0, split_rng(args.seed, "jt", t).integers(2 ** 32))
        conditional_root_trace_check(abs2(g), 1 + t % space.levels)
    rows.append({"suite": "jensen-trace", "q": None, "trials": jt,
                 "statistic": "passed_count", "value": jt, "passed": True})
    _check(checks, "jensen-trace", True)

    tight = pairing_tightness_search(spaces[0], max(1, trials // 20), args.seed)
    rows.append({"suite": "pairing-tightness", "q": 2.0, "trials": tight["trials"],
                 "statistic": "best_ratio", "value": tight["best_ratio"], "passed": True})

    rows = _sort_rows(rows, ("suite", "q"))
    params = {"trials": trials, "q": args.q, "seed": args.seed}
    return _report("atoms-verify", params, rows, checks)


# ---------------------------------------------------------------------------
# sweep-growth / random-suite
# ---------------------------------------------------------------------------


def _cmd_sweep_growth(args) -> dict:
    n_list = _parse_ints(args.n_list) if args.n_list else [1, 2, 4]
    rows = sweep_growth_experiment(n_list, args.seed, budget=args.budget)
    return _report("sweep-growth", {"n_list": args.n_list, "seed": args.seed,
                                    "budget": args.budget}, rows, [])


def _cmd_random_suite(args) -> dict:
    plist = _parse_plist(args.p)
    rows, checks = [], []
    ident_dev, wit_dev = 0.0, 0.0
    for t in range(args.trials):
        depth, dim = RANDOM_SPACES[t % len(RANDOM_SPACES)]
        space = make_dyadic_space(depth, dim)
        x = random_martingale(space, 1.0, split_rng(args.seed, "rs-x", t).integers(2 ** 32),
                              hermitian=(t % 3 == 0))
        est = bmo_c2_exact(x)
        ident_dev = max(ident_dev, abs(est.lower_bound - bmo_norm(x, "bmo_c").value))
        wit_dev = max(wit_dev, abs(evaluate_estimate(x, est) - est.lower_bound))
        for p in plist:
            check_constant_free_directions(x, p, trials=1, seed=split_rng(args.seed, "rs-d", t).integers(2 ** 32),
                                           tol=args.tol)
    rows.append({"row_type": "p2-identity", "p": 2.0, "trials": args.trials,
                 "statistic": "max_abs_dev", "value": ident_dev,
                 "passed": ident_dev <= 1e-10})
    rows.append({"row_type": "p2-witness", "p": 2.0, "trials": args.trials,
                 "statistic": "max_abs_dev", "value": wit_dev,
                 "passed": wit_dev <= 1e-9})
    for p in plist:
        rows.append({"row_type": "directions", "p": p, "trials": args.trials,
                     "statistic": "violations", "value": 0, "passed": True})
    _check(checks, "p2-identity", ident_dev <= 1e-10, f"max_dev={ident_dev!r}")
    _check(checks, "p2-witness", wit_dev <= 1e-9, f"max_dev={wit_dev!r}")
    _check(checks, "directions", True)
    conv = operator_convexity_checks(max(1, args.trials // 2), split_rng(args.seed, "rs-conv").integers(2 ** 32))
    _check(checks, "operator-convexity", conv["passed"])
    rows = _sort_rows(rows, ("row_type", "p"))
    params = {"trials": args.trials, "p": args.p, "seed": args.seed, "tol": args.tol}
    return _report("random-suite", params, rows, checks)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ncmart",
        description="Verification harness for matrix-valued martingale norms, "
                    "John-Nirenberg functionals and atoms.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=7, help="master seed (default 7)")
        p.add_argument("--budget", type=int, default=64,
                       help="random-search budget (default 64)")
        p.add_argument("--tol", type=float, default=1e-9,
                       help="relative tolerance for asserted directions (default 1e-9)")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--out", default=None, help="output path (default stdout)")
        p.add_argument("--jobs", type=int, default=1,
                       help="worker threads for random trials (default 1)")

    p_norms = sub.add_parser("norms", help="norm table for an operator file")
    p_norms.add_argument("--input", required=True, help="operator JSON file")
    p_norms.add_argument("--families", default="all",
                         help="comma list; 'all' = lp,Hc,Hr,hc,hr; extras: hd,op,"
                              "h1,H1,bmo_c,bmo_r,bmo_d,bmo,BMO_c,BMO_r,BMO")
    p_norms.add_argument("--p", default="1,2,4", help="comma list of exponents")
    common(p_norms)

    p_jn = sub.add_parser("jn-verify", help="constant-free directions, lower bounds, tails")
    p_jn.add_argument("--instance", choices=("rademacher", "blowup"), default="rademacher")
    p_jn.add_argument("--n", type=int, default=4)
    p_jn.add_argument("--random", action="store_true", help="random instances instead")
    p_jn.add_argument("--trials", type=int, default=50)
    p_jn.add_argument("--p", default="1,2,4")
    common(p_jn)

    p_ce = sub.add_parser("counterexample", help="expected-vs-computed tables")
    p_ce.add_argument("--name", required=True,
                      help="rademacher-row | bmo-blowup | sweep-growth "
                           "(aliases: remark320, remark39)")
    p_ce.add_argument("--n-list", default=None, help="comma list of n values")
    p_ce.add_argument("--p", default=None, help="comma list of exponents")
    common(p_ce)

    p_at = sub.add_parser("atoms-verify", help="atom validators and bounds")
    p_at.add_argument("--trials", type=int, default=1000)
    p_at.add_argument("--q", default="1.25,2,4,inf")
    common(p_at)

    p_sw = sub.add_parser("sweep-growth", help="sweep-operator growth experiment")
    p_sw.add_argument("--n-list", default=None)
    common(p_sw)

    p_rs = sub.add_parser("random-suite", help="seeded random verification sweep")
    p_rs.add_argument("--trials", type=int, default=50)
    p_rs.add_argument("--p", default="1,2,4")
    common(p_rs)

    return parser


_HANDLERS = {
    "norms": _cmd_norms,
    "jn-verify": _cmd_jn_verify,
    "counterexample": _cmd_counterexample,
    "atoms-verify": _cmd_atoms_verify,
    "sweep-growth": _cmd_sweep_growth,
    "random-suite": _cmd_random_suite,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        report = _HANDLERS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ViolationFound, AssertionFailure, InequalityFailure) as exc:
        failure = {
            "command": args.command,
            "all_passed": False,
            "violation": {"message": str(exc), "details": getattr(exc, "details", {})},
        }
        sys.stderr.write(json.dumps(failure, sort_keys=True, indent=2, default=str) + "\n")
        return 1
    _emit(report, args)
    return 0 if report["all_passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
