import json
import math

import numpy as np
import pytest

from ncmartingale import (
    NegativeSpectrum,
    NonHermitianInput,
    Operator,
    ProjectionWitness,
    TraceSpace,
    abs2,
    cond_exp,
    herm_calculus,
    identity,
    is_level_measurable,
    make_dyadic_space,
    martingale_diffs,
    operator_from_json,
    operator_norm,
    operator_to_json,
    partial_sum,
    rademacher_row,
    supports,
    trace,
    zero,
)
from helpers import frobenius_sq_oracle, random_x, scalar_cond_exp_oracle, small_spaces


def test_dyadic_space_minimal():
    space = make_dyadic_space(1, 1)
    assert space.site_count == 2
    assert np.allclose(space.weights, [0.5, 0.5])
    assert space.levels == 1
    assert all(len(c) == 1 for c in space.cells(1))


def test_dyadic_space_binary_prefix_cells():
    space = make_dyadic_space(3, 2)
    cells = [sorted(int(s) for s in c) for c in space.cells(2)]
    assert sorted(cells) == [[0, 1], [2, 3], [4, 5], [6, 7]]


def test_dyadic_space_normalized_trace():
    space = make_dyadic_space(4, 4)
    assert trace(identity(space)) == pytest.approx(1.0, abs=1e-15)


def test_dyadic_space_rejects_bad_args():
    with pytest.raises(ValueError):
        make_dyadic_space(0, 1)
    with pytest.raises(ValueError):
        make_dyadic_space(2, 0)


def test_space_validation():
    with pytest.raises(ValueError):
        TraceSpace(weights=np.array([0.5, 0.6]), matrix_dim=1,
                   partitions=np.array([[0, 1]]))
    with pytest.raises(ValueError):  # last level must separate
        TraceSpace(weights=np.array([0.5, 0.5]), matrix_dim=1,
                   partitions=np.array([[0, 0]]))
    with pytest.raises(ValueError):  # refinement broken
        TraceSpace(weights=np.full(4, 0.25), matrix_dim=1,
                   partitions=np.array([[0, 0, 1, 1], [0, 1, 1, 0],
                                        [0, 1, 2, 3]]))


def test_trace_identity_and_matrix_unit():
    space = make_dyadic_space(2, 4)
    assert trace(identity(space)) == pytest.approx(1.0, abs=1e-15)
    mats = np.zeros((space.site_count, 4, 4), dtype=complex)
    mats[:, 0, 0] = 1.0
    assert trace(Operator(space, mats)) == pytest.approx(0.25, abs=1e-15)


def test_trace_matches_elementwise_oracle():
    for t, space in enumerate(small_spaces()):
        x = random_x(space, t, tag="trace")
        val = trace(x.adjoint() @ x)
        assert val.imag == pytest.approx(0.0, abs=1e-12)
        assert val.real >= 0.0
        assert val.real == pytest.approx(frobenius_sq_oracle(x), rel=1e-10)


def test_cond_exp_constant_fixed_point():
    space = make_dyadic_space(3, 2)
    c = identity(space) * (2.0 - 0.5j)
    for k in range(space.levels + 1):
        assert operator_norm(cond_exp(c, k) - c) < 1e-14


def test_cond_exp_rademacher_first_level():
    inst = rademacher_row(4)
    e1 = cond_exp(inst.x, 1)
    expected = np.zeros_like(e1.mats)
    # r_1 (x) e_11: sign of the leading bit in the (0, 0) entry
    for s in range(inst.space.site_count):
        expected[s, 0, 0] = 1.0 if s < 8 else -1.0
    assert np.max(np.abs(e1.mats - expected)) < 1e-14
    assert operator_norm(e1) == pytest.approx(1.0, abs=1e-12)


def test_cond_exp_trace_preserving_and_idempotent():
    for t, space in enumerate(small_spaces()):
        x = random_x(space, t, tag="ce")
        for k in range(1, space.levels + 1):
            ek = cond_exp(x, k)
            assert abs(trace(ek) - trace(x)) < 1e-12
            assert operator_norm(cond_exp(ek, k) - ek) < 1e-12


def test_cond_exp_tower_property():
    space = make_dyadic_space(4, 2)
    x = random_x(space, 0, tag="tower")
    for j in range(1, 5):
        for k in range(1, 5):
            lhs = cond_exp(cond_exp(x, k), j)
            rhs = cond_exp(x, min(j, k))
            assert operator_norm(lhs - rhs) < 1e-12


def test_cond_exp_module_property():
    space = make_dyadic_space(3, 3)
    x = random_x(space, 1, tag="mod")
    for k in (1, 2, 3):
        a = cond_exp(random_x(space, 10 + k, tag="mod"), k)
        b = cond_exp(random_x(space, 20 + k, tag="mod"), k)
        lhs = cond_exp(a @ x @ b, k)
        rhs = a @ cond_exp(x, k) @ b
        assert operator_norm(lhs - rhs) < 1e-10 * max(1.0, operator_norm(rhs))


def test_cond_exp_level_bounds():
    space = make_dyadic_space(2, 2)
    x = random_x(space, 2, tag="lvl")
    with pytest.raises(ValueError):
        cond_exp(x, 3)
    assert operator_norm(cond_exp(x, 0) - cond_exp(x, 1)) == 0.0


def test_cond_exp_matches_scalar_oracle():
    space = make_dyadic_space(3, 1)
    x = random_x(space, 3, tag="scalar")
    values = [complex(x.mats[s, 0, 0]) for s in range(space.site_count)]
    for k in (1, 2, 3):
        expected = scalar_cond_exp_oracle(space, values, k)
        got = cond_exp(x, k).mats[:, 0, 0]
        assert np.max(np.abs(got - np.array(expected))) < 1e-12


def test_herm_calculus_examples():
    space = make_dyadic_space(1, 2)
    proj = np.zeros((2, 2, 2), dtype=complex)
    proj[:, 0, 0] = 1.0
    e = Operator(space, proj)
    sq = herm_calculus(e, "abs-power", 2.0)
    assert operator_norm(sq - e) < 1e-12

    d = Operator(space, np.broadcast_to(np.diag([4.0, 9.0]), (2, 2, 2)).astype(complex))
    root = herm_calculus(d, "sqrt")
    assert np.allclose(root.mats[0], np.diag([2.0, 3.0]), atol=1e-12)

    d2 = Operator(space, np.broadcast_to(np.diag([0.3, 0.7]), (2, 2, 2)).astype(complex))
    ind = herm_calculus(d2, "indicator", 0.5)
    assert np.allclose(ind.mats[0], np.diag([0.0, 1.0]), atol=1e-12)


def test_herm_calculus_errors():
    space = make_dyadic_space(1, 2)
    skew = np.zeros((2, 2, 2), dtype=complex)
    skew[:, 0, 1] = 1.0
    with pytest.raises(NonHermitianInput):
        herm_calculus(Operator(space, skew), "sqrt")
    neg = Operator(space, np.broadcast_to(np.diag([1.0, -0.5]), (2, 2, 2)).astype(complex))
    with pytest.raises(NegativeSpectrum):
        herm_calculus(neg, "sqrt")
    with pytest.raises(ValueError):
        herm_calculus(Operator(space, skew), "unknown-kind")


def test_abs_power_one_squares_to_abs2():
    for t, space in enumerate(small_spaces()):
        x = random_x(space, t, tag="abspow")
        a = herm_calculus(x, "abs-power", 1.0)
        assert operator_norm(a @ a - abs2(x)) < 1e-9 * max(1.0, operator_norm(x)) ** 2


def test_exp_scale_on_hermitian():
    space = make_dyadic_space(2, 2)
    h = random_x(space, 4, hermitian=True, tag="exp")
    ex = herm_calculus(h, "exp-scale", 0.5)
    w = np.linalg.eigvalsh(ex.mats)
    assert np.all(w > 0.0)


def test_supports_invertible_and_matrix_unit():
    space = make_dyadic_space(1, 2)
    left, right = supports(identity(space) * 3.0)
    assert operator_norm(left - identity(space)) < 1e-12
    assert operator_norm(right - identity(space)) < 1e-12

    e12 = np.zeros((2, 2, 2), dtype=complex)
    e12[:, 0, 1] = 1.0
    x = Operator(space, e12)
    left, right = supports(x)
    assert np.allclose(right.mats[0], np.diag([0.0, 1.0]), atol=1e-12)
    assert np.allclose(left.mats[0], np.diag([1.0, 0.0]), atol=1e-12)


def test_supports_rank_deficient():
    space = make_dyadic_space(2, 3)
    x = random_x(space, 5, tag="supp")
    killer = np.broadcast_to(np.diag([1.0, 1.0, 0.0]), (4, 3, 3)).astype(complex)
    x = x @ Operator(space, killer)  # force rank deficiency
    _, right = supports(x)
    assert operator_norm(x @ right - x) < 1e-10 * max(1.0, operator_norm(x))
    # nullspace oracle: per-site rank of the support matches the svd rank
    for s in range(space.site_count):
        sv = np.linalg.svd(x.mats[s], compute_uv=False)
        rank = int(np.sum(sv > 1e-8 * sv.max()))
        assert int(round(np.real(np.trace(right.mats[s])))) == rank


def test_conditional_orthogonality():
    for t, space in enumerate(small_spaces()):
        x = random_x(space, t, tag="orth")
        for k in range(1, space.levels + 1):
            xk = partial_sum(x, k)
            lhs = cond_exp(abs2(x - xk), k)
            rhs = cond_exp(abs2(x), k) - xk.adjoint() @ xk
            assert operator_norm(lhs - rhs) < 1e-10 * max(1.0, operator_norm(rhs))


def test_difference_orthogonality():
    space = make_dyadic_space(3, 2)
    x = random_x(space, 6, tag="dorth")
    diffs = martingale_diffs(x).diffs
    for k in range(1, space.levels + 1):
        lhs = cond_exp(abs2(x - partial_sum(x, k)), k)
        rhs = zero(space)
        for j, d in enumerate(diffs, start=1):
            if j > k:
                rhs = rhs + cond_exp(abs2(d), k)
        assert operator_norm(lhs - rhs) < 1e-10 * max(1.0, operator_norm(rhs))


def test_martingale_diffs_invariants():
    for t, space in enumerate(small_spaces()):
        x = random_x(space, t, tag="diffs")
        md = martingale_diffs(x)
        total = zero(space)
        for k, d in enumerate(md.diffs, start=1):
            total = total + d
            assert is_level_measurable(d, k, rtol=1e-10)
            if k >= 2:
                assert operator_norm(cond_exp(d, k - 1)) < 1e-12 * max(1.0, operator_norm(x))
        assert operator_norm(total - x) < 1e-12 * max(1.0, operator_norm(x))
        assert operator_norm(md.diffs[0] - cond_exp(x, 1)) == 0.0


def test_rademacher_diffs_recovered_exactly():
    inst = rademacher_row(3)
    diffs = martingale_diffs(inst.x).diffs
    for k, d in enumerate(diffs, start=1):
        expected = np.zeros_like(d.mats)
        for s in range(inst.space.site_count):
            bit = (s >> (3 - k)) & 1
            expected[s, 0, k - 1] = 1.0 - 2.0 * bit
        assert np.array_equal(d.mats, expected)


def test_json_round_trip_bit_exact():
    space = make_dyadic_space(3, 2)
    x = random_x(space, 7, tag="json")
    data = json.loads(json.dumps(operator_to_json(x)))
    back = operator_from_json(data)
    assert np.array_equal(back.mats, x.mats)
    assert np.array_equal(back.space.weights, x.space.weights)
    assert np.array_equal(back.space.partitions, x.space.partitions)


def test_operator_from_json_rejects_bad_shapes():
    space = make_dyadic_space(2, 2)
    data = operator_to_json(random_x(space, 8, tag="badjson"))
    data["mats"] = data["mats"][:-1]
    with pytest.raises(ValueError):
        operator_from_json(data)


def test_projection_witness_validation():
    space = make_dyadic_space(2, 2)
    with pytest.raises(ValueError):
        ProjectionWitness.make(identity(space) * 0.5, 1)
    wit = ProjectionWitness.make(identity(space), 1)
    assert wit.trace_value == pytest.approx(1.0, abs=1e-14)
