"""Shared oracles and samplers for the test suite.

Oracles here stay independent of the library paths they check: plain
Python loops, dict-based averaging, sorted-eigenvalue counting.
"""

import numpy as np

from ncmartingale import make_dyadic_space, random_martingale
from ncmartingale.seeds import split_rng

TEST_SEED = 20240810

SPACE_SHAPES = ((2, 2), (3, 2), (3, 3), (4, 2))


def small_spaces():
    return [make_dyadic_space(d, n) for d, n in SPACE_SHAPES]


def random_x(space, t, scale=1.0, hermitian=False, tag="x"):
    seed = split_rng(TEST_SEED, tag, t).integers(2 ** 32)
    return random_martingale(space, scale, seed, hermitian=hermitian)


def frobenius_sq_oracle(x) -> float:
    """tau(x* x) by direct elementwise summation."""
    total = 0.0
    n = x.space.matrix_dim
    for s in range(x.space.site_count):
        acc = 0.0
        for i in range(n):
            for j in range(n):
                z = x.mats[s][i, j]
                acc += z.real ** 2 + z.imag ** 2
        total += float(x.space.weights[s]) * acc / n
    return total


def scalar_cond_exp_oracle(space, values, level):
    """Classical weighted cell averaging of scalar site values."""
    row = space.partitions[level - 1]
    out = [0.0] * space.site_count
    for cell in sorted(set(int(c) for c in row)):
        idx = [s for s in range(space.site_count) if int(row[s]) == cell]
        w = sum(float(space.weights[s]) for s in idx)
        avg = sum(float(space.weights[s]) * values[s] for s in idx) / w
        for s in idx:
            out[s] = avg
    return out


def spectral_tail_oracle(mats_psd, weights, matrix_dim, lam) -> float:
    """tau of the spectral projection above lam, by sorting eigenvalues."""
    total = 0.0
    for s in range(len(weights)):
        eigs = sorted(float(v) for v in np.linalg.eigvalsh(mats_psd[s]))
        count = sum(1 for v in eigs if v > lam)
        total += float(weights[s]) * count / matrix_dim
    return total
