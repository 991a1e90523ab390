import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stripent.counterexample_y import build_y, build_y_uncollapsed
from stripent.errors import ContractError, ResourceError
from stripent.sft_model import SftSpec, count_locally_admissible, full_shift, hard_square
from stripent.strip_transfer import (
    LogCount,
    build_transfer,
    build_transfer_recursive_hardsquare,
    enumerate_columns,
    log_weighted_count,
    matrix_from_text,
    matrix_to_text,
    recursive_reindex_permutation,
    weighted_count,
)

HS = hard_square()


def test_columns_small_heights():
    assert enumerate_columns(HS, 1).columns == [(0,), (1,)]
    three = enumerate_columns(HS, 3).columns
    assert three == [(0, 0, 0), (0, 0, 1), (0, 1, 0), (1, 0, 0), (1, 0, 1)]
    assert len(enumerate_columns(HS, 10)) == 144


def test_columns_fibonacci_law():
    counts = [len(enumerate_columns(HS, n)) for n in range(1, 21)]
    assert counts[:2] == [2, 3]
    for a, b, c in zip(counts, counts[1:], counts[2:]):
        assert c == a + b


def test_columns_brute_force_generic_spec():
    spec = SftSpec.from_predicates("sym3", range(3), None, lambda a, b: True, lambda a, b: (a + b) % 3 != 2)
    for n in range(1, 6):
        brute = [
            c for c in product(range(3), repeat=n) if all((a + b) % 3 != 2 for a, b in zip(c, c[1:]))
        ]
        assert enumerate_columns(spec, n).columns == sorted(brute)


def test_column_cap():
    with pytest.raises(ResourceError):
        enumerate_columns(HS, 20, cap=100)


def test_index_of():
    cols = enumerate_columns(HS, 5)
    for i, c in enumerate(cols.columns):
        assert cols.index_of(c) == i
    with pytest.raises(ContractError):
        cols.index_of((1, 1, 0, 0, 0))


def test_transfer_small_matrices():
    np.testing.assert_array_equal(build_transfer(HS, 1).toarray(), [[1, 1], [1, 0]])
    np.testing.assert_array_equal(build_transfer(HS, 2).toarray(), [[1, 1, 1], [1, 0, 1], [1, 1, 0]])


@pytest.mark.parametrize("n", [1, 2, 3, 4, 6])
def test_bitmask_and_generic_agree(n):
    a = build_transfer(HS, n, method="bitmask").toarray()
    b = build_transfer(HS, n, method="generic").toarray()
    np.testing.assert_array_equal(a, b)


def test_unit_weights_give_01_matrices():
    for spec in (HS, full_shift(3), build_y(2).with_weights({"N": 1})):
        M = build_transfer(spec, 2).toarray()
        assert set(np.unique(M)) <= {0.0, 1.0}


def test_hard_square_matrix_symmetric():
    tm = build_transfer(HS, 7)
    assert tm.symmetric
    assert (tm.matrix != tm.matrix.T).nnz == 0


def test_weighting_conventions():
    sym = HS.with_weights({1: 4})
    M = build_transfer(sym, 1).toarray()
    # symmetric rule: sqrt(w(r) w(c))
    np.testing.assert_allclose(M, [[1, 2], [2, 0]])
    y = build_y(5)
    tm = build_transfer(y, 1)
    assert not tm.symmetric
    A = tm.toarray()
    w = tm.column_weight
    pat = tm.pattern().toarray()
    np.testing.assert_allclose(A, pat * w[None, :])


@pytest.mark.parametrize("n", range(1, 11))
def test_recursive_builder_matches_direct(n):
    rec = build_transfer_recursive_hardsquare(n)
    direct = build_transfer(HS, n)
    assert (rec.matrix != direct.matrix).nnz == 0
    perm = recursive_reindex_permutation(n)
    assert sorted(perm.tolist()) == list(range(direct.dim))


def test_weighted_count_examples():
    assert weighted_count(HS, 1, 2) == 3
    assert weighted_count(HS, 2, 2) == 7
    for spec in (HS, build_y(7), HS.with_weights({1: 3})):
        for n in (1, 2, 3):
            assert weighted_count(spec, n, 1) == sum(enumerate_columns(spec, n).exact_weights())


@pytest.mark.parametrize("n,m", [(n, m) for n in range(1, 5) for m in range(1, 5)])
def test_oracle_hard_square(n, m):
    assert weighted_count(HS, n, m) == count_locally_admissible(HS, m, n)


@pytest.mark.parametrize("k", [1, 2, 3])
@pytest.mark.parametrize("n,m", [(n, m) for n in range(1, 5) for m in range(1, 5)])
def test_oracle_counterexample_uncollapsed(k, n, m):
    full = build_y_uncollapsed(k)
    if k == 1:
        collapsed = build_y(2).with_weights({"N": 1})
    else:
        collapsed = build_y(k)
    assert weighted_count(collapsed, n, m) == count_locally_admissible(full, m, n)


def test_log_count_switch():
    big = weighted_count(HS, 8, 3000)
    assert isinstance(big, LogCount)
    assert big.log == pytest.approx(log_weighted_count(HS, 8, 3000), rel=1e-12)
    assert float(big) == math.inf
    small = weighted_count(HS, 4, 20)
    assert isinstance(small, int)
    assert math.log(small) == pytest.approx(log_weighted_count(HS, 4, 20), rel=1e-13)


def test_log_subadditive_in_n():
    logs = {(n, m): log_weighted_count(HS, n, m) for n in range(1, 9) for m in range(1, 9)}
    for m in range(1, 9):
        for a in range(1, 9):
            for b in range(1, 9 - a):
                assert logs[(a + b, m)] <= logs[(a, m)] + logs[(b, m)] + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 5))
def test_weighted_count_matches_oracle_weighted(n, m, w1):
    spec = HS.with_weights({1: w1})
    if n * m > 24:
        return
    assert weighted_count(spec, n, m) == count_locally_admissible(spec, m, n)


def test_matrix_text_round_trip():
    tm = build_transfer(build_y(3), 2)
    text = matrix_to_text(tm)
    assert text.startswith("#")
    back = matrix_from_text(text)
    assert back.shape == tm.matrix.shape
    assert (back != tm.matrix).nnz == 0


def test_bad_arguments():
    with pytest.raises(ContractError):
        build_transfer(HS, 0)
    with pytest.raises(ContractError):
        build_transfer(full_shift(3), 2, method="bitmask")
    with pytest.raises(ContractError):
        weighted_count(HS, 1, 0)
