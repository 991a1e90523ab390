import math

import numpy as np
import pytest

from stripent.counterexample_y import build_y
from stripent.entropy_lab import (
    dbar_entropy_bound,
    entropy_sequence,
    extrapolate,
    middle_row_experiment,
    strip_entropy,
)
from stripent.errors import ContractError
from stripent.sft_model import full_shift, hard_square

HS = hard_square()
# tool-derived fixture: hard-square entropy extrapolated from heights up to 16
H_PINNED = 0.4074951012606880


@pytest.fixture(scope="module")
def hs16():
    return entropy_sequence(HS, 16)


def test_strip_entropy_closed_forms():
    assert strip_entropy(HS, 1).contains(math.log((1 + math.sqrt(5)) / 2), slack=1e-15)
    assert strip_entropy(HS, 2).contains(math.log(1 + math.sqrt(2)), slack=1e-15)
    assert float(strip_entropy(HS, 1, tol=1e-14).width) <= 1e-13


def test_first_difference(hs16):
    d1 = hs16.deltas()[0]
    assert d1.contains(math.log(1 + math.sqrt(2)) - math.log((1 + math.sqrt(5)) / 2), slack=1e-15)
    assert float(d1.mid) == pytest.approx(0.4001617619, abs=1e-10)


def test_h2_over_2_above_estimate(hs16):
    est = extrapolate(hs16).h_est
    assert float(hs16.rows[1].h_over_n.mid) == pytest.approx(0.4406867935, abs=1e-10)
    for row in hs16.rows:
        assert float(row.h_over_n.hi) >= est - 1e-12


@pytest.mark.parametrize("q,n_max", [(2, 8), (3, 5), (4, 5)])
def test_full_shift(q, n_max):
    table = entropy_sequence(full_shift(q), n_max)
    for row in table.rows:
        assert row.h.contains(row.n * math.log(q), slack=1e-14)
    for d in table.deltas():
        assert d.contains(math.log(q), slack=1e-14)
    ex = extrapolate(table)
    assert ex.constant and ex.rate is None
    assert ex.h_est == pytest.approx(math.log(q), abs=1e-14)


def test_table_consistency(hs16):
    for a, b in zip(hs16.rows, hs16.rows[1:]):
        d = b.h - a.h
        assert (a.delta.lo, a.delta.hi) == (d.lo, d.hi)
    csv = hs16.to_csv().splitlines()
    assert csv[0].startswith("n,h_n,lo,hi,h_n_over_n,delta_n")
    assert len(csv) == 17


def test_extrapolation_hard_square(hs16):
    ex16 = extrapolate(hs16)
    ex14 = extrapolate(entropy_sequence(HS, 14))
    assert ex16.reliable and ex16.rate < 0
    assert abs(ex16.h_est - ex14.h_est) < 1e-6
    assert abs(ex16.h_est - H_PINNED) < 1e-12
    assert abs(ex16.h_est - float(hs16.deltas()[-1].mid)) < 1e-6
    assert abs(ex16.h_est - float(hs16.deltas()[-1].mid)) <= ex16.tail_bound * 1.5


def test_extrapolation_counterexample_unreliable():
    table = entropy_sequence(build_y(2**20), 7)
    assert not extrapolate(table).reliable


def test_extrapolate_needs_four_differences():
    with pytest.raises(ContractError):
        extrapolate(entropy_sequence(HS, 4))
    with pytest.raises(ContractError):
        entropy_sequence(HS, 1)


def test_differences_contract(hs16):
    # |D_{n+1} - D_n| <= r |D_n - D_{n-1}| + slack for one fitted r < 1, n in [3, 15]
    deltas = hs16.deltas()
    second = [deltas[i + 1] - deltas[i] for i in range(len(deltas) - 1)]
    mags = [abs(float(s.mid)) for s in second]
    widths = [float(s.width) for s in second]
    # smallest r that fits every step once enclosure widths are granted as slack
    ratios = {}
    for n in range(3, 15):
        # second[n - 1] is D_{n+1} - D_n
        excess = mags[n - 1] - widths[n - 1] - widths[n - 2]
        ratios[n] = max(excess, 0.0) / mags[n - 2]
    worst = max(ratios, key=ratios.get)
    assert ratios[worst] < 1, f"needs r={ratios[worst]:.3f} at n={worst}: {mags[worst - 1]:.3e} vs {mags[worst - 2]:.3e}"


def test_dbar_examples():
    assert dbar_entropy_bound(0.0, 7) == 0.0
    assert dbar_entropy_bound(0.5, 2) == pytest.approx(1.0397207708, abs=1e-10)
    assert dbar_entropy_bound(1.0, 2) == pytest.approx(math.log(2), abs=1e-15)
    with pytest.raises(ContractError):
        dbar_entropy_bound(1.5, 2)
    with pytest.raises(ContractError):
        dbar_entropy_bound(0.5, 1)


@pytest.mark.parametrize("size", [2, 3, 10, 1000])
def test_dbar_concave(size):
    grid = np.linspace(0.0, 1.0, 401)
    vals = np.array([dbar_entropy_bound(float(e), size) for e in grid])
    second = vals[:-2] - 2 * vals[1:-1] + vals[2:]
    assert np.all(second <= 1e-12)
    assert vals[0] == 0.0


def test_middle_row_full_shift():
    for row in middle_row_experiment(4, m=4, spec=full_shift(2), n_values=[2, 3, 4]):
        assert row["line4"].contains(math.log(2), slack=1e-12)
        assert row["ok"]


def test_middle_row_gap_shrinks():
    rows = middle_row_experiment(8, m=8, n_values=[2, 4, 6, 8])
    for a, b in zip(rows, rows[1:]):
        assert b["diff"] < a["diff"]


def test_middle_row_matches_difference():
    rows = middle_row_experiment(4, m=8, n_values=[2, 4])
    for row in rows:
        assert row["ok"], f"n={row['n']}: |line4 - Delta| = {row['diff']:.3e} > {row['allowed']:.3e}"
