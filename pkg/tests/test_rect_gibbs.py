import csv
from collections import Counter
from fractions import Fraction
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stripent.errors import ContractError, ResourceError
from stripent.rect_gibbs import (
    SANDWICH_CSV_HEADER,
    CheckerboardOrder,
    DiscreteMeasure,
    Rect,
    boundary_config,
    cftp_sample,
    cftp_samples,
    check_boundary,
    config_leq,
    disagreement_prob,
    dominance_check,
    dominance_restriction_check,
    enumerate_fillings,
    exact_rect_measure,
    heat_bath_update,
    incomparable_point_masses,
    is_admissible_filling,
    mask_to_config,
    dominance_exhaustive,
    sandwich_csv_row,
    disagreement_sandwich,
    verify_coupling,
)

ONE = Rect(0, 0, 0, 0)
NBRS = [(1, 0), (-1, 0), (0, 1), (0, -1)]


def test_rect_basics():
    r = Rect.from_ranges((0, 2), (1, 2))
    assert (r.width, r.height) == (3, 2)
    assert r.sites[0] == (0, 1) and r.sites[3] == (0, 2)
    assert r.index((2, 2)) == 5
    assert (3, 1) not in r
    assert len(r.boundary()) == 2 * 3 + 2 * 2
    assert (-1, 0) not in r.boundary()  # frame corner
    assert str(r) == "[0,2]x[1,2]"
    with pytest.raises(ContractError):
        Rect(1, 0, 0, 0)


def test_boundary_examples():
    zero = boundary_config(ONE, "zero", "zero", "zero", "zero")
    assert zero == {s: 0 for s in NBRS}
    assert set(boundary_config(ONE, "+", "+", "+", "+").values()) == {0}
    assert set(boundary_config(ONE, "-", "-", "-", "-").values()) == {1}


def test_boundary_labels_follow_color():
    r = Rect(0, 3, 0, 2)
    b = boundary_config(r, "plus", "minus", "zero", "plus")
    for s in r.edge_sites()["up"] + r.edge_sites()["right"]:
        assert b[s] == (1 if sum(s) % 2 == 0 else 0)
    for s in r.edge_sites()["down"]:
        assert b[s] == (0 if sum(s) % 2 == 0 else 1)
    assert all(b[s] == 0 for s in r.edge_sites()["left"])


def test_check_boundary_rejects():
    r = Rect(0, 1, 0, 0)
    b = boundary_config(r, "zero", "zero", "zero", "zero")
    with pytest.raises(ContractError):
        check_boundary(r, {**b, (0, 1): 1, (1, 1): 1})
    with pytest.raises(ContractError):
        check_boundary(r, {**b, (5, 5): 0})
    with pytest.raises(ContractError):
        boundary_config(r, "zero", "up", "zero", "zero")


def test_exact_measure_examples():
    m = exact_rect_measure(ONE, ("zero",) * 4)
    assert m.count == 2 and m.site_prob((0, 0), 1) == Fraction(1, 2)
    m = exact_rect_measure(ONE, ("minus",) * 4)
    assert m.count == 1 and m.site_prob((0, 0), 1) == 0
    m = exact_rect_measure(Rect(0, 1, 0, 1), ("zero",) * 4)
    assert m.count == 7
    assert sum(m.atoms.values()) == 1


@pytest.mark.parametrize("w,h", [(1, 1), (2, 2), (3, 2), (2, 3), (3, 3), (4, 2)])
def test_fillings_match_brute_force(w, h):
    r = Rect(0, w - 1, 0, h - 1)
    for labels in [("zero",) * 4, ("plus", "minus", "zero", "plus"), ("minus",) * 4]:
        b = boundary_config(r, *labels)
        brute = [x for x in range(1 << (w * h)) if is_admissible_filling(r, b, x)]
        assert sorted(enumerate_fillings(r, b)) == brute
        assert 0 in brute


def test_exact_measure_cap():
    with pytest.raises(ResourceError):
        exact_rect_measure(Rect(0, 4, 0, 4), ("zero",) * 4, cap=20)


masks3 = st.integers(0, (1 << 9) - 1)


@settings(max_examples=300, deadline=None)
@given(masks3, masks3, masks3)
def test_order_is_partial_order(x, y, z):
    leq = CheckerboardOrder(Rect(0, 2, 0, 2))
    assert leq(x, x)
    if leq(x, y) and leq(y, x):
        assert x == y
    if leq(x, y) and leq(y, z):
        assert leq(x, z)


@settings(max_examples=200, deadline=None)
@given(masks3, masks3)
def test_order_matches_config_order(x, y):
    r = Rect(1, 3, 0, 2)
    assert CheckerboardOrder(r)(x, y) == config_leq(mask_to_config(r, x), mask_to_config(r, y))


def test_order_extremes():
    r = Rect(0, 2, 0, 1)
    leq = CheckerboardOrder(r)
    for x in range(1 << 6):
        assert leq(leq.minimal(), x) and leq(x, leq.maximal())


def test_dominance_identity():
    m = exact_rect_measure(Rect(0, 1, 0, 1), ("zero",) * 4)
    res = dominance_check(m, m)
    assert res.dominated
    assert verify_coupling(m, m, res.coupling, CheckerboardOrder(m.rect))
    assert dominance_check(m, m).dominated


def test_dominance_boundary_example():
    r = Rect(0, 1, 0, 2)
    lo = exact_rect_measure(r, ("zero", "minus", "minus", "minus"))
    hi = exact_rect_measure(r, ("zero", "plus", "plus", "plus"))
    res = dominance_check(lo, hi)
    assert res.dominated and verify_coupling(lo, hi, res.coupling, CheckerboardOrder(r))
    assert not dominance_check(hi, lo).dominated


def test_incomparable_point_masses():
    a, b = incomparable_point_masses()
    for mu, nu in ((a, b), (b, a)):
        res = dominance_check(mu, nu)
        assert not res.dominated
        assert res.upset_generators
        assert res.mu_upset > res.nu_upset


def test_dominance_rejects_mismatched_rects():
    a = exact_rect_measure(ONE, ("zero",) * 4)
    b = exact_rect_measure(Rect(1, 1, 0, 0), ("zero",) * 4)
    with pytest.raises(ContractError):
        dominance_check(a, b)


@st.composite
def measure_pairs(draw):
    r = Rect(0, 2, 0, 0)

    def one():
        atoms = draw(st.dictionaries(st.integers(0, 7), st.integers(1, 6), min_size=1, max_size=5))
        tot = sum(atoms.values())
        return DiscreteMeasure(r, {k: Fraction(v, tot) for k, v in atoms.items()})

    return one(), one()


@settings(max_examples=300, deadline=None)
@given(measure_pairs())
def test_strassen_consistency(pair):
    mu, nu = pair
    leq = CheckerboardOrder(mu.rect)
    res = dominance_check(mu, nu)
    if res.dominated:
        assert verify_coupling(mu, nu, res.coupling, leq)
    else:
        gens = res.upset_generators
        up = [x for x in range(8) if any(leq(g, x) for g in gens)]
        assert res.mu_upset == sum((mu.atoms.get(x, 0) for x in up), Fraction(0))
        assert res.nu_upset == sum((nu.atoms.get(x, 0) for x in up), Fraction(0))
        assert res.mu_upset > res.nu_upset


def test_dominance_exhaustive():
    rows = dominance_exhaustive()
    assert [r["rect"] for r in rows][0] == "[0,0]x[0,0]"
    assert sum(r["pairs"] for r in rows) > 1000
    assert all(r["failures"] == 0 for r in rows)


def test_restriction_examples():
    R = Rect(0, 1, 1, 2)
    big = Rect(-1, 2, 0, 2)
    plus = dominance_restriction_check(R, big, ("zero", "plus", "plus", "plus"))
    assert plus["ok"] and plus["direction"] == "plus"
    minus = dominance_restriction_check(R, big, ("zero", "minus", "minus", "minus"))
    assert minus["ok"] and minus["direction"] == "minus"
    same = dominance_restriction_check(R, R, ("zero", "plus", "plus", "plus"))
    assert same["ok"]
    with pytest.raises(ContractError):
        dominance_restriction_check(R, Rect(-1, 2, 0, 3), ("zero", "plus", "plus", "plus"))
    with pytest.raises(ContractError):
        dominance_restriction_check(R, big, ("zero", "plus", "minus", "plus"))


def test_disagreement_examples():
    assert disagreement_prob(ONE, ("zero",) * 4, ("minus",) * 4, (0, 0), ("up",)) == Fraction(1, 2)
    zero = exact_rect_measure(ONE, ("zero",) * 4)
    minus = exact_rect_measure(ONE, ("minus",) * 4)
    assert abs(zero.site_prob((0, 0), 0) - minus.site_prob((0, 0), 0)) == Fraction(1, 2)
    with pytest.raises(ResourceError):
        disagreement_prob(Rect(0, 3, 0, 3), ("zero",) * 4, ("zero",) * 4, (0, 0), ("up",))


def test_disagreement_same_boundary():
    r = Rect(0, 1, 0, 1)
    lbl = ("zero", "plus", "plus", "plus")
    m = exact_rect_measure(r, lbl)
    for s in r.sites:
        assert m.site_prob(s, 0) - m.site_prob(s, 0) == 0
        assert disagreement_prob(r, lbl, lbl, s, ("down", "left", "right")) >= 0


def test_sandwich_examples():
    for s in Rect(0, 1, 0, 1).sites:
        assert all(row["ok"] for row in disagreement_sandwich(Rect(0, 1, 0, 1), s))
    rows = disagreement_sandwich(Rect(0, 2, 0, 2), (1, 1))
    assert all(row["ok"] for row in rows)
    assert rows[0]["diff"] == Fraction(59, 153)
    one = disagreement_sandwich(ONE, (0, 0))
    for row in one:
        assert row["ok"]
        assert row["perc_bound"] == 1  # 2 * P(site open)


def test_sandwich_disagreement_equality_reported():
    rows = disagreement_sandwich(Rect(0, 2, 0, 1), (1, 0))
    for row in rows:
        assert row["dbar_equal"] == (row["disagreement"] == row["diff"])


def test_sandwich_csv_row():
    row = disagreement_sandwich(ONE, (0, 0))[0]
    line = sandwich_csv_row(row)
    assert line.startswith('"[0,0]x[0,0]","(0,0)",')
    fields = next(csv.reader([line]))
    assert len(fields) == len(SANDWICH_CSV_HEADER.split(","))
    assert fields[0] == "[0,0]x[0,0]" and fields[-1] == "True"


def test_heat_bath_monotone_exhaustive_2x2():
    r = Rect(0, 1, 0, 1)
    leq = CheckerboardOrder(r)
    us = [0.0, 0.25, 0.5, 0.5000001, 0.75, 0.999]
    for labels in [("zero",) * 4, ("plus",) * 4, ("minus", "plus", "zero", "minus")]:
        b = boundary_config(r, *labels)
        pairs = [(x, y) for x in range(16) for y in range(16) if leq(x, y)]
        for x, y in pairs:
            for k in range(4):
                for u in us:
                    assert leq(heat_bath_update(r, b, x, k, u), heat_bath_update(r, b, y, k, u))


def test_heat_bath_monotone_random_3x3():
    r = Rect(0, 2, 0, 2)
    leq = CheckerboardOrder(r)
    rng = np.random.default_rng(5)
    b = boundary_config(r, "plus", "minus", "zero", "plus")
    done = 0
    while done < 3000:
        x, y = (int(v) for v in rng.integers(0, 512, 2))
        if not leq(x, y):
            continue
        k = int(rng.integers(9))
        u = float(rng.random())
        assert leq(heat_bath_update(r, b, x, k, u), heat_bath_update(r, b, y, k, u))
        done += 1


def test_cftp_examples():
    assert all(cftp_sample(ONE, ("minus",) * 4, seed) == 0 for seed in range(20))
    r = Rect(0, 1, 0, 2)
    a = cftp_samples(r, ("zero", "minus", "plus", "zero"), seed=42, count=500)
    b = cftp_samples(r, ("zero", "minus", "plus", "zero"), seed=42, count=500)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, cftp_samples(r, ("zero", "minus", "plus", "zero"), seed=43, count=500))


def test_cftp_support_and_frequencies():
    r = Rect(0, 1, 0, 1)
    m = exact_rect_measure(r, ("zero",) * 4)
    n = 100_000
    counts = Counter(cftp_samples(r, ("zero",) * 4, seed=3, count=n).tolist())
    assert set(counts) == set(m.fillings)
    p = 1 / 7
    sigma = (n * p * (1 - p)) ** 0.5
    for f in m.fillings:
        assert abs(counts[f] - n * p) <= 4 * sigma


def test_cftp_explicit_boundary():
    r = Rect(0, 1, 0, 0)
    b = boundary_config(r, "zero", "zero", "zero", "zero")
    b[(0, 1)] = 1
    s = cftp_samples(r, b, seed=1, count=2000)
    assert set(s.tolist()) <= set(exact_rect_measure(r, b).fillings)
    assert not any(x & 1 for x in s.tolist())


def test_cftp_bad_count():
    with pytest.raises(ContractError):
        cftp_samples(ONE, ("zero",) * 4, seed=0, count=0)


def test_measure_marginal():
    big = exact_rect_measure(Rect(0, 1, 0, 1), ("zero",) * 4)
    sub = big.marginal(Rect(0, 0, 0, 0))
    assert sub.atoms == {0: Fraction(5, 7), 1: Fraction(2, 7)}
    with pytest.raises(ContractError):
        big.marginal(Rect(0, 2, 0, 0))


def test_all_label_boundaries_admissible():
    r = Rect(0, 2, 0, 1)
    for labels in product(("zero", "plus", "minus"), repeat=4):
        check_boundary(r, boundary_config(r, *labels))
