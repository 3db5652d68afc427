import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thermoform.errors import BudgetError, DomainError, NotFoundError, PreconditionError, SpecParseError
from thermoform.interval_map import (
    IntervalMap,
    boundary_check,
    exactness_time,
    parse_map,
    periodic_points,
    pull_backs,
    side_covering_points,
)

CHEB2 = IntervalMap.chebyshev2()
CHEB3 = IntervalMap.chebyshev3()


def cheb2_preimages_oracle(x0, n):
    """Preimages of 4y(1-y) by the quadratic formula, level by level."""
    pts = [x0]
    for _ in range(n):
        nxt = []
        for t in pts:
            r = math.sqrt(max(0.0, 1.0 - t))
            nxt += [0.5 * (1 - r), 0.5 * (1 + r)]
        pts = nxt
    return sorted(set(round(p, 12) for p in pts))


# --- evaluation ---------------------------------------------------------------


def test_eval_examples():
    assert CHEB2(0.3) == pytest.approx(0.84, abs=1e-15)
    assert CHEB2(0.5) == 1.0
    assert CHEB3(0.5) == pytest.approx(-1.0, abs=1e-15)


def test_derivative_examples():
    assert CHEB2.derivative(0.25) == 2.0
    assert CHEB2.derivative(0.5) == 0.0
    assert CHEB2.derivative(0.75) == -2.0


def test_eval_outside_domain_raises():
    with pytest.raises(DomainError):
        CHEB2(1.5)
    with pytest.raises(DomainError):
        CHEB3.derivative(-1.01)


def test_eval_clamps_to_domain():
    y = CHEB2(np.linspace(0, 1, 1001))
    assert y.min() >= 0.0 and y.max() <= 1.0


def test_structure_of_test_families():
    assert CHEB2.degree == 2
    assert CHEB3.degree == 3
    assert [c.point for c in CHEB2.criticals] == [0.5]
    assert [c.order for c in CHEB2.criticals] == [2]
    assert np.allclose(CHEB3.critical_points, [-0.5, 0.5])
    subs = [b.sub for b in CHEB3.branches]
    assert subs[0][0] == -1.0 and subs[-1][1] == 1.0
    for (a, b), (c, d) in zip(subs, subs[1:]):
        assert b == c
    assert [b.increasing for b in CHEB3.branches] == [True, False, True]


def test_cubic_critical_order_from_multiplicity():
    f = IntervalMap([0.0, 0.0, 0.0, 4.0], (-0.5, 0.5))  # 4x^3: f' has a double root at 0
    assert [(c.point, c.order) for c in f.criticals] == [(0.0, 3)]
    # every interior critical point cuts a branch, even where f keeps its orientation
    assert [b.increasing for b in f.branches] == [True, True]
    assert f.preimages(0.1, 1).size == 1


def test_map_must_preserve_domain():
    from thermoform.errors import MapError

    with pytest.raises(MapError):
        IntervalMap([0.0, 5.0, -5.0], (0.0, 1.0))


# --- preimages ----------------------------------------------------------------


def test_preimages_examples():
    assert np.allclose(CHEB2.preimages(0.75, 1), [0.25, 0.75], atol=1e-13)
    assert np.allclose(CHEB2.preimages(0.75, 2), cheb2_preimages_oracle(0.75, 2), atol=1e-12)
    assert np.allclose(CHEB2.preimages(0.75, 2), [0.0669872981, 0.25, 0.75, 0.9330127019], atol=1e-9)
    assert CHEB2.preimages(1.0, 1).tolist() == [0.5]


@pytest.mark.parametrize("x0", [0.1, 0.37, 0.75, 0.9])
@pytest.mark.parametrize("n", [1, 3, 6])
def test_preimages_match_quadratic_oracle(x0, n):
    got = CHEB2.preimages(x0, n)
    want = cheb2_preimages_oracle(x0, n)
    assert got.size == len(want) == 2**n
    assert np.allclose(got, want, atol=1e-11)


def test_preimages_domain_and_budget_errors():
    with pytest.raises(DomainError):
        CHEB2.preimages(1.2, 1)
    small = IntervalMap.chebyshev2(leaf_budget=2**10)
    with pytest.raises(BudgetError):
        small.preimages(0.75, 11)


def test_preimage_near_critical_flag():
    _, flag = CHEB2.preimages(1.0, 1, return_flag=True)
    assert flag
    _, flag = CHEB2.preimages(0.75, 4, return_flag=True)
    assert not flag


@settings(max_examples=40, deadline=None)
@given(x0=st.floats(-1.0, 1.0), n=st.integers(1, 5))
def test_preimage_residuals_cheb3(x0, n):
    y = CHEB3.preimages(x0, n)
    assert y.size <= 3**n
    assert np.all(np.abs(CHEB3.iterate(y, n) - x0) <= 1e-10)


@settings(max_examples=40, deadline=None)
@given(x0=st.floats(0.01, 0.99), m=st.integers(1, 3), n=st.integers(1, 3))
def test_preimage_composition(x0, m, n):
    direct = CHEB2.preimages(x0, m + n)
    via = np.sort(np.concatenate([CHEB2.preimages(y, m) for y in CHEB2.preimages(x0, n)]))
    keep = np.concatenate([[True], np.diff(via) > 1e-10])
    assert direct.shape == via[keep].shape
    assert np.allclose(direct, via[keep], atol=1e-10)


def test_generic_preimage_counts_equal_degree_power():
    rng = np.random.default_rng(7)
    for x0 in rng.uniform(0.05, 0.95, 5):
        assert CHEB2.preimages(x0, 7).size == 2**7
    for x0 in rng.uniform(-0.95, 0.95, 5):
        assert CHEB3.preimages(x0, 4).size == 3**4


# --- pull-backs ---------------------------------------------------------------


def test_pull_back_examples():
    assert pull_backs(CHEB2, (0.0, 1.0), 1) == [(0.0, 1.0)]
    (w,) = pull_backs(CHEB2, (0.96, 1.0), 1)
    assert w == pytest.approx((0.4, 0.6), abs=1e-12)
    a, b = pull_backs(CHEB2, (0.0, 0.5), 1)
    s = math.sqrt(0.5) / 2
    assert a == pytest.approx((0.0, 0.5 - s), abs=1e-12)
    assert b == pytest.approx((0.5 + s, 1.0), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(lo=st.floats(0.0, 0.9), width=st.floats(0.01, 0.5), n=st.integers(1, 3))
def test_pull_backs_are_maximal(lo, width, n):
    hi = min(1.0, lo + width)
    for w0, w1 in pull_backs(CHEB2, (lo, hi), n):
        inside = CHEB2.iterate(np.linspace(w0, w1, 33), n)
        assert np.all(inside >= lo - 1e-9) and np.all(inside <= hi + 1e-9)
        for x in (w0 - 1e-6, w1 + 1e-6):
            if 0.0 <= x <= 1.0:
                y = CHEB2.iterate(x, n)
                assert y < lo or y > hi


def test_boundary_check():
    assert boundary_check(CHEB2, (0.96, 1.0), pull_backs(CHEB2, (0.96, 1.0), 1)[0], 1)
    assert boundary_check(CHEB2, (0.0, 1.0), (0.0, 1.0), 1)
    w = pull_backs(CHEB2, (0.0, 0.6), 1)[0]
    assert boundary_check(CHEB2, (0.0, 0.6), w, 1)
    with pytest.raises(PreconditionError):
        boundary_check(CHEB2, (0.0, 0.6), (w[0], w[1] - 1e-3), 1)


def test_boundary_check_false_case():
    # affine contraction: the pull-back of [0, 0.6] is all of [0, 1], and f(0) = 0.5 is interior
    f = parse_map("poly:[0,1]:0.5,0.5")
    (w,) = pull_backs(f, (0.4, 0.8), 1)
    assert w == pytest.approx((0.0, 0.6), abs=1e-12)
    assert not boundary_check(f, (0.4, 0.8), w, 1)


# --- exactness and covering ---------------------------------------------------


def test_exactness_examples():
    assert exactness_time(CHEB2, (0.0, 1.0), 5) == 0
    assert exactness_time(CHEB2, (0.4, 0.6), 10) == 4
    assert exactness_time(CHEB2, (0.49, 0.51), 3) is None


def test_exactness_interval_images():
    img = (0.4, 0.6)
    seq = []
    for _ in range(3):
        img = CHEB2.image(*img)
        seq.append(img)
    assert seq[0] == pytest.approx((0.96, 1.0))
    assert seq[1] == pytest.approx((0.0, 0.1536))
    assert seq[2][1] == pytest.approx(4 * 0.1536 * (1 - 0.1536))


@settings(max_examples=40, deadline=None)
@given(c=st.floats(0.05, 0.95), r=st.floats(1e-4, 0.05), extra=st.floats(0.0, 0.1))
def test_exactness_monotone(c, r, extra):
    small = (max(0.0, c - r), min(1.0, c + r))
    big = (max(0.0, small[0] - extra), min(1.0, small[1] + extra))
    ts = exactness_time(CHEB2, small, 30)
    tb = exactness_time(CHEB2, big, 30)
    assert ts is not None and tb is not None and tb <= ts


def test_side_covering_examples():
    y1, y2 = side_covering_points(CHEB2, 0.75, (0.2, 0.8), 4)
    assert y1 != y2
    for y in (y1, y2):
        assert 0.2 <= y <= 0.8
        assert abs(CHEB2.iterate(y, 4) - 0.75) < 1e-10
    with pytest.raises(NotFoundError):
        side_covering_points(CHEB2, 0.75, (0.2, 0.8), 1)
    z1, z2 = side_covering_points(CHEB3, 0.0, (-0.5, 0.5), 3)
    assert z1 != z2 and abs(CHEB3.iterate(z1, 3)) < 1e-10 and abs(CHEB3.iterate(z2, 3)) < 1e-10


# --- periodic points ----------------------------------------------------------


def test_periodic_points_cheb2():
    orbs = periodic_points(CHEB2, 1)
    assert [(o.point, o.multiplier) for o in orbs] == [(0.0, 4.0), (0.75, -2.0)]
    orbs2 = periodic_points(CHEB2, 2)
    two = [o for o in orbs2 if o.period == 2]
    assert len(two) == 1
    assert np.allclose(sorted(two[0].orbit), [(5 - math.sqrt(5)) / 8, (5 + math.sqrt(5)) / 8], atol=1e-12)
    assert two[0].multiplier == pytest.approx(-4.0, rel=1e-10)


def test_periodic_points_cheb3_against_cubic_roots():
    orbs = periodic_points(CHEB3, 1)
    roots = np.sort(np.roots([4.0, 0.0, -4.0, 0.0]).real)  # 4x^3 - 3x = x
    assert len(orbs) == 3
    assert np.allclose(sorted(o.point for o in orbs), roots, atol=1e-12)


@pytest.mark.parametrize("N", [3, 5, 8])
def test_periodic_point_count_matches_fixed_points_of_iterate(N):
    # cheb2 is conjugate to the doubling map: f^N has exactly 2^N fixed points
    total = sum(o.period for o in periodic_points(CHEB2, N))
    assert total == 2**N


def test_periodic_orbit_invariants():
    for orb in periodic_points(CHEB2, 6):
        assert abs(CHEB2.iterate(orb.point, orb.period) - orb.point) < 1e-9
        prod = np.prod([CHEB2.derivative(p) for p in orb.orbit])
        assert orb.multiplier == pytest.approx(prod, rel=1e-8)
        assert len(set(np.round(orb.orbit, 9))) == orb.period


# --- map spec -----------------------------------------------------------------


def test_parse_map_forms():
    f = parse_map("poly:[0,1]:0,4,-4")
    xs = np.linspace(0, 1, 11)
    assert np.allclose(f(xs), CHEB2(xs), atol=1e-15)
    assert parse_map("quad:4")(0.5) == 1.0
    assert parse_map("cheb3").domain == (-1.0, 1.0)
    for bad in ["cheb4", "quad:5", "quad:x", "poly:[0,1]:", "poly:0,1"]:
        with pytest.raises(SpecParseError):
            parse_map(bad)
