import random
from fractions import Fraction

import pytest

from clinchlab.analysis import indivisible_invariants, metrics
from clinchlab.core import UNBOUNDED, make_market
from clinchlab.indivisible import event_rows, run_indivisible, unit_prices
from clinchlab.scenarios import random_indivisible

F = Fraction


def two_bidder_market():
    return make_market([6, 9], [9, 15], units=4)


def three_bidder_market():
    return make_market([6, 5, 4], [4, 2, 2], units=5)


def test_two_bidder_allocation_and_lw():
    m = two_bidder_market()
    out, log = run_indivisible(m)
    assert out.allocation_of("1") == 1
    assert out.allocation_of("2") == 3
    assert metrics(m, out).lw == 21


def test_two_bidder_plus_unbounded_low_bidder():
    # the newcomer never wins a unit; the top bidder still takes three
    m = make_market([6, 9, 4], [9, 15, UNBOUNDED], units=4)
    out, _ = run_indivisible(m)
    assert out.allocation_of("3") == 0
    assert sorted(out.allocation) == [0, 1, 3]


def test_three_bidder_revenue_and_unit_prices():
    m = three_bidder_market()
    out, log = run_indivisible(m)
    assert metrics(m, out).rev == F(16, 3)
    assert unit_prices(log) == [F(2, 3), F(1), F(1), F(4, 3), F(4, 3)]
    assert out.allocation == (3, 1, 1)


def test_adding_unbounded_bidder_lowers_revenue():
    m = make_market([6, 5, 4, 1], [4, 2, 2, UNBOUNDED], units=5)
    out, _ = run_indivisible(m)
    assert metrics(m, out).rev == 5
    assert out.allocation == (3, 1, 1, 0)


def test_results_are_exact_types():
    out, log = run_indivisible(three_bidder_market())
    assert all(isinstance(x, int) for x in out.allocation)
    assert all(isinstance(p, Fraction) for p in out.payment)
    assert all(isinstance(ev.c, Fraction) for ev in log)


def test_float_inputs_are_converted_exactly():
    out, _ = run_indivisible(make_market([6.0, 5.0, 4.0], [4.0, 2.0, 2.0], units=5))
    assert out.payment == (F(8, 3), F(4, 3), F(4, 3))


def test_first_demand_drop_at_budget_over_units_plus_one():
    # every demand starts at l+1, so the first touch is at min B/(l+1)
    _, log = run_indivisible(three_bidder_market())
    assert log[0].kind == "demand"
    assert log[0].c == F(2, 6)


def test_single_unit_goes_to_top_bidder_at_second_valuation():
    out, _ = run_indivisible(make_market([5, 3], [UNBOUNDED, UNBOUNDED], units=1))
    assert out.allocation == (1, 0)
    assert out.payment == (F(3), F(0))


def test_event_rows_layout():
    m = three_bidder_market()
    _, log = run_indivisible(m)
    rows = event_rows(m.ids, log)
    assert len(rows) == len(log)
    assert list(rows[0]) == ["c", "kind", "bidder", "delta_1", "delta_2", "delta_3", "l"]
    assert rows[-1]["l"] == 0
    assert sum(r[f"delta_{i}"] for r in rows for i in m.ids) == 5


def test_rejects_divisible_market():
    with pytest.raises(ValueError):
        run_indivisible(make_market([2, 1], [1, 1]))


def test_invariants_on_goldens():
    for m in (two_bidder_market(), three_bidder_market()):
        out, log = run_indivisible(m)
        assert all(indivisible_invariants(m, out, log).values())


def test_invariants_on_random_markets():
    rng = random.Random(3)
    for _ in range(100):
        m = random_indivisible(rng)
        out, log = run_indivisible(m)
        checks = indivisible_invariants(m, out, log)
        assert all(checks.values()), (m, checks)
