import random
from dataclasses import replace
from fractions import Fraction

import pytest

from clinchlab.core import UNBOUNDED, Arrival, Bidder, make_market
from clinchlab.divisible import EngineOptions, run_auction
from clinchlab.oracle import OracleOptions, default_bid_grid, ic_check, integrate
from clinchlab.scenarios import random_indivisible, random_market

GENERAL = EngineOptions(symmetric_fast_path=False)


def deviation(a, b):
    return max(
        max(abs(x - y) for x, y in zip(a.allocation, b.allocation)),
        max(abs(x - y) for x, y in zip(a.payment, b.payment)),
    )


@pytest.mark.parametrize(
    "vals, budgets",
    [([4, 3], [1, 1]), ([5, 3], [1.5, 0.5]), ([2, 1], [1 / 3, 2 / 3]), ([4, 3, 2], [1, 1, 1]), ([4, 3], [UNBOUNDED, 1])],
)
def test_oracle_matches_engine_on_small_markets(vals, budgets):
    m = make_market(vals, budgets)
    assert deviation(integrate(m), run_auction(m, GENERAL)[0]) <= 1e-3


def test_oracle_second_price_when_budgets_are_large():
    out = integrate(make_market([4, 3], [10, 10]))
    assert out.allocation == (1.0, 0.0)
    assert out.payment == (3.0, 0.0)


def test_oracle_confirms_mid_auction_arrival():
    m = replace(make_market([4, 3], [1, 1]), arrivals=(Arrival(1.5, Bidder("new", 2.5, 1)),))
    out = integrate(m)
    assert out.allocation_of("1") == pytest.approx(43 / 81, abs=1e-4)
    assert out.allocation_of("new") == 0.0
    assert deviation(out, run_auction(m, GENERAL)[0]) <= 1e-3


def test_oracle_error_shrinks_with_step():
    rng = random.Random(2)
    markets = [random_market(rng) for _ in range(5)]
    coarse = max(deviation(integrate(m, OracleOptions(step=1e-3)), run_auction(m, GENERAL)[0]) for m in markets)
    fine = max(deviation(integrate(m, OracleOptions(step=1e-4)), run_auction(m, GENERAL)[0]) for m in markets)
    assert fine < coarse
    assert 5 <= coarse / fine <= 20


def test_oracle_rejects_bad_step_and_indivisible():
    with pytest.raises(ValueError):
        OracleOptions(step=0)
    with pytest.raises(ValueError):
        integrate(make_market([6, 5], [4, 2], units=2))


def test_default_bid_grid():
    grid = default_bid_grid(make_market([4, 3], [1, 1]))
    assert len(grid) == 20 and grid[0] == 0.0 and grid[-1] == pytest.approx(8.0)
    exact = default_bid_grid(make_market([6, 5], [4, 2], units=2))
    assert all(isinstance(b, Fraction) for b in exact) and exact[-1] == 12


def test_ic_divisible_truthful_is_best():
    m = make_market([4, 3], [1, 1])
    for bid in m.ids:
        assert ic_check(m, bid) <= 1e-6


def test_ic_indivisible_exact_zero():
    m = make_market([6, 5, 4], [4, 2, 2], units=5)
    for bid in m.ids:
        gain = ic_check(m, bid)
        assert isinstance(gain, Fraction)
        assert gain <= 0


def test_ic_on_random_markets():
    rng = random.Random(9)
    for _ in range(5):
        m = random_market(rng)
        assert ic_check(m, m.ids[0]) <= 1e-6
        mi = random_indivisible(rng)
        assert ic_check(mi, mi.ids[-1]) <= 0


def test_ic_check_truth_only_grid_gives_zero():
    m = make_market([4, 3], [1, 1])
    assert ic_check(m, "1", [4.0]) == 0.0
