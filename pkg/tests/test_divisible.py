import math

import pytest

from clinchlab.core import UNBOUNDED, Arrival, Bidder, Market, make_market
from clinchlab.divisible import (
    AuctionState,
    DomainError,
    EngineOptions,
    EventKind,
    LawKind,
    SegmentLaw,
    clinch_start_price,
    drop_clinch_step,
    handle_arrival,
    law_for,
    next_event,
    run_auction,
    segment_evolve,
    symmetric_closed_form,
    wishful_allocation,
)

FAST = EngineOptions(symmetric_fast_path=True)
GENERAL = EngineOptions(symmetric_fast_path=False)
BOTH = [FAST, GENERAL]


def approx(v, tol=1e-9):
    return pytest.approx(v, abs=tol)


def _state(price, x, b, active, clinching=(), remaining=None):
    if remaining is None:
        remaining = 1 - sum(x)
    return AuctionState(
        price, tuple(x), tuple(b), (0.0,) * len(x), frozenset(active), frozenset(clinching), remaining
    )


@pytest.mark.parametrize("opts", BOTH)
def test_equal_budgets_two_bidders(opts):
    out, _ = run_auction(make_market([4, 3], [1, 1]), opts)
    assert out.allocation == (approx(5 / 9), approx(4 / 9))
    assert out.payment == (approx(1), approx(2 / 3))


@pytest.mark.parametrize("opts", BOTH)
def test_single_winner_pays_log_price(opts):
    out, _ = run_auction(make_market([5, 3], [1.5, 0.5]), opts)
    assert out.allocation == (approx(1), approx(0))
    assert out.payment[0] == approx(0.5 * math.log(6) + 0.5)
    assert out.payment[1] == 0


def test_late_join_allocation():
    out, trace = run_auction(make_market([2, 1], [1 / 3, 2 / 3]))
    x1 = 1 / (2 * math.e) + math.e / 18
    assert out.allocation == (approx(x1), approx(1 - x1))
    joins = [e for e in trace.events if e.kind is EventKind.JOIN_CLINCH]
    assert len(joins) == 1 and joins[0].price == approx(math.e / 3, 1e-12)


def test_added_bidder_splits_at_its_drop():
    out, _ = run_auction(make_market([5, 3, 2], [1.5, 0.5, 3]))
    assert out.allocation == (approx(0.75), approx(0.25), approx(0))
    assert out.payment == (approx(1.5), approx(0.5), approx(0))


@pytest.mark.parametrize(
    "budgets,expected", [((1, 1), 1), ((1.5, 0.5), 0.5), ((1 / 3, 2 / 3), 1 / 3), ((1, 1, 1, 1), 3)]
)
def test_clinch_start_price(budgets, expected):
    n = len(budgets)
    st = _state(0.0, [0.0] * n, budgets, range(n))
    assert clinch_start_price(st) == approx(expected)


def test_clinch_start_scales_with_remaining_supply():
    st = _state(1.5, [0.3, 0.3, 0.0], [0.5, 0.5, 1.0], range(3), remaining=0.4)
    assert clinch_start_price(st) == approx(1.0 / 0.4)


def test_log_segment_budget():
    law = SegmentLaw(0.5, 1, 0.5, 1.5)
    assert law.kind is LawKind.LOG
    assert law.budget(3) == approx(1.5 - 0.5 * math.log(6))
    st = _state(0.5, [0, 0], [1.5, 0.5], [0, 1], [0])
    end = segment_evolve(law, st, 3.0)
    assert end.b[0] == approx(1.5 - 0.5 * math.log(6))
    assert end.x[0] == approx(0.5 * (1 / 0.5 - 1 / 3))
    assert end.remaining == approx(0.5 / 3)
    assert end.b[1] == 0.5 and end.x[1] == 0


def test_power_segment_budget():
    law = SegmentLaw(1.0, 2, 0.0, 1.0)
    assert law.kind is LawKind.POWER
    assert law.budget(3) == approx(1 / 3)
    law = SegmentLaw(2 / 3, 2, 0.0, 1 / 3)
    for p in (0.7, 1.0, 1.5):
        assert law.budget(p) == approx(2 / (9 * p))


def test_power_segment_with_outsiders_matches_ode_numerically():
    law = SegmentLaw(1.0, 3, 0.4, 0.8)
    # d beta/dp = -S, S = ((c-1) beta + D)/p; check by finite differences
    for p in (1.2, 2.0, 3.5):
        h = 1e-6
        slope = (law.budget(p + h) - law.budget(p - h)) / (2 * h)
        assert slope == pytest.approx(-law.supply(p), rel=1e-6)
        gain_slope = (law.clinched(p + h) - law.clinched(p - h)) / (2 * h)
        assert gain_slope == pytest.approx(law.supply(p) / p, rel=1e-6)
        assert law.paid(p) == pytest.approx(law.beta0 - law.budget(p), rel=1e-12)


def test_zero_length_segment_is_identity():
    st = _state(1.0, [0, 0], [1, 1], [0, 1], [0, 1])
    assert segment_evolve(SegmentLaw(1.0, 2, 0.0, 1.0), st, 1.0) is st


def test_segment_rejects_nonpositive_start():
    st = _state(0.0, [0, 0], [1, 1], [0, 1], [0, 1])
    with pytest.raises(DomainError):
        segment_evolve(SegmentLaw(0.0, 2, 0.0, 1.0), st, 1.0)


def test_next_event_examples():
    m = make_market([2, 1], [1 / 3, 2 / 3])
    _, trace = run_auction(m)
    st = trace.events[0].state
    assert next_event(st, law_for(st), m) == (approx(math.e / 3, 1e-12), EventKind.JOIN_CLINCH)

    m = make_market([4, 3], [1, 1])
    _, trace = run_auction(m, GENERAL)
    assert next_event(trace.initial, law_for(trace.initial), m) == (1.0, EventKind.CLINCH_START)
    st = trace.events[0].state
    assert next_event(st, law_for(st), m) == (3.0, EventKind.DROP)


def test_next_event_prefers_drop_on_ties():
    m = Market(make_market([4, 3], [1, 1]).bidders, arrivals=(Arrival(3, Bidder("a", 3.5, 1)),))
    # drop of bidder 2, the arrival and the clinch start all fall on p = 3
    st = _state(2.0, [0, 0, 0], [3, 3, 1], [0, 1])
    price, kind = next_event(st, SegmentLaw(2.0, 0, 6.0, 0.0), m)
    assert (price, kind) == (3, EventKind.DROP)


def test_drop_step_splits_remaining_supply():
    # theta (budget 3) drops at 2 while bidders with 3/2 and 1/2 are idle
    st = _state(2.0, [0, 0, 0], [1.5, 0.5, 3.0], [0, 1, 2])
    new, deltas = drop_clinch_step(st, 2)
    assert deltas[:2] == (approx(0.75), approx(0.25))
    assert new.remaining == 0 and new.active == frozenset({0, 1})


def test_drop_step_sole_survivor_takes_rest():
    st = _state(3.0, [4 / 9, 4 / 9], [1 / 3, 1 / 3], [0, 1], [0, 1], remaining=1 / 9)
    new, deltas = drop_clinch_step(st, 1)
    assert deltas[0] == approx(1 / 9)
    assert new.x[0] == approx(5 / 9)
    assert wishful_allocation(st, 0) == approx(wishful_allocation(new, 0))


def test_drop_step_with_nothing_left():
    st = _state(3.0, [0.5, 0.5, 0], [0, 0, 1], [0, 1, 2], remaining=0.0)
    _, deltas = drop_clinch_step(st, 2)
    assert deltas == (0.0, 0.0, 0.0)


def test_arrival_joins_with_full_budget_and_clears_clinching_set():
    st = _state(1.5, [0.25, 0.25, 0.0], [0.6, 0.6, 1.0], [0, 1], [0, 1])
    new = handle_arrival(st, 2)
    assert new.active == frozenset({0, 1, 2}) and new.clinching == frozenset()
    assert new.x == st.x and new.b == st.b


def test_symmetric_closed_form_examples():
    x, b, psi = symmetric_closed_form(2, 1.0, 1.0, 3.0)
    assert (x, b, psi) == (approx(4 / 9), approx(1 / 3), approx(5 / 9))
    _, b, _ = symmetric_closed_form(3, 1.0, 2.0, 2.5)
    assert b == approx(0.64)
    x, b, psi = symmetric_closed_form(3, 1.0, 2.5, 2.5)
    assert psi == approx(1.0 / 2.5)
    assert psi == approx(x + b / 2.5)
    with pytest.raises(DomainError):
        symmetric_closed_form(2, 1.0, 1.0, 0.5)


def test_wishful_allocation():
    st = _state(3.0, [4 / 9, 4 / 9], [1 / 3, 1 / 3], [0, 1], [0, 1], remaining=1 / 9)
    assert wishful_allocation(st, 0) == approx(5 / 9)
    st = _state(3.0, [0.5, 0.5], [0.0, 0.0], [0, 1], remaining=0)
    assert wishful_allocation(st, 0) == 0.5
    with pytest.raises(DomainError):
        wishful_allocation(_state(0.0, [0, 0], [1, 1], [0, 1]), 0)


@pytest.mark.parametrize(
    "vals,beta",
    [
        ([4, 3], 1.0),
        ([4, 3, 2], 1.0),
        ([4, 3, 1.5], 1.0),
        ([10, 9, 8, 1], 2.0),
        ([3, 1], 5.0),
        ([9, 8, 7, 6, 5], 0.7),
        ([2, 1.5, 1.2], 3.0),
    ],
)
def test_fast_path_matches_general_engine(vals, beta):
    m = make_market(vals, [beta] * len(vals))
    fast, ftrace = run_auction(m, FAST)
    slow, strace = run_auction(m, GENERAL)
    for a, b in zip(fast.allocation + fast.payment, slow.allocation + slow.payment):
        assert a == approx(b)
    assert ftrace.end_price == approx(strace.end_price)
    for p in (0.1, 0.9, 1.7, 2.4, 3.3):
        fs, ss = ftrace.state_at(p), strace.state_at(p)
        assert all(a == approx(b) for a, b in zip(fs.x + fs.b, ss.x + ss.b))


def test_single_winner_when_second_value_below_budget():
    out, _ = run_auction(make_market([4, 3], [10, 10]))
    assert out.allocation == (1.0, 0.0) and out.payment == (3.0, 0.0)


def test_unbounded_budget_bidder():
    out, _ = run_auction(make_market([4, 3], [UNBOUNDED, 1]))
    assert out.allocation == (approx(1), approx(0))
    assert out.payment[0] == approx(1 + math.log(3))  # clinches from p=1 under D=1, rest at 3
    # the unbounded bidder clinches 2/3 before dropping at 3; the rest goes to bidder 1 at 3
    out, _ = run_auction(make_market([4, 3], [1, UNBOUNDED]))
    assert out.allocation == (approx(1 / 3), approx(2 / 3))
    assert out.payment == (approx(1), approx(math.log(3)))


def test_broke_rivals_give_free_split():
    out, trace = run_auction(make_market([4, 3, 2], [0, 0, 0]), GENERAL)
    assert out.allocation == (approx(1 / 3),) * 3
    assert out.payment == (0, 0, 0)
    out, _ = run_auction(make_market([4, 3], [1, 0]), GENERAL)
    assert out.allocation == (1.0, 0.0) and out.payment == (0.0, 0.0)


def test_zero_valuation_bidder_drops_first():
    out, trace = run_auction(make_market([4, 0, 3], [1, 1, 1]), GENERAL)
    assert trace.events[0].kind is EventKind.DROP and trace.events[0].price == 0
    assert out.allocation_of("2") == 0
    assert out.allocation_of("1") == approx(5 / 9)


def test_arrival_before_clinching_equals_offline_addition():
    base = make_market([4, 3], [1, 1])
    online = Market(base.bidders, arrivals=(Arrival(0.5, Bidder("t", 2.0, 1)),))
    offline = base.with_bidder(Bidder("t", 2.0, 1))
    a, _ = run_auction(online)
    b, _ = run_auction(offline)
    for i in a.ids:
        assert a.of(i) == (approx(b.allocation_of(i)), approx(b.payment_of(i)))


def test_arrival_mid_clinching_clears_clinching_set():
    base = make_market([4, 3], [1, 1])
    online = Market(base.bidders, arrivals=(Arrival(1.5, Bidder("t", 2.5, 1)),))
    out, trace = run_auction(online)
    arrival = next(e for e in trace.events if e.kind is EventKind.ARRIVAL)
    assert arrival.price == 1.5 and arrival.state.clinching == frozenset()
    assert sum(out.allocation) == approx(1)
    assert out.allocation_of("t") == 0
    # the frozen value comes from the oracle integrator (see test_oracle)
    assert out.allocation_of("1") == approx(43 / 81)
    assert out.payment_of("1") == approx(1)


def test_arrival_after_sale_has_no_effect():
    base = make_market([4, 3], [10, 10])
    online = Market(base.bidders, arrivals=(Arrival(3.5, Bidder("t", 5, 1)),))
    a, _ = run_auction(online)
    assert a.allocation == (1.0, 0.0, 0.0) and a.payment == (3.0, 0.0, 0.0)


def test_trace_lookup_and_rows():
    _, trace = run_auction(make_market([4, 3], [1, 1]), GENERAL)
    assert trace.state_at(0.5).remaining == 1.0
    assert trace.state_at(2.0).b[0] == approx(0.5)  # (2 - 1) * 1 / 2
    left, right = trace.state_at(3.0, "left"), trace.state_at(3.0, "right")
    assert left.x[0] == approx(4 / 9) and right.x[0] == approx(5 / 9)
    rows = trace.rows(samples=4)
    assert rows[0]["p"] == 0 and rows[-1]["S"] == 0
    assert set(rows[0]) >= {"p", "S", "x_1", "x_2", "b_1", "b_2", "active", "clinching"}
    prices = [r["p"] for r in rows]
    assert prices == sorted(prices)


def test_trace_events_are_ordered_and_chain():
    m = Market(make_market([4, 3, 1.2], [1, 1, 1]).bidders, arrivals=(Arrival(1.5, Bidder("t", 2.5, 1)),))
    _, trace = run_auction(m)
    prices = [e.price for e in trace.events]
    assert prices == sorted(prices)
    for seg, nxt in zip(trace.segments, trace.segments[1:]):
        assert seg.end_price <= nxt.start.price
    assert trace.events[-1].kind is EventKind.EXHAUST
