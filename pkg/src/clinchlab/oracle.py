"""Brute-force reference implementations used to cross-check the engines.

`integrate` walks the price clock on a fixed grid and never uses the
closed-form segment laws or the max-budget shortcut for the clinching set:
at every grid price each active bidder clinches whatever part of the
remaining supply its rivals can no longer afford. That is a first-order
discretisation of the continuous auction, so its error shrinks linearly with
the step.

`ic_check` reruns an engine with one bidder misreporting and measures the
best utility gain over a grid of bids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Sequence

from .core import Bidder, Market, Outcome, utility, validate_market
from .divisible import EngineOptions, run_auction
from .indivisible import run_indivisible


class StepTooLarge(RuntimeError):
    pass


@dataclass(frozen=True)
class OracleOptions:
    step: float = 1e-4
    event_refine: int = 60

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step must be positive")


class _Grid:
    """Mutable auction state for the stepping integrator."""

    def __init__(self, market: Market, h: float):
        everyone = market.all_bidders
        self.h = h
        self.vals = [float(b.valuation) for b in everyone]
        self.b = [float(b.budget) for b in everyone]
        self.x = [0.0] * len(everyone)
        self.paid = [0.0] * len(everyone)
        self.S = 1.0
        self.p = 0.0
        self.active = list(range(len(market.bidders)))
        n0 = len(market.bidders)
        self.arrivals = [(float(a.price), n0 + k) for k, a in enumerate(market.arrivals)]

    def rival_demand(self, i: int, p: float, group=None) -> float:
        group = self.active if group is None else group
        total = math.fsum(self.b[j] for j in group if j != i)
        if p == 0:
            return math.inf if total > 0 else 0.0
        return total / p

    def shortfalls(self, p: float, group=None) -> list[tuple[int, float]]:
        """Bidders whose rivals demand less than S at price p, and by how much."""
        group = self.active if group is None else group
        out = []
        for i in group:
            gap = self.S - self.rival_demand(i, p, group)
            if gap > 0:
                out.append((i, gap))
        return out

    def clinch(self, p: float, group=None) -> None:
        # every bidder's share uses budgets from before this price
        takes = self.shortfalls(p, group)
        total = math.fsum(d for _, d in takes)
        if total > self.S:
            # more than one last survivor cannot happen; scale for safety
            if total > self.S + 10 * self.h:
                raise StepTooLarge(f"clinch of {total} exceeds remaining {self.S} at {p}")
            takes = [(i, d * self.S / total) for i, d in takes]
            total = self.S
        for i, d in takes:
            self.x[i] += d
            self.paid[i] += p * d
            self.b[i] -= p * d
        self.S -= total

    def check(self, p: float) -> None:
        if 1.0 - self.S > 1.0 + 10 * self.h or sum(self.x) > 1.0 + 10 * self.h:
            raise StepTooLarge(f"oversold at {p}")
        if p <= 0:
            return
        for i in self.active:
            if self.S - self.rival_demand(i, p) > 100 * self.h:
                raise StepTooLarge(f"demand invariant broken for bidder {i} at {p}")
        if any(b < -100 * self.h for b in self.b):
            raise StepTooLarge(f"budget overdrawn at {p}")


def integrate(market: Market, opts: OracleOptions | None = None) -> Outcome:
    """Approximate the divisible auction outcome on a price grid of step `opts.step`."""
    opts = opts or OracleOptions()
    market = validate_market(market)
    if not market.divisible:
        raise ValueError("integrate needs a divisible market")
    g = _Grid(market, opts.step)
    h = opts.step
    next_arrival = 0

    while g.S > 0:
        if not g.active:
            raise StepTooLarge(f"{g.S} left unsold with nobody active")
        drop = min(g.active, key=lambda i: g.vals[i])
        p_drop = g.vals[drop]
        p_arr = g.arrivals[next_arrival][0] if next_arrival < len(g.arrivals) else math.inf
        p_stop = min(p_drop, p_arr)

        if g.p == 0 and g.shortfalls(0.0):
            g.clinch(0.0)
            continue
        # While nobody's rivals fall short, nothing changes; jump to the last
        # grid price before the first shortfall by bisection on the grid index.
        if not g.shortfalls(min(g.p + h, p_stop)):
            steps = max(0, math.ceil((p_stop - g.p) / h) - 1)
            lo, hi = 0, steps
            if hi > 0 and g.shortfalls(g.p + hi * h):
                for _ in range(opts.event_refine):
                    if hi - lo <= 1:
                        break
                    mid = (lo + hi) // 2
                    if g.shortfalls(g.p + mid * h):
                        hi = mid
                    else:
                        lo = mid
                g.p += lo * h
            else:
                g.p += hi * h
        p_next = min(g.p + h, p_stop)
        g.clinch(p_next)
        g.p = p_next
        if g.p == p_drop and g.S > 0:
            g.active.remove(drop)
            if len(g.active) == 1:
                last = g.active[0]
                g.x[last] += g.S
                g.paid[last] += g.p * g.S
                g.b[last] -= g.p * g.S
                g.S = 0.0
            else:
                g.clinch(g.p)
        if g.p == p_arr:
            g.active.append(g.arrivals[next_arrival][1])
            next_arrival += 1
        if g.S <= 1e-15:
            g.S = 0.0
        g.check(g.p)

    ids = market.ids
    return Outcome(ids, tuple(g.x), tuple(g.paid))


def default_bid_grid(market: Market, points: int = 20) -> list:
    """`points` evenly spaced bids from 0 to twice the top valuation."""
    top = max(b.valuation for b in market.all_bidders)
    if isinstance(top, float) or market.divisible:
        return [2.0 * float(top) * k / (points - 1) for k in range(points)]
    return [Fraction(2 * top * k, points - 1) for k in range(points)]


def _with_bid(market: Market, bidder_id: str, bid) -> Market:
    bidders = tuple(replace(b, valuation=bid) if b.id == bidder_id else b for b in market.bidders)
    arrivals = tuple(
        replace(a, bidder=replace(a.bidder, valuation=bid)) if a.bidder.id == bidder_id else a
        for a in market.arrivals
    )
    return replace(market, bidders=bidders, arrivals=arrivals)


def _separate(market: Market, bidder_id: str, bid: float) -> float:
    # the divisible engine needs distinct valuations; nudge bids that collide
    others = {float(b.valuation) for b in market.all_bidders if b.id != bidder_id}
    while bid in others:
        bid = bid + 1e-9 * max(1.0, abs(bid))
    return bid


def _run(market: Market) -> Outcome:
    if market.divisible:
        return run_auction(market, EngineOptions(symmetric_fast_path=False))[0]
    return run_indivisible(market)[0]


def ic_check(market: Market, bidder_id: str, bid_grid: Sequence | None = None):
    """Largest utility gain bidder `bidder_id` can get by misreporting its valuation.

    Utility is always measured with the true valuation. The truthful bid is
    the baseline, so the result is 0 when no bid on the grid helps.
    """
    market = validate_market(market)
    truth = next(b for b in market.all_bidders if b.id == bidder_id)
    grid = default_bid_grid(market) if bid_grid is None else list(bid_grid)
    honest = _run(market)
    base = utility(truth, *honest.of(bidder_id))
    best = base - base  # zero of the right numeric type
    for bid in grid:
        if market.divisible:
            bid = _separate(market, bidder_id, float(bid))
        if any(a.bidder.id == bidder_id and bid <= a.price for a in market.arrivals):
            continue
        outcome = _run(validate_market(_with_bid(market, bidder_id, bid)))
        x, pay = outcome.of(bidder_id)
        gain = utility(Bidder(truth.id, truth.valuation, truth.budget), x, pay) - base
        if gain > best:
            best = gain
    return best
