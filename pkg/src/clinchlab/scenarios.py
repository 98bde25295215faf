"""Seeded random markets for property campaigns.

Samples are rejected when two of the prices that decide the branch structure
(valuations, arrival prices, multiples of the common budget) come within
`MIN_GAP` of each other. Such knife-edge inputs are legal, but float rounding
could then flip which branch the engine takes, so they make poor test cases.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

from .core import Arrival, Bidder, Market, make_market
from .divisible import symmetric_triple_structure

MIN_GAP = 1e-6


@dataclass(frozen=True)
class AddScenario:
    market: Market
    theta: Bidder


@dataclass(frozen=True)
class OnlineScenario:
    market: Market
    arrivals: tuple[Arrival, ...]


def _well_separated(points) -> bool:
    return all(abs(a - b) > MIN_GAP for a, b in combinations(points, 2))


def _budget_marks(beta: float, n: int) -> list[float]:
    return [k * beta for k in range(1, n + 2)]


def random_symmetric_add(rng: random.Random, max_bidders: int = 6) -> AddScenario:
    """Symmetric market with 2..max_bidders bidders plus one more with the same budget."""
    while True:
        n = rng.randint(2, max_bidders)
        beta = 2.0 * (1.0 - rng.random())  # in (0, 2]
        top = 1.5 * n * beta
        vals = [rng.uniform(0, top) for _ in range(n + 1)]
        if not _well_separated(vals + _budget_marks(beta, n) + [0.0]):
            continue
        market = make_market(vals[:n], [beta] * n)
        return AddScenario(market, Bidder("theta", vals[n], beta))


def random_symmetric_online(rng: random.Random, max_bidders: int = 6, max_arrivals: int = 3) -> OnlineScenario:
    """Symmetric market plus 1..max_arrivals bidders joining at increasing prices.

    About a third of the arrival schedules fall entirely before the base
    market's clinch start, so the offline reduction gets exercised too.
    """
    while True:
        n = rng.randint(2, max_bidders)
        beta = 2.0 * (1.0 - rng.random())
        top = 1.5 * n * beta
        vals = sorted((rng.uniform(0, top) for _ in range(n)), reverse=True)
        _, p_s = symmetric_triple_structure(vals, beta)
        t = rng.randint(1, max_arrivals)
        horizon = p_s if rng.random() < 1 / 3 else vals[0]
        gammas = sorted(rng.uniform(0, horizon) for _ in range(t))
        newcomers = [rng.uniform(g, top) for g in gammas]
        points = vals + newcomers + gammas + _budget_marks(beta, n + t) + [0.0]
        if not _well_separated(points) or any(v - g <= MIN_GAP for g, v in zip(gammas, newcomers)):
            continue
        market = make_market(vals, [beta] * n)
        arrivals = tuple(Arrival(g, Bidder(f"new{k + 1}", v, beta)) for k, (g, v) in enumerate(zip(gammas, newcomers)))
        return OnlineScenario(market, arrivals)


def random_market(
    rng: random.Random,
    max_bidders: int = 5,
    max_valuation: float = 4.0,
    budget_range: tuple[float, float] = (0.1, 2.0),
) -> Market:
    """Divisible market with independent valuations and budgets."""
    while True:
        n = rng.randint(2, max_bidders)
        vals = [rng.uniform(0, max_valuation) for _ in range(n)]
        budgets = [rng.uniform(*budget_range) for _ in range(n)]
        if _well_separated(vals + [0.0]):
            return make_market(vals, budgets)


def random_indivisible(rng: random.Random, max_bidders: int = 4, max_units: int = 5) -> Market:
    """Small unit-supply market with rational valuations and budgets."""
    n = rng.randint(2, max_bidders)
    units = rng.randint(1, max_units)
    vals = [Fraction(rng.randint(1, 40), rng.randint(1, 4)) for _ in range(n)]
    budgets = [Fraction(rng.randint(1, 60), rng.randint(1, 4)) for _ in range(n)]
    return make_market(vals, budgets, units=units)


def random_asymmetric_add(rng: random.Random, max_bidders: int = 5) -> AddScenario:
    market = random_market(rng, max_bidders)
    while True:
        v = rng.uniform(0, 4.0)
        if _well_separated([b.valuation for b in market.bidders] + [v]):
            return AddScenario(market, Bidder("theta", v, rng.uniform(0.1, 3.0)))
