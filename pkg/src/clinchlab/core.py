"""Domain types shared by the divisible and indivisible auction engines.

Bidders are kept in descending valuation order everywhere downstream, so
index 0 is always the highest bidder of the initial set. Online arrivals are
kept in a separate tuple in ascending arrival-price order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Sequence, Union

Number = Union[int, float, Fraction]

#: Budget sentinel for bidders without a budget cap. Compares above every
#: finite number, including Fractions.
UNBOUNDED = math.inf


class MarketError(ValueError):
    """Base class for rejected auction inputs."""


class DuplicateValuation(MarketError):
    pass


class NegativeInput(MarketError):
    pass


class ArrivalOrderViolation(MarketError):
    pass


class TooFewBidders(MarketError):
    pass


def is_unbounded(budget: Number) -> bool:
    return isinstance(budget, float) and math.isinf(budget) and budget > 0


@dataclass(frozen=True)
class Bidder:
    id: str
    valuation: Number
    budget: Number = UNBOUNDED


@dataclass(frozen=True)
class Divisible:
    """One unit of an infinitely divisible good."""

    @property
    def quantity(self) -> int:
        return 1


@dataclass(frozen=True)
class Indivisible:
    units: int

    @property
    def quantity(self) -> int:
        return self.units


Supply = Union[Divisible, Indivisible]


@dataclass(frozen=True)
class Arrival:
    """A bidder that joins the running auction when the clock reaches `price`."""

    price: Number
    bidder: Bidder


@dataclass(frozen=True)
class Market:
    bidders: tuple[Bidder, ...]
    supply: Supply = field(default_factory=Divisible)
    arrivals: tuple[Arrival, ...] = ()

    @property
    def divisible(self) -> bool:
        return isinstance(self.supply, Divisible)

    @property
    def all_bidders(self) -> tuple[Bidder, ...]:
        """Initial bidders followed by arriving bidders (engine index order)."""
        return self.bidders + tuple(a.bidder for a in self.arrivals)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(b.id for b in self.all_bidders)

    def with_bidder(self, bidder: Bidder) -> "Market":
        """Return the market with `bidder` added as an initial participant."""
        return validate_market(replace(self, bidders=self.bidders + (bidder,)))

    def without_arrivals(self) -> "Market":
        return replace(self, arrivals=())

    def is_symmetric(self) -> bool:
        budgets = {b.budget for b in self.all_bidders}
        return len(budgets) == 1 and not is_unbounded(next(iter(budgets)))

    def common_budget(self) -> Number:
        if not self.is_symmetric():
            raise NotSymmetric("bidders do not share one finite budget")
        return self.bidders[0].budget


class NotSymmetric(MarketError):
    pass


@dataclass(frozen=True)
class Outcome:
    """Final allocation and payment, aligned with `ids`."""

    ids: tuple[str, ...]
    allocation: tuple[Number, ...]
    payment: tuple[Number, ...]

    def __post_init__(self):
        if not (len(self.ids) == len(self.allocation) == len(self.payment)):
            raise ValueError("outcome vectors have mismatched lengths")

    def of(self, bidder_id: str) -> tuple[Number, Number]:
        i = self.ids.index(bidder_id)
        return self.allocation[i], self.payment[i]

    def allocation_of(self, bidder_id: str) -> Number:
        return self.of(bidder_id)[0]

    def payment_of(self, bidder_id: str) -> Number:
        return self.of(bidder_id)[1]

    @property
    def total_allocation(self) -> Number:
        if any(isinstance(a, float) for a in self.allocation):
            return math.fsum(self.allocation)
        return sum(self.allocation)


def _check_nonnegative(bidder: Bidder) -> None:
    if bidder.valuation < 0 or (isinstance(bidder.valuation, float) and math.isnan(bidder.valuation)):
        raise NegativeInput(f"bidder {bidder.id!r} has negative valuation {bidder.valuation}")
    if bidder.budget < 0 or (isinstance(bidder.budget, float) and math.isnan(bidder.budget)):
        raise NegativeInput(f"bidder {bidder.id!r} has negative budget {bidder.budget}")
    if isinstance(bidder.valuation, float) and math.isinf(bidder.valuation):
        raise NegativeInput(f"bidder {bidder.id!r} has an infinite valuation")


def validate_market(market: Market) -> Market:
    """Check the model assumptions and return the market in canonical order.

    Initial bidders are sorted by descending valuation (stable, so ties keep
    input order for the indivisible engine). Raises a `MarketError` subclass
    on any violated assumption. Idempotent.
    """
    if len(market.bidders) < 2:
        raise TooFewBidders(f"need at least 2 initial bidders, got {len(market.bidders)}")
    if isinstance(market.supply, Indivisible):
        if not isinstance(market.supply.units, int) or market.supply.units < 0:
            raise NegativeInput(f"indivisible supply must be a nonnegative integer, got {market.supply.units!r}")
        if market.arrivals:
            raise MarketError("online arrivals are only supported for the divisible good")

    everyone = market.bidders + tuple(a.bidder for a in market.arrivals)
    seen_ids = set()
    for bidder in everyone:
        _check_nonnegative(bidder)
        if bidder.id in seen_ids:
            raise MarketError(f"duplicate bidder id {bidder.id!r}")
        seen_ids.add(bidder.id)

    if market.divisible:
        vals = [b.valuation for b in everyone]
        if len(set(vals)) != len(vals):
            raise DuplicateValuation("divisible markets need pairwise distinct valuations")

    prev = None
    for arrival in market.arrivals:
        if arrival.price <= 0:
            raise ArrivalOrderViolation(f"arrival price must be positive, got {arrival.price}")
        if prev is not None and arrival.price <= prev:
            raise ArrivalOrderViolation("arrival prices must be strictly increasing")
        if arrival.bidder.valuation <= arrival.price:
            raise ArrivalOrderViolation(
                f"arriving bidder {arrival.bidder.id!r} must value the good above its arrival price"
            )
        prev = arrival.price

    ordered = tuple(sorted(market.bidders, key=lambda b: b.valuation, reverse=True))
    return replace(market, bidders=ordered)


def utility(bidder: Bidder, allocation: Number, payment: Number) -> Number:
    """Quasi-linear utility; a budget breach is worth minus infinity."""
    if payment > bidder.budget:
        return -math.inf
    return bidder.valuation * allocation - payment


def make_market(
    valuations: Sequence[Number],
    budgets: Sequence[Number],
    *,
    units: int | None = None,
    ids: Sequence[str] | None = None,
) -> Market:
    """Convenience constructor; ids default to "1", "2", ... in input order."""
    if len(valuations) != len(budgets):
        raise ValueError("valuations and budgets differ in length")
    if ids is None:
        ids = [str(i + 1) for i in range(len(valuations))]
    bidders = tuple(Bidder(i, v, b) for i, v, b in zip(ids, valuations, budgets))
    supply: Supply = Divisible() if units is None else Indivisible(units)
    return validate_market(Market(bidders, supply))
