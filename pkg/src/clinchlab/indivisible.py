"""Adaptive clinching auction for a fixed number of identical indivisible units.

All arithmetic is exact: prices, payments and budgets are Fractions (or the
unbounded float sentinel for budgets), quantities are ints. The clock jumps
from one event price to the next since nothing changes in between.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .core import Indivisible, Market, Outcome, is_unbounded, validate_market


@dataclass(frozen=True)
class IndivisibleState:
    c: Fraction
    x: tuple[int, ...]
    pi: tuple[Fraction, ...]
    d: tuple[int, ...]
    l: int


@dataclass(frozen=True)
class UnitEvent:
    """One pass of the clinch loop, triggered by a drop or a demand decrement."""

    c: Fraction
    kind: str  # "drop" or "demand"
    bidder: int
    deltas: tuple[int, ...]
    l: int


def _exact(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(value)  # exact binary value of the float
    return Fraction(value)


class _Run:
    def __init__(self, market: Market):
        self.vals = [_exact(b.valuation) for b in market.bidders]
        self.budgets = [b.budget if is_unbounded(b.budget) else _exact(b.budget) for b in market.bidders]
        n = len(self.vals)
        self.l = market.supply.units
        self.x = [0] * n
        self.pi = [Fraction(0)] * n
        self.d = [self.l + 1] * n
        self.dropped = [False] * n
        self.c = Fraction(0)
        self.log: list[UnitEvent] = []

    def active(self, j: int) -> bool:
        return not self.dropped[j] and self.d[j] > 0 and self.vals[j] >= self.c

    def touch_price(self, j: int):
        if is_unbounded(self.budgets[j]):
            return None
        return (self.budgets[j] - self.pi[j]) / self.d[j]

    def clinch(self, kind: str, j: int) -> None:
        deltas = [0] * len(self.d)
        for i in range(len(self.d)):
            rivals = sum(self.d) - self.d[i]
            delta = max(self.l - rivals, 0)
            if delta:
                self.x[i] += delta
                self.pi[i] += self.c * delta
                self.d[i] -= delta
                self.l -= delta
                deltas[i] = delta
        self.log.append(UnitEvent(self.c, kind, j, tuple(deltas), self.l))

    def step(self) -> bool:
        live = [j for j in range(len(self.d)) if self.active(j)]
        if not live:
            return False
        candidates = [self.vals[j] for j in live]
        candidates += [t for t in map(self.touch_price, live) if t is not None]
        self.c = max(self.c, min(candidates))
        while True:
            drop = next((j for j in range(len(self.d)) if self.active(j) and self.vals[j] == self.c), None)
            if drop is None:
                break
            self.d[drop] = 0
            self.dropped[drop] = True
            self.clinch("drop", drop)
        while True:
            touch = next(
                (j for j in range(len(self.d)) if self.active(j) and self.touch_price(j) == self.c),
                None,
            )
            if touch is None:
                break
            self.d[touch] -= 1
            self.clinch("demand", touch)
        return True

    def state(self) -> IndivisibleState:
        return IndivisibleState(self.c, tuple(self.x), tuple(self.pi), tuple(self.d), self.l)


def run_indivisible(market: Market) -> tuple[Outcome, list[UnitEvent]]:
    """Run the unit-by-unit clinching auction; returns (outcome, event log)."""
    market = validate_market(market)
    if not isinstance(market.supply, Indivisible):
        raise ValueError("run_indivisible needs an Indivisible supply")
    run = _Run(market)
    # every step either drops a bidder or lowers a finite demand, so this halts
    limit = len(run.d) * (run.l + 2) + 1
    for _ in range(limit):
        if not run.step():
            break
    else:  # pragma: no cover - guarded by the counting argument above
        raise RuntimeError("indivisible auction did not terminate")
    return Outcome(market.ids, tuple(run.x), tuple(run.pi)), run.log


def unit_prices(log: list[UnitEvent]) -> list[Fraction]:
    """Price paid for each unit, in the order units were clinched."""
    prices = []
    for ev in log:
        prices.extend([ev.c] * sum(ev.deltas))
    return prices


def event_rows(ids: tuple[str, ...], log: list[UnitEvent]) -> list[dict]:
    rows = []
    for ev in log:
        row = {"c": ev.c, "kind": ev.kind, "bidder": ids[ev.bidder]}
        for bid, delta in zip(ids, ev.deltas):
            row[f"delta_{bid}"] = delta
        row["l"] = ev.l
        rows.append(row)
    return rows

