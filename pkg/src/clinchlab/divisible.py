"""Adaptive clinching auction for one unit of a divisible good.

The price clock is simulated event to event. Between two events the active
set and the clinching set are fixed, and the common budget of the clinchers
follows a closed-form law (see `SegmentLaw`), so the only numerical work is
locating the price at which the clinchers' budget falls to the best
outsider's budget. Everything else (drops, arrivals, clinch starts) happens
at prices that are known in closed form.

Online arrivals are supported: an arriving bidder enters with its full budget
and the clinching set is recomputed from scratch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable

from .core import Market, Outcome, is_unbounded, validate_market

EPS_ROOT = 1e-12
EPS_OUT = 1e-9
EPS_INV = 1e-9

# relative slack when testing the clinching equality after an event
_EPS_SET = 1e-10
_MAX_EVENTS = 100_000


class EngineError(RuntimeError):
    pass


class NumericalFailure(EngineError):
    pass


class InvariantViolation(EngineError):
    pass


class DomainError(ValueError):
    pass


class EventKind(str, Enum):
    CLINCH_START = "clinch_start"
    DROP = "drop"
    JOIN_CLINCH = "join_clinch"
    ARRIVAL = "arrival"
    EXHAUST = "exhaust"


class LawKind(str, Enum):
    IDLE = "idle"
    LOG = "log"
    POWER = "power"


@dataclass(frozen=True)
class EngineOptions:
    symmetric_fast_path: bool = True


@dataclass(frozen=True)
class AuctionState:
    """Snapshot of the auction at one clock price.

    Vectors are indexed like ``Market.all_bidders``; bidders that have not
    arrived yet carry x=0 and their full budget but are not active.
    """

    price: float
    x: tuple[float, ...]
    b: tuple[float, ...]
    paid: tuple[float, ...]
    active: frozenset[int]
    clinching: frozenset[int]
    remaining: float


def _demand(total_budget: float, p: float) -> float:
    """Total demand of a group with `total_budget` at price p (0/0 counts as 0)."""
    if p == 0:
        return math.inf if total_budget > 0 else 0.0
    return total_budget / p


def _complement(b: Iterable[float], excluded: int, group: Iterable[int]) -> float:
    return math.fsum(b[j] for j in group if j != excluded)


@dataclass(frozen=True)
class SegmentLaw:
    """Closed-form evolution on a price interval with fixed active/clinching sets.

    With ``c`` clinchers sharing budget ``beta`` and non-clinching actives
    holding ``D`` in total, the remaining supply is ``((c-1)*beta + D)/p`` and
    each clincher's budget obeys ``d beta/dp = -S``. The solution is a power
    law in p for c >= 2 and logarithmic in p for c == 1.
    """

    p0: float
    c: int
    D: float
    beta0: float

    @property
    def kind(self) -> LawKind:
        if self.c == 0:
            return LawKind.IDLE
        return LawKind.LOG if self.c == 1 else LawKind.POWER

    def _check(self, p: float) -> None:
        if self.c and self.p0 <= 0:
            raise DomainError("clinching segments need a positive start price")
        if p < self.p0:
            raise DomainError(f"price {p} precedes segment start {self.p0}")

    @property
    def _u0(self) -> float:
        return (self.c - 1) * self.beta0 + self.D

    def budget(self, p: float) -> float:
        """Common clincher budget at price p."""
        self._check(p)
        if self.kind is LawKind.IDLE:
            return self.beta0
        if self.kind is LawKind.LOG:
            return self.beta0 - self.D * math.log(p / self.p0)
        k = self.c - 1
        return (self._u0 * (self.p0 / p) ** k - self.D) / k

    def supply(self, p: float) -> float:
        """Remaining supply S(p) while the segment's sets are in force."""
        self._check(p)
        if self.kind is LawKind.IDLE:
            raise DomainError("an idle segment does not determine the supply")
        if self.kind is LawKind.LOG:
            return self.D / p
        return self._u0 * (self.p0 / p) ** (self.c - 1) / p

    def clinched(self, p: float) -> float:
        """Quantity each clincher gains between p0 and p."""
        self._check(p)
        if self.kind is LawKind.IDLE:
            return 0.0
        if self.kind is LawKind.LOG:
            return self.D * (1.0 / self.p0 - 1.0 / p)
        c = self.c
        # u0 p0^(c-1) (p0^-c - p^-c) / c, written to stay accurate for p ~ p0
        return self._u0 / (c * self.p0) * -math.expm1(c * math.log(self.p0 / p))

    def paid(self, p: float) -> float:
        """Money each clincher spends between p0 and p."""
        self._check(p)
        if self.kind is LawKind.IDLE:
            return 0.0
        if self.kind is LawKind.LOG:
            return self.D * math.log(p / self.p0)
        k = self.c - 1
        return self._u0 / k * -math.expm1(k * math.log(self.p0 / p))

    def price_at_budget(self, target: float) -> float:
        """Price at which the clincher budget falls to `target` (inf if never)."""
        if self.kind is LawKind.IDLE or math.isinf(self.beta0):
            return math.inf
        if target >= self.beta0:
            return self.p0
        if self.kind is LawKind.LOG:
            if self.D <= 0:
                return math.inf
            root = self.p0 * math.exp((self.beta0 - target) / self.D)
        else:
            k = self.c - 1
            denom = k * target + self.D
            if denom <= 0:
                return math.inf
            root = self.p0 * (self._u0 / denom) ** (1.0 / k)
        return self._polish(root, target)

    def _polish(self, root: float, target: float) -> float:
        # The closed form can be off by a few ulps; make sure the budget has
        # not already crossed `target` before the returned price.
        if not math.isfinite(root):
            return root
        f = self.budget(root) - target
        tol = EPS_ROOT * max(1.0, abs(target))
        if abs(f) <= tol:
            return root
        lo, hi = self.p0, root
        if f > 0:
            hi = root * 2.0
            while self.budget(hi) > target:
                hi *= 2.0
                if hi > 1e300:
                    raise NumericalFailure("could not bracket join-clinch root")
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if self.budget(mid) > target:
                lo = mid
            else:
                hi = mid
            if hi - lo <= EPS_ROOT * max(1.0, hi):
                return hi
        raise NumericalFailure("join-clinch bisection did not converge")


def law_for(state: AuctionState) -> SegmentLaw:
    """Evolution law implied by the current active and clinching sets."""
    C = state.clinching
    outsiders = [i for i in state.active if i not in C]
    D = math.fsum(state.b[i] for i in outsiders)
    if not C:
        return SegmentLaw(state.price, 0, D, 0.0)
    beta0 = _common_budget(state.b, C)
    return SegmentLaw(state.price, len(C), D, beta0)


def _common_budget(b, group) -> float:
    vals = [b[i] for i in group]
    if any(math.isinf(v) for v in vals):
        return math.inf
    return math.fsum(vals) / len(vals)


def segment_evolve(law: SegmentLaw, state: AuctionState, p1: float) -> AuctionState:
    """Advance `state` from ``law.p0`` to `p1` assuming no event in between."""
    if p1 == state.price:
        return state
    if law.c and law.p0 <= 0:
        raise DomainError("clinching segments need a positive start price")
    if p1 < state.price:
        raise DomainError(f"cannot evolve backwards from {state.price} to {p1}")
    if law.kind is LawKind.IDLE:
        return replace(state, price=p1)
    beta1 = law.budget(p1)
    gain = law.clinched(p1)
    spend = law.paid(p1)
    x, b, paid = list(state.x), list(state.b), list(state.paid)
    for i in state.clinching:
        x[i] += gain
        b[i] = math.inf if math.isinf(b[i]) else max(beta1, 0.0)
        paid[i] += spend
    return replace(
        state,
        price=p1,
        x=tuple(x),
        b=tuple(b),
        paid=tuple(paid),
        remaining=law.supply(p1),
    )


def clinch_start_price(state: AuctionState) -> float:
    """First price at which an idle auction starts clinching.

    The best-funded active bidder is the first whose rivals' demand drops to
    the remaining supply, i.e. at (sum of the other budgets) / S. With the
    whole unit still unsold this is sum(b) - max(b).
    """
    if not state.active or state.remaining <= 0:
        return math.inf
    top = max(state.active, key=lambda i: state.b[i])
    rest = _complement(state.b, top, state.active)
    return rest / state.remaining


def wishful_allocation(state: AuctionState, i: int) -> float:
    """Most bidder i can still end up with: x_i + b_i / p."""
    if state.price <= 0:
        raise DomainError("wishful allocation is undefined at price 0")
    return state.x[i] + state.b[i] / state.price


def clinching_set(state: AuctionState) -> frozenset[int]:
    """Active bidders whose rivals' demand equals the remaining supply.

    Under the auction invariant the rivals' demand is smallest for the
    best-funded bidders, so only they need the equality test.
    """
    A = state.active
    if not A or state.remaining <= 0:
        return frozenset()
    b = state.b
    top_budget = max(b[i] for i in A)
    slack = _EPS_SET * max(1.0, abs(top_budget)) if math.isfinite(top_budget) else 0.0
    tops = [i for i in A if b[i] >= top_budget - slack]
    rest = _complement(b, tops[0], A)
    if math.isinf(rest):
        return frozenset()
    lhs = state.remaining * state.price
    if lhs >= rest - _EPS_SET * max(1.0, rest, lhs):
        return frozenset(tops)
    return frozenset()


def drop_clinch_step(state: AuctionState, k: int) -> tuple[AuctionState, tuple[float, ...]]:
    """Remove bidder k at its valuation and let the survivors clinch.

    Each survivor i takes the part of the remaining supply its rivals can no
    longer demand, paying the current price per unit. All amounts use the
    budgets from just before the drop. Returns the new state and the vector of
    clinched quantities.
    """
    p = state.price
    survivors = [i for i in state.active if i != k]
    S = state.remaining
    b = state.b
    deltas = [0.0] * len(b)
    for i in survivors:
        rival = _complement(b, i, survivors)
        deltas[i] = max(0.0, S - _demand(rival, p))
    total = math.fsum(deltas)
    if total > S * (1 + 1e-9) + 1e-12:
        raise InvariantViolation(f"drop at {p} would oversell: {total} > {S}")
    x, nb, paid = list(state.x), list(b), list(state.paid)
    takers = [i for i in survivors if deltas[i] > 0]
    common = None
    if len(takers) > 1 and all(math.isfinite(b[i]) for i in survivors):
        # every taker ends with sum(b) - p*S; compute it once so they agree exactly
        common = max(0.0, math.fsum(b[i] for i in survivors) - p * S)
    for i in takers:
        cost = p * deltas[i]
        if cost > b[i] * (1 + 1e-9) + 1e-12:
            raise InvariantViolation(f"bidder {i} would pay {cost} with budget {b[i]} at {p}")
        x[i] += deltas[i]
        paid[i] += cost
        if math.isfinite(b[i]):
            nb[i] = common if common is not None else max(0.0, b[i] - cost)
    remaining = S - total
    if remaining <= EPS_ROOT * max(1.0, S) or len(survivors) == 1:
        remaining = 0.0
    new = replace(
        state,
        x=tuple(x),
        b=tuple(nb),
        paid=tuple(paid),
        active=frozenset(survivors),
        remaining=remaining,
    )
    return new, tuple(deltas)


def handle_arrival(state: AuctionState, i: int) -> AuctionState:
    """Activate arriving bidder i (its x and budget are already in the vectors)."""
    return replace(state, active=state.active | {i}, clinching=frozenset())


@dataclass(frozen=True)
class Segment:
    law: SegmentLaw
    start: AuctionState
    end_price: float
    end: AuctionState


@dataclass(frozen=True)
class Event:
    price: float
    kind: EventKind
    bidder: int | None
    deltas: tuple[float, ...]
    state: AuctionState


@dataclass
class Trace:
    ids: tuple[str, ...]
    initial: AuctionState
    segments: list[Segment] = field(default_factory=list)
    events: list[Event] = field(default_factory=list)

    @property
    def final(self) -> AuctionState:
        return self.events[-1].state if self.events else self.initial

    @property
    def end_price(self) -> float:
        return self.final.price

    def state_at(self, p: float, side: str = "right") -> AuctionState:
        """State at price p; side="left" gives the limit from below."""
        if side not in ("left", "right"):
            raise ValueError("side must be 'left' or 'right'")
        for seg in self.segments:
            lo, hi = seg.start.price, seg.end_price
            inside = lo <= p < hi if side == "right" else lo < p <= hi
            if inside:
                return segment_evolve(seg.law, seg.start, p)
        # p sits on an event price without a following segment, or after the end
        best = self.initial
        for ev in self.events:
            if ev.price < p or (side == "right" and ev.price == p):
                best = ev.state
        return replace(best, price=p) if p >= best.price else best

    def rows(self, samples: int = 16) -> list[dict]:
        """Tabular trace: event boundaries plus `samples` points per segment."""
        points: list[AuctionState] = [self.initial]
        ev_iter = iter(self.events)
        pending = next(ev_iter, None)
        for seg in self.segments:
            while pending is not None and pending.price <= seg.start.price:
                points.append(pending.state)
                pending = next(ev_iter, None)
            width = seg.end_price - seg.start.price
            for j in range(samples):
                points.append(segment_evolve(seg.law, seg.start, seg.start.price + width * j / samples))
            points.append(seg.end)
        while pending is not None:
            points.append(pending.state)
            pending = next(ev_iter, None)
        return [_row(self.ids, s) for s in points]


def _row(ids, s: AuctionState) -> dict:
    row = {"p": s.price, "S": s.remaining}
    for name, vec in (("x", s.x), ("b", s.b)):
        for bid, val in zip(ids, vec):
            row[f"{name}_{bid}"] = val
    row["active"] = sum(1 << i for i in s.active)
    row["clinching"] = sum(1 << i for i in s.clinching)
    return row


class _Recorder:
    def __init__(self, ids, state: AuctionState):
        self.state = state
        self.trace = Trace(ids, state)

    def advance(self, law: SegmentLaw, p1: float) -> None:
        if p1 <= self.state.price:
            return
        start = self.state
        self.state = segment_evolve(law, start, p1)
        self.trace.segments.append(Segment(law, start, p1, self.state))

    def event(self, kind: EventKind, bidder=None, deltas=None) -> None:
        if deltas is None:
            deltas = (0.0,) * len(self.state.x)
        self.trace.events.append(Event(self.state.price, kind, bidder, tuple(deltas), self.state))


def _outcome(market: Market, state: AuctionState) -> Outcome:
    pay = []
    for bidder, b, spent in zip(market.all_bidders, state.b, state.paid):
        budget = float(bidder.budget)
        amount = spent if is_unbounded(bidder.budget) else budget - b
        # snap rounding noise at the budget boundary
        amount = min(max(amount, 0.0), budget)
        pay.append(amount)
    return Outcome(market.ids, tuple(state.x), tuple(pay))


def _initial_state(market: Market) -> AuctionState:
    everyone = market.all_bidders
    m = len(everyone)
    return AuctionState(
        price=0.0,
        x=(0.0,) * m,
        b=tuple(float(b.budget) for b in everyone),
        paid=(0.0,) * m,
        active=frozenset(range(len(market.bidders))),
        clinching=frozenset(),
        remaining=1.0,
    )


def run_auction(market: Market, opts: EngineOptions | None = None) -> tuple[Outcome, Trace]:
    """Run the continuous adaptive clinching auction; returns (outcome, trace)."""
    opts = opts or EngineOptions()
    market = validate_market(market)
    if not market.divisible:
        raise ValueError("run_auction needs a divisible market; use run_indivisible")
    if opts.symmetric_fast_path and not market.arrivals and market.is_symmetric():
        return _run_symmetric(market)
    return _run_general(market)


def _set_clinching(rec: _Recorder) -> None:
    """Recompute the clinching set and log a start/join event if it grew."""
    st = rec.state
    C = clinching_set(st)
    if C == st.clinching:
        return
    b = list(st.b)
    if len(C) > 1:
        common = _common_budget(b, C)
        for i in C:
            b[i] = common
    rec.state = replace(st, clinching=C, b=tuple(b))
    new = C - st.clinching
    if new:
        kind = EventKind.CLINCH_START if not st.clinching else EventKind.JOIN_CLINCH
        rec.event(kind, min(new))


def _drop_candidate(state: AuctionState, vals) -> tuple[float, int]:
    dropper = min(state.active, key=lambda i: (vals[i], -i))
    return vals[dropper], dropper


def _clinch_candidate(state: AuctionState, law: SegmentLaw) -> float:
    if not state.clinching:
        return clinch_start_price(state)
    b_out = max((state.b[i] for i in state.active if i not in state.clinching), default=None)
    return law.price_at_budget(b_out) if b_out is not None else math.inf


def next_event(state: AuctionState, law: SegmentLaw, market: Market, arrivals_done: int = 0) -> tuple[float, EventKind]:
    """Earliest upcoming event and its price.

    Candidates are the next drop among active bidders, the next scheduled
    arrival, and either the clinch start (idle auction) or the price where the
    clinchers' budget falls to the best outsider's. Ties go to drops, then
    arrivals, then clinching changes.
    """
    vals = [float(b.valuation) for b in market.all_bidders]
    options = []
    if state.active:
        options.append((_drop_candidate(state, vals)[0], EventKind.DROP))
    if arrivals_done < len(market.arrivals):
        options.append((float(market.arrivals[arrivals_done].price), EventKind.ARRIVAL))
    kind = EventKind.JOIN_CLINCH if state.clinching else EventKind.CLINCH_START
    options.append((_clinch_candidate(state, law), kind))
    price = min(p for p, _ in options)
    if not math.isfinite(price):
        raise NumericalFailure(f"no further event after price {state.price}")
    return max(price, state.price), next(k for p, k in options if p == price)


def _run_general(market: Market) -> tuple[Outcome, Trace]:
    vals = [float(b.valuation) for b in market.all_bidders]
    n0 = len(market.bidders)
    arrivals = [(float(a.price), n0 + k) for k, a in enumerate(market.arrivals)]
    rec = _Recorder(market.ids, _initial_state(market))
    next_arrival = 0

    for _ in range(_MAX_EVENTS):
        st = rec.state
        if st.remaining <= 0:
            break
        if not st.active:
            raise InvariantViolation(f"supply {st.remaining} left with no active bidder at {st.price}")

        p_arr = arrivals[next_arrival][0] if next_arrival < len(arrivals) else math.inf
        law = law_for(st)
        (p_drop, dropper), p_clinch = _drop_candidate(st, vals), _clinch_candidate(st, law)
        p_next = min(p_drop, p_arr, p_clinch)
        if not math.isfinite(p_next):
            raise NumericalFailure(f"no further event after price {st.price}")
        if p_next < st.price:
            p_next = st.price

        rec.advance(law, p_next)

        if p_next == p_drop:
            new, deltas = drop_clinch_step(rec.state, dropper)
            rec.state = replace(new, clinching=new.clinching & new.active)
            rec.event(EventKind.DROP, dropper, deltas)
        if p_next == p_arr:
            rec.state = handle_arrival(rec.state, arrivals[next_arrival][1])
            rec.event(EventKind.ARRIVAL, arrivals[next_arrival][1])
            next_arrival += 1
        if rec.state.remaining <= 0:
            rec.state = replace(rec.state, clinching=frozenset())
            rec.event(EventKind.EXHAUST)
            break
        if p_next == p_drop or p_next == p_arr:
            # a drop or arrival changes who competes; rebuild the set from scratch
            rec.state = replace(rec.state, clinching=frozenset())
        elif p_next == p_clinch and st.clinching:
            # snap the joining outsiders onto the clinchers' budget
            b = list(rec.state.b)
            b_out = max(b[i] for i in rec.state.active if i not in rec.state.clinching)
            for i in rec.state.clinching:
                b[i] = b_out
            rec.state = replace(rec.state, b=tuple(b))
        _set_clinching(rec)
        if rec.state.price == 0 and rec.state.clinching and rec.state.remaining > 0:
            _clinch_at_zero(rec)
    else:
        raise NumericalFailure("event limit exceeded")

    return _outcome(market, rec.state), rec.trace


def _clinch_at_zero(rec: _Recorder) -> None:
    # Degenerate start: all rivals of the clinchers are broke, so the
    # clinchers take the whole remaining supply at price zero.
    st = rec.state
    share = st.remaining / len(st.clinching)
    x = list(st.x)
    deltas = [0.0] * len(x)
    for i in st.clinching:
        x[i] += share
        deltas[i] = share
    rec.state = replace(st, x=tuple(x), remaining=0.0, clinching=frozenset())
    rec.event(EventKind.EXHAUST, None, deltas)


def symmetric_closed_form(kappa: int, beta: float, p_s: float, p: float) -> tuple[float, float, float]:
    """Allocation, budget and wishful allocation of a clincher in a symmetric run.

    Valid for p_s <= p while the `kappa` highest bidders clinch together
    (the budget and allocation up to, not including, p_f).
    """
    if p < p_s:
        raise DomainError(f"price {p} is below the clinch start {p_s}")
    if p_s <= 0 or kappa < 1:
        raise DomainError("need p_s > 0 and kappa >= 1")
    g = (kappa * beta - p_s) * p_s ** (kappa - 1)
    x = 1.0 / kappa - (kappa - 1) * g * p ** (-kappa) / kappa
    b = g * p ** (-(kappa - 1))
    psi = 1.0 / kappa + g * p ** (-kappa) / kappa
    return x, b, psi


def symmetric_triple_structure(valuations: list[float], beta: float) -> tuple[int, float]:
    """Number of bidders still active when clinching starts, and that price."""
    n = len(valuations)
    for k in range(n, 0, -1):
        lower = valuations[k] if k < n else 0.0
        start = max(lower, (k - 1) * beta)
        if start < valuations[k - 1]:
            return k, start
    raise InvariantViolation("no clinch start found")  # unreachable for n >= 1


def _run_symmetric(market: Market) -> tuple[Outcome, Trace]:
    vals = [float(b.valuation) for b in market.bidders]
    beta = float(market.common_budget())
    n = len(vals)
    k, p_s = symmetric_triple_structure(vals, beta)
    rec = _Recorder(market.ids, _initial_state(market))
    idle = lambda: SegmentLaw(rec.state.price, 0, 0.0, 0.0)  # noqa: E731

    # bidders k+1..n drop without anyone clinching (the last may trigger it)
    for j in range(n - 1, k - 1, -1):
        if vals[j] == p_s:
            break
        rec.advance(idle(), vals[j])
        st = rec.state
        rec.state = replace(st, active=st.active - {j})
        rec.event(EventKind.DROP, j)

    rec.advance(idle(), p_s)
    top = list(range(k))
    if k < n and vals[k] == p_s:
        # clinching is triggered by bidder k+1 dropping at p_s
        delta = 1.0 if k == 1 else max(0.0, 1.0 - (k - 1) * beta / p_s) if p_s > 0 else 0.0
        if k > 1 and p_s >= k * beta:
            delta = 1.0 / k
        x, b, paid = list(rec.state.x), list(rec.state.b), list(rec.state.paid)
        deltas = [0.0] * len(x)
        for i in top:
            x[i] = deltas[i] = delta
            paid[i] = p_s * delta
            b[i] = beta - paid[i]
        remaining = 0.0 if k * delta >= 1.0 - EPS_ROOT else 1.0 - k * delta
        rec.state = replace(
            rec.state, x=tuple(x), b=tuple(b), paid=tuple(paid),
            active=frozenset(top), remaining=remaining,
        )
        rec.event(EventKind.DROP, k, deltas)
    elif p_s == 0 and k > 1:
        # broke bidders: everybody clinches an equal share for free
        rec.state = replace(rec.state, clinching=frozenset(top))
        _clinch_at_zero(rec)
        return _outcome(market, rec.state), rec.trace
    if rec.state.remaining <= 0:
        rec.event(EventKind.EXHAUST)
        return _outcome(market, rec.state), rec.trace

    rec.state = replace(rec.state, clinching=frozenset(top))
    rec.event(EventKind.CLINCH_START, 0)
    p_f = vals[k - 1]
    law = SegmentLaw(p_s, k, 0.0, k * beta - p_s)
    rec.advance(law, p_f)
    # overwrite the evolved values with the closed form at p_f-
    x_f, b_f, _ = symmetric_closed_form(k, beta, p_s, p_f)
    x, b, paid = list(rec.state.x), list(rec.state.b), list(rec.state.paid)
    for i in top:
        x[i], b[i], paid[i] = x_f, b_f, beta - b_f
    rec.state = replace(rec.state, x=tuple(x), b=tuple(b), paid=tuple(paid), remaining=(k - 1) * b_f / p_f)
    new, deltas = drop_clinch_step(rec.state, k - 1)
    rec.state = replace(new, clinching=frozenset())
    rec.event(EventKind.DROP, k - 1, deltas)
    rec.event(EventKind.EXHAUST)
    return _outcome(market, rec.state), rec.trace
