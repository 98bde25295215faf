"""Welfare metrics, clinching-interval extraction and the add-a-bidder harness.

Verdicts produced here are data: asymmetric markets are expected to violate
some of the monotonicity properties, and callers decide what to assert.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import Sequence

from .core import Arrival, Bidder, Market, NotSymmetric, Outcome, is_unbounded, validate_market
from .divisible import DomainError, EngineOptions, Trace, run_auction
from .indivisible import run_indivisible

EPS_EXH = 1e-7
EPS_VERDICT = 1e-7
# slack for comparing predicted and measured prices; the measured ones come
# from closed-form roots, so this is tied to the engine's root tolerance
EPS_TRIPLE = 1e-9


def _sum(values) -> float | Fraction:
    values = list(values)
    if any(isinstance(v, float) for v in values):
        return math.fsum(values)
    return sum(values, Fraction(0))


@dataclass(frozen=True)
class Metrics:
    sw: float | Fraction
    lw: float | Fraction
    rev: float | Fraction


def metrics(market: Market, outcome: Outcome) -> Metrics:
    """Social welfare, liquid welfare and revenue of an outcome."""
    by_id = {b.id: b for b in market.all_bidders}
    if set(by_id) != set(outcome.ids):
        raise ValueError("outcome does not match the market's bidders")
    values, liquid = [], []
    for bid, x in zip(outcome.ids, outcome.allocation):
        bidder = by_id[bid]
        value = bidder.valuation * x
        values.append(value)
        liquid.append(value if is_unbounded(bidder.budget) else min(value, bidder.budget))
    return Metrics(_sum(values), _sum(liquid), _sum(outcome.payment))


def optimal_lw(market: Market) -> float:
    """Best liquid welfare over all ways to split the divisible unit.

    Greedy water-filling: in descending valuation order give each bidder up
    to B_i / v_i (the point where its liquid value saturates). Whatever is
    left after every cap is hit adds nothing.
    """
    market = validate_market(market)
    left = 1.0
    total = []
    for b in sorted(market.all_bidders, key=lambda b: b.valuation, reverse=True):
        if left <= 0:
            break
        v = float(b.valuation)
        if v <= 0:
            break
        cap = math.inf if is_unbounded(b.budget) else float(b.budget) / v
        take = min(left, cap)
        total.append(v * take)
        left -= take
    return math.fsum(total)


def critical_bidder(market: Market, outcome: Outcome, eps: float = EPS_EXH) -> int:
    """One plus the number of bidders whose payment used up their budget.

    Exact comparison for rational outcomes, `eps` slack for floats.
    """
    by_id = {b.id: b for b in market.all_bidders}
    exhausted = 0
    for bid, pay in zip(outcome.ids, outcome.payment):
        budget = by_id[bid].budget
        if is_unbounded(budget):
            continue
        if isinstance(pay, float) or isinstance(budget, float):
            hit = float(pay) >= float(budget) - eps
        else:
            hit = pay == budget
        exhausted += hit
    return exhausted + 1


@dataclass(frozen=True)
class IntervalReport:
    p_s: float
    p_f: float
    kappa: int

    @property
    def triple(self) -> tuple[float, float, int]:
        return (self.p_s, self.p_f, self.kappa)


def clinching_interval(trace: Trace, eps: float = EPS_EXH) -> IntervalReport:
    """Prices where trading starts and ends, plus the critical bidder index.

    Budgets come from the trace's initial state, so no market is needed.
    """
    p_s = None
    for ev in trace.events:
        if ev.state.clinching or any(d > 0 for d in ev.deltas):
            p_s = ev.price
            break
    p_f = trace.end_price
    if p_s is None:
        p_s = p_f
    budgets = trace.initial.b
    final = trace.final.b
    exhausted = sum(1 for B, b in zip(budgets, final) if math.isfinite(B) and b <= eps)
    return IntervalReport(p_s, p_f, exhausted + 1)


class CaseLabel(str, Enum):
    CASE1 = "case1"
    CASE2 = "case2"
    CASE3 = "case3"
    CASE4 = "case4"
    CASE5 = "case5"
    CASE6 = "case6"
    NOT_SYMMETRIC = "not_symmetric"


def _close(a: float, b: float, eps: float = 1e-12) -> bool:
    return abs(a - b) <= eps * max(1.0, abs(a), abs(b))


def classify_and_predict(
    base: Market, theta: Bidder, base_triple: tuple[float, float, int] | None = None
) -> tuple[CaseLabel, tuple[float, float, int]]:
    """Predict the clinching triple after adding `theta` to a symmetric market.

    The six branches are tested in order; each one pins down where clinching
    starts, where it ends, and how many bidders exhaust their budgets, as a
    function of the base triple, the common budget and theta's valuation.
    """
    base = validate_market(base)
    if not base.is_symmetric() or theta.budget != base.common_budget():
        raise NotSymmetric("triple prediction needs one common finite budget")
    if base_triple is None:
        _, trace = run_auction(base, EngineOptions(symmetric_fast_path=False))
        base_triple = clinching_interval(trace).triple
    p_s, p_f, k = base_triple
    beta = float(base.common_budget())
    v = [float(b.valuation) for b in base.bidders]
    vt = float(theta.valuation)
    v1, vk = v[0], v[k - 1]
    kb = k * beta

    if vt <= p_s:
        return CaseLabel.CASE1, (p_s, p_f, k)
    m = min(vt, v1)
    if k == 1 and p_s < m < beta:
        return CaseLabel.CASE2, (m, m, 1)
    if k >= 2 and p_s <= vk < min(vt, kb):
        return CaseLabel.CASE3, (vk, min(vt, v[k - 2]), k)
    if k >= 2 and p_s < vt < min(vk, kb):
        return CaseLabel.CASE4, (vt, vk, k)
    low = min(vt, vk)
    if p_s < kb and _close(kb, low):
        return CaseLabel.CASE6, (kb, kb, k + 1)
    if p_s < kb < low:
        return CaseLabel.CASE5, (kb, low, k + 1)
    raise DomainError("no branch matched; inputs violate the model assumptions")


def lw_rev_symmetric_formula(market: Market, outcome: Outcome, eps: float = EPS_EXH) -> tuple[float, float]:
    """LW and revenue of a symmetric run from the critical bidder alone.

    Everyone above the critical bidder pays the full budget and everyone below
    gets nothing, so only the critical bidder's share needs to be looked up.
    """
    market = validate_market(market)
    if not market.is_symmetric():
        raise NotSymmetric("formula needs one common finite budget")
    beta = float(market.common_budget())
    k = critical_bidder(market, outcome, eps)
    ordered = sorted(market.all_bidders, key=lambda b: b.valuation, reverse=True)
    if k > len(ordered):
        return (k - 1) * beta, (k - 1) * beta
    crit = ordered[k - 1]
    x, pay = outcome.of(crit.id)
    lw = (k - 1) * beta + min(float(crit.valuation) * float(x), beta)
    rev = (k - 1) * beta + float(pay)
    return lw, rev


def budget_share_curve(x: float, kappa: int, beta: float) -> float:
    """(kappa*beta - x) * x**(kappa-1), defined on ((kappa-1)*beta, kappa*beta).

    This is what the clinchers' budget times p**(kappa-1) equals when
    clinching starts at x; it is weakly decreasing on its domain.
    """
    lo, hi = (kappa - 1) * beta, kappa * beta
    if not lo < x < hi:
        raise DomainError(f"x={x} outside ({lo}, {hi})")
    return (kappa * beta - x) * x ** (kappa - 1)


def relative_start_curve(x: float, kappa: int) -> float:
    """x**(kappa-1) * (kappa - kappa*x + x), defined for x > 0.

    Equals 1 at x = 1 and is weakly decreasing for x > 1 (constant for kappa=1).
    """
    if x <= 0:
        raise DomainError(f"x={x} must be positive")
    return x ** (kappa - 1) * (kappa - kappa * x + x)


# short names matching the usual notation in the literature
g_kappa = budget_share_curve
h_kappa = relative_start_curve


@dataclass
class ComparisonReport:
    base_market: Market
    augmented_market: Market
    base: Outcome
    augmented: Outcome
    base_triple: tuple[float, float, int]
    measured_triple: tuple[float, float, int]
    case: CaseLabel
    predicted_triple: tuple[float, float, int] | None
    verdicts: dict[str, bool] = field(default_factory=dict)

    @property
    def base_metrics(self) -> Metrics:
        return metrics(self.base_market, self.base)

    @property
    def augmented_metrics(self) -> Metrics:
        return metrics(self.augmented_market, self.augmented)

    def delta_x(self) -> dict[str, float]:
        return {i: self.augmented.allocation_of(i) - self.base.allocation_of(i) for i in self.base.ids}

    def delta_pi(self) -> dict[str, float]:
        return {i: self.augmented.payment_of(i) - self.base.payment_of(i) for i in self.base.ids}

    @property
    def delta_sw(self):
        return self.augmented_metrics.sw - self.base_metrics.sw

    @property
    def delta_lw(self):
        return self.augmented_metrics.lw - self.base_metrics.lw

    @property
    def delta_rev(self):
        return self.augmented_metrics.rev - self.base_metrics.rev

    @property
    def all_pass(self) -> bool:
        return all(self.verdicts.values())

    def failed(self) -> list[str]:
        return [k for k, ok in self.verdicts.items() if not ok]


def _run(market: Market, opts: EngineOptions):
    if market.divisible:
        outcome, trace = run_auction(market, opts)
        return outcome, trace
    outcome, _ = run_indivisible(market)
    return outcome, None


def _monotone_verdicts(report: ComparisonReport, critical_id: str | None, eps: float) -> None:
    """Allocation/payment of non-critical old bidders must not grow; LW/REV must not shrink."""
    v = report.verdicts
    dx, dpi = report.delta_x(), report.delta_pi()
    others = [i for i in report.base.ids if i != critical_id]
    v["allocation_monotone"] = all(dx[i] <= eps for i in others)
    v["payment_monotone"] = all(dpi[i] <= eps for i in others)
    for i in others:
        v[f"allocation_monotone[{i}]"] = dx[i] <= eps
        v[f"payment_monotone[{i}]"] = dpi[i] <= eps
    v["lw_monotone"] = report.delta_lw >= -eps
    v["rev_monotone"] = report.delta_rev >= -eps


def _critical_id(market: Market, outcome: Outcome, kappa: int) -> str | None:
    ordered = sorted(market.all_bidders, key=lambda b: b.valuation, reverse=True)
    return ordered[kappa - 1].id if kappa <= len(ordered) else None


def compare_add_bidder(
    base_market: Market,
    theta: Bidder,
    opts: EngineOptions | None = None,
    eps: float = EPS_VERDICT,
) -> ComparisonReport:
    """Run the market with and without `theta` and judge the monotonicity claims.

    Symmetric inputs additionally get the triple prediction, the closed-form
    LW/REV check and the LW ratio bound. The early-finish check (augmented run
    ends strictly earlier) applies to any divisible budgets.
    """
    opts = opts or EngineOptions(symmetric_fast_path=False)
    base_market = validate_market(base_market)
    augmented_market = base_market.with_bidder(theta)
    base, base_trace = _run(base_market, opts)
    aug, aug_trace = _run(augmented_market, opts)

    if base_trace is not None:
        base_triple = clinching_interval(base_trace).triple
        measured = clinching_interval(aug_trace).triple
    else:
        k0 = critical_bidder(base_market, base)
        base_triple = (math.nan, math.nan, k0)
        measured = (math.nan, math.nan, critical_bidder(augmented_market, aug))

    symmetric = (
        base_market.divisible and base_market.is_symmetric() and theta.budget == base_market.common_budget()
    )
    case, predicted = CaseLabel.NOT_SYMMETRIC, None
    if symmetric:
        case, predicted = classify_and_predict(base_market, theta, base_triple)

    report = ComparisonReport(base_market, augmented_market, base, aug, base_triple, measured, case, predicted)
    k = base_triple[2]
    _monotone_verdicts(report, _critical_id(base_market, base, k), eps)
    v = report.verdicts

    if symmetric:
        v["triple_prediction"] = _triples_match(predicted, measured)
        for name, market, outcome in (("base", base_market, base), ("augmented", augmented_market, aug)):
            lw, rev = lw_rev_symmetric_formula(market, outcome)
            m = metrics(market, outcome)
            v[f"lw_rev_formula_{name}"] = abs(lw - m.lw) <= 1e-9 and abs(rev - m.rev) <= 1e-9
        if k >= 2:
            ratio = report.augmented_metrics.lw / report.base_metrics.lw
            v["lw_ratio_bound"] = 1 - eps <= ratio <= (k + 1) / (k - 1) + eps

    if base_trace is not None and measured[1] < base_triple[1] - EPS_TRIPLE:
        v["early_finish_monotone"] = report.delta_lw >= -eps and report.delta_rev >= -eps
    return report


def _triples_match(a, b) -> bool:
    return a[2] == b[2] and _close(a[0], b[0], EPS_TRIPLE) and _close(a[1], b[1], EPS_TRIPLE)


def run_online_experiment(
    base_market: Market,
    arrivals: Sequence[Arrival],
    opts: EngineOptions | None = None,
    eps: float = EPS_VERDICT,
) -> ComparisonReport:
    """Compare the run without arrivals against the run where bidders join mid-auction."""
    opts = opts or EngineOptions(symmetric_fast_path=False)
    base_market = validate_market(base_market.without_arrivals())
    online = validate_market(replace(base_market, arrivals=tuple(arrivals)))
    if not online.is_symmetric():
        raise NotSymmetric("online experiments need one common finite budget")
    base, base_trace = run_auction(base_market, opts)
    aug, aug_trace = run_auction(online, opts)
    base_triple = clinching_interval(base_trace).triple
    measured = clinching_interval(aug_trace).triple
    report = ComparisonReport(base_market, online, base, aug, base_triple, measured, CaseLabel.NOT_SYMMETRIC, None)
    k = base_triple[2]
    _monotone_verdicts(report, _critical_id(base_market, base, k), eps)
    v = report.verdicts

    # no newcomer trades and the top bidders are still clinching just below
    # the critical valuation: their wishful allocation and budget there can
    # only be lower than without the arrivals
    newcomers = [a.bidder.id for a in online.arrivals]
    if k >= 2 and all(aug.allocation_of(i) <= 0 for i in newcomers):
        vk = float(base_market.bidders[k - 1].valuation)
        before = base_trace.state_at(vk, "left")
        after = aug_trace.state_at(vk, "left")
        top = list(range(k))
        if set(top) <= after.clinching:
            v["wishful_not_larger"] = all(
                after.x[i] + after.b[i] / vk <= before.x[i] + before.b[i] / vk + eps for i in top
            ) and all(after.b[i] <= before.b[i] + eps for i in top)
    return report


EPS_INV = 1e-9
EPS_OUT = 1e-9


def _sampled_states(trace: Trace, samples: int):
    from .divisible import segment_evolve

    for seg in trace.segments:
        width = seg.end_price - seg.start.price
        for j in range(samples):
            yield segment_evolve(seg.law, seg.start, seg.start.price + width * j / samples)
    for ev in trace.events:
        yield ev.state


def run_invariants(market: Market, outcome: Outcome, trace: Trace, samples: int = 16) -> dict[str, bool]:
    """Check a divisible run against the auction's structural guarantees.

    Always checked: the rivals' demand never falls below the remaining supply
    (with equality exactly for clinchers), the clinchers are the best-funded
    active bidders, full sale, budget feasibility, individual rationality and
    half of the optimal liquid welfare. Runs with one common budget and no
    arrivals also get the closed-form clinching structure checks.
    """
    market = validate_market(market)
    v: dict[str, bool] = {}
    demand_ok = set_ok = True
    for st in _sampled_states(trace, samples):
        p = st.price
        if p <= 0 or st.remaining <= 0:
            continue
        A = sorted(st.active)
        for i in A:
            rival = math.fsum(st.b[j] for j in A if j != i) / p
            scale = max(1.0, rival)
            if st.remaining > rival + EPS_INV * scale:
                demand_ok = False
            if i in st.clinching and abs(st.remaining - rival) > EPS_INV * scale:
                demand_ok = False
        if st.clinching:
            common = [st.b[i] for i in st.clinching]
            top = max(common)
            tol = EPS_INV * max(1.0, abs(top)) if math.isfinite(top) else 0.0
            if top - min(common) > tol:
                set_ok = False
            if any(st.b[i] > top + tol for i in A if i not in st.clinching):
                set_ok = False
    v["rival_demand_covers_supply"] = demand_ok
    v["clinchers_are_best_funded"] = set_ok

    v["full_sale"] = abs(math.fsum(outcome.allocation) - 1.0) <= EPS_OUT
    by_id = {b.id: b for b in market.all_bidders}
    v["budget_feasible"] = all(
        pay <= float(by_id[i].budget) + EPS_OUT for i, pay in zip(outcome.ids, outcome.payment)
    )
    v["individually_rational"] = all(
        float(by_id[i].valuation) * x >= pay - EPS_OUT
        for i, x, pay in zip(outcome.ids, outcome.allocation, outcome.payment)
    )
    v["half_optimal_lw"] = metrics(market, outcome).lw >= optimal_lw(market) / 2 - EPS_VERDICT

    if market.arrivals or not market.is_symmetric():
        return v
    v.update(_symmetric_invariants(market, outcome, trace))
    return v


def _symmetric_invariants(market: Market, outcome: Outcome, trace: Trace) -> dict[str, bool]:
    from .divisible import symmetric_closed_form

    v: dict[str, bool] = {}
    beta = float(market.common_budget())
    vals = [float(b.valuation) for b in market.bidders]
    n = len(vals)
    p_s, p_f, k = clinching_interval(trace).triple
    below = vals[k] if k < n else 0.0
    v["start_price_formula"] = _close(p_s, max(below, (k - 1) * beta), 1e-9) and p_s < k * beta
    if k == 1:
        v["interval_ordering"] = _close(below, p_s, 1e-9) and _close(p_s, p_f, 1e-9) and p_f < vals[0]
    else:
        v["interval_ordering"] = below <= p_s * (1 + 1e-12) and p_s <= p_f and _close(p_f, vals[k - 1], 1e-9)
    if vals[1] < beta:
        x1, pay1 = outcome.allocation[0], outcome.payment[0]
        v["single_winner"] = (
            k == 1
            and abs(x1 - 1.0) <= EPS_OUT
            and abs(pay1 - vals[1]) <= EPS_OUT
            and all(abs(x) <= EPS_OUT for x in outcome.allocation[1:])
        )
    if p_s < p_f and k >= 2:
        v["top_bidders_beat_equal_share"] = all(outcome.allocation[i] > 1.0 / k for i in range(k - 1))
        supply_ok = closed_ok = True
        for j in range(100):
            p = p_s + (p_f - p_s) * j / 100
            st = trace.state_at(p)
            if abs(st.remaining - (k - 1) * st.b[0] / p) > EPS_INV * max(1.0, st.remaining):
                supply_ok = False
            x, b, _ = symmetric_closed_form(k, beta, p_s, p)
            if any(abs(st.x[i] - x) > 1e-8 or abs(st.b[i] - b) > 1e-8 for i in range(k)):
                closed_ok = False
        v["supply_follows_budget"] = supply_ok
        v["closed_form_agreement"] = closed_ok
    return v


def indivisible_invariants(market: Market, outcome: Outcome, log) -> dict[str, bool]:
    """Exact conservation, feasibility, rationality and rising unit prices."""
    market = validate_market(market)
    by_id = {b.id: b for b in market.all_bidders}
    prices = [ev.c for ev in log if any(ev.deltas)]
    return {
        "full_sale": sum(outcome.allocation) == market.supply.units,
        "budget_feasible": all(pay <= by_id[i].budget for i, pay in zip(outcome.ids, outcome.payment)),
        "individually_rational": all(
            by_id[i].valuation * x >= pay for i, x, pay in zip(outcome.ids, outcome.allocation, outcome.payment)
        ),
        "unit_prices_rise": all(a <= b for a, b in zip(prices, prices[1:])),
    }
