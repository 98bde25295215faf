"""Simulation and verification toolkit for adaptive clinching auctions with budgets."""

from .analysis import (
    CaseLabel,
    ComparisonReport,
    IntervalReport,
    Metrics,
    classify_and_predict,
    clinching_interval,
    compare_add_bidder,
    critical_bidder,
    g_kappa,
    h_kappa,
    lw_rev_symmetric_formula,
    metrics,
    optimal_lw,
    run_online_experiment,
)
from .core import (
    UNBOUNDED,
    Arrival,
    Bidder,
    Divisible,
    Indivisible,
    Market,
    MarketError,
    Outcome,
    make_market,
    utility,
    validate_market,
)
from .divisible import AuctionState, EngineOptions, SegmentLaw, Trace, run_auction, symmetric_closed_form
from .indivisible import run_indivisible
from .oracle import OracleOptions, ic_check, integrate

__all__ = [name for name in dir() if not name.startswith("_")]
