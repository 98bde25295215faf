"""Command-line front end: run auctions, compare markets, sweep random scenarios.

Exit codes: 0 success, 2 bad input, 3 a validation gate failed, 4 the engine
hit a numerical failure.
"""

from __future__ import annotations

import argparse
import math
import os
import random
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

from . import io as mio
from .analysis import (
    EPS_VERDICT,
    ComparisonReport,
    clinching_interval,
    compare_add_bidder,
    metrics,
    optimal_lw,
    run_online_experiment,
)
from .core import Bidder, Market, MarketError, NotSymmetric, validate_market
from .divisible import EngineError, EngineOptions, run_auction
from .indivisible import event_rows, run_indivisible, unit_prices
from .oracle import OracleOptions, StepTooLarge, integrate
from .scenarios import (
    MIN_GAP,
    AddScenario,
    random_asymmetric_add,
    random_symmetric_add,
    random_symmetric_online,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_GATE = 3
EXIT_NUMERIC = 4

SCENARIOS = ("symmetric-add", "symmetric-online", "asymmetric-search")


def _emit(text: str, output: str | None) -> None:
    if output:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _render(doc: dict, table_rows: list[dict], fmt: str, csv_rows: list[dict] | None = None) -> str:
    if fmt == "json":
        return mio.dumps_json(doc)
    if fmt == "csv":
        return mio.rows_to_csv(csv_rows if csv_rows is not None else table_rows)
    return mio.format_table(table_rows)


def _key_values(pairs: dict) -> list[dict]:
    return [{"field": k, "value": v} for k, v in pairs.items()]


def _outcome_rows(market: Market, outcome) -> list[dict]:
    by_id = {b.id: b for b in market.all_bidders}
    return [
        {
            "id": i,
            "valuation": by_id[i].valuation,
            "budget": by_id[i].budget,
            "allocation": x,
            "payment": pay,
        }
        for i, x, pay in zip(outcome.ids, outcome.allocation, outcome.payment)
    ]


def _engine_opts(args) -> EngineOptions:
    return EngineOptions(symmetric_fast_path=not getattr(args, "no_fast_path", False))


def _load(path: str) -> mio.MarketFile:
    mf = mio.load_market(path)
    return mio.MarketFile(validate_market(mf.market), mf.theta)


def cmd_run(args) -> int:
    mf = _load(args.market)
    market = mf.market
    if not market.divisible:
        return _run_indivisible(args, market)
    outcome, trace = run_auction(market, _engine_opts(args))
    interval = clinching_interval(trace)
    m = metrics(market, outcome)
    summary = {
        "p_s": interval.p_s,
        "p_f": interval.p_f,
        "kappa": interval.kappa,
        "sw": m.sw,
        "lw": m.lw,
        "rev": m.rev,
        "optimal_lw": optimal_lw(market),
    }
    doc = {
        "market": mio.market_to_dict(market),
        "outcome": _outcome_rows(market, outcome),
        "interval": {"p_s": interval.p_s, "p_f": interval.p_f, "kappa": interval.kappa},
        "metrics": {"sw": m.sw, "lw": m.lw, "rev": m.rev, "optimal_lw": summary["optimal_lw"]},
    }
    rows = _outcome_rows(market, outcome)
    text = _render(doc, rows, args.format)
    if args.format == "table":
        text += "\n" + mio.format_table(_key_values(summary))
    _emit(text, args.output)
    if args.trace:
        trace_rows = trace.rows(args.samples)
        if args.trace.endswith(".json"):
            _write(args.trace, mio.dumps_json(trace_rows))
        else:
            _write(args.trace, mio.rows_to_csv(trace_rows))
    if args.emit_plot_data:
        _write(args.emit_plot_data, mio.rows_to_csv(_plot_rows(trace.rows(args.samples))))
    return EXIT_OK


def _plot_rows(rows: list[dict]) -> list[dict]:
    return [{k: v for k, v in r.items() if k not in ("active", "clinching")} for r in rows]


def _run_indivisible(args, market: Market) -> int:
    outcome, log = run_indivisible(market)
    m = metrics(market, outcome)
    prices = unit_prices(log)
    summary = {"sw": m.sw, "lw": m.lw, "rev": m.rev, "unit_prices": " ".join(str(mio.number_out(p)) for p in prices)}
    doc = {
        "market": mio.market_to_dict(market),
        "outcome": _outcome_rows(market, outcome),
        "metrics": {"sw": m.sw, "lw": m.lw, "rev": m.rev},
        "unit_prices": prices,
    }
    rows = _outcome_rows(market, outcome)
    text = _render(doc, rows, args.format)
    if args.format == "table":
        text += "\n" + mio.format_table(_key_values(summary))
    _emit(text, args.output)
    if getattr(args, "trace", None):
        _write(args.trace, mio.rows_to_csv(event_rows(market.ids, log)))
    return EXIT_OK


def cmd_run_indiv(args) -> int:
    market = _load(args.market).market
    if market.divisible:
        raise MarketError("run-indiv needs a market with supply {'units': l}")
    return _run_indivisible(args, market)


def report_to_dict(report: ComparisonReport) -> dict:
    base_m, aug_m = report.base_metrics, report.augmented_metrics
    return {
        "base": _outcome_rows(report.base_market, report.base),
        "augmented": _outcome_rows(report.augmented_market, report.augmented),
        "delta_x": report.delta_x(),
        "delta_pi": report.delta_pi(),
        "base_metrics": {"sw": base_m.sw, "lw": base_m.lw, "rev": base_m.rev},
        "augmented_metrics": {"sw": aug_m.sw, "lw": aug_m.lw, "rev": aug_m.rev},
        "delta_sw": report.delta_sw,
        "delta_lw": report.delta_lw,
        "delta_rev": report.delta_rev,
        "case": report.case.value,
        "base_triple": list(report.base_triple),
        "predicted_triple": list(report.predicted_triple) if report.predicted_triple else None,
        "measured_triple": list(report.measured_triple),
        "verdicts": dict(report.verdicts),
    }


def _report_table(report: ComparisonReport) -> str:
    rows = []
    dx, dpi = report.delta_x(), report.delta_pi()
    for i in report.augmented.ids:
        x1, p1 = report.augmented.of(i)
        x0, p0 = report.base.of(i) if i in report.base.ids else (0, 0)
        rows.append({"id": i, "x": x0, "x_new": x1, "dx": dx.get(i, x1), "pi": p0, "pi_new": p1, "dpi": dpi.get(i, p1)})
    summary = {
        "delta_sw": report.delta_sw,
        "delta_lw": report.delta_lw,
        "delta_rev": report.delta_rev,
        "case": report.case.value,
        "base_triple": _triple_text(report.base_triple),
        "predicted_triple": _triple_text(report.predicted_triple) if report.predicted_triple else "-",
        "measured_triple": _triple_text(report.measured_triple),
    }
    verdicts = [{"verdict": k, "result": "pass" if ok else "FAIL"} for k, ok in report.verdicts.items() if "[" not in k]
    return "\n".join(mio.format_table(t) for t in (rows, _key_values(summary), verdicts))


def _triple_text(triple) -> str:
    return "(" + ", ".join(mio._cell(t) for t in triple) + ")"


def _report_csv_rows(report: ComparisonReport) -> list[dict]:
    return [{"verdict": k, "pass": ok} for k, ok in report.verdicts.items()]


def _symmetric_gate(args, report: ComparisonReport, symmetric: bool) -> int:
    if getattr(args, "assert_symmetric", False) and symmetric and not report.all_pass:
        sys.stderr.write("symmetric verdicts failed: " + ", ".join(report.failed()) + "\n")
        return EXIT_GATE
    return EXIT_OK


def _theta_from_args(args, mf: mio.MarketFile) -> Bidder:
    if args.theta_valuation is not None:
        budget = mio.parse_number(args.theta_budget, "--theta-budget", allow_inf=True)
        return Bidder(args.theta_id, mio.parse_number(args.theta_valuation, "--theta-valuation"), budget)
    if mf.theta is None:
        raise MarketError("compare needs a 'theta' entry in the market file or --theta-valuation")
    return mf.theta


def cmd_compare(args) -> int:
    mf = _load(args.market)
    theta = _theta_from_args(args, mf)
    market = mf.market
    symmetric = market.is_symmetric() and theta.budget == market.bidders[0].budget
    if args.require_symmetric and not symmetric:
        sys.stderr.write("market is not symmetric\n")
        return EXIT_GATE
    report = compare_add_bidder(market, theta, _engine_opts(args), eps=args.eps)
    _output_report(args, report)
    return _symmetric_gate(args, report, symmetric)


def _output_report(args, report: ComparisonReport) -> None:
    if args.format == "json":
        text = mio.dumps_json(report_to_dict(report))
    elif args.format == "csv":
        text = mio.rows_to_csv(_report_csv_rows(report))
    else:
        text = _report_table(report)
    _emit(text, args.output)


def cmd_online(args) -> int:
    market = _load(args.market).market
    if not market.is_symmetric():
        sys.stderr.write("online experiments need one common finite budget\n")
        return EXIT_GATE
    report = run_online_experiment(market.without_arrivals(), market.arrivals, _engine_opts(args), eps=args.eps)
    _output_report(args, report)
    return _symmetric_gate(args, report, True)


# sweep -----------------------------------------------------------------


def _jittered(rng: random.Random, base: AddScenario, jitter: float) -> AddScenario:
    def wiggle(v):
        if isinstance(v, float) and math.isinf(v):
            return v
        return float(v) * (1.0 + rng.uniform(-jitter, jitter))

    while True:
        bidders = tuple(Bidder(b.id, wiggle(b.valuation), wiggle(b.budget)) for b in base.market.bidders)
        theta = Bidder(base.theta.id, wiggle(base.theta.valuation), wiggle(base.theta.budget))
        vals = sorted([b.valuation for b in bidders] + [theta.valuation])
        if all(b - a > MIN_GAP for a, b in zip(vals, vals[1:])):
            return AddScenario(validate_market(replace(base.market, bidders=bidders)), theta)


def _scenario(kind: str, seed: int, index: int, around: AddScenario | None, jitter: float):
    rng = random.Random(f"{kind}:{seed}:{index}")
    if kind == "symmetric-add":
        return random_symmetric_add(rng)
    if kind == "symmetric-online":
        return random_symmetric_online(rng)
    if around is not None:
        return _jittered(rng, around, jitter)
    return random_asymmetric_add(rng)


def _sweep_one(job):
    kind, seed, index, around, jitter, eps = job
    sc = _scenario(kind, seed, index, around, jitter)
    online = kind == "symmetric-online"
    if online:
        doc = mio.market_to_dict(replace(sc.market, arrivals=sc.arrivals))
    else:
        doc = mio.market_to_dict(sc.market, sc.theta)
    try:
        if online:
            report = run_online_experiment(sc.market, sc.arrivals, eps=eps)
        else:
            report = compare_add_bidder(sc.market, sc.theta, eps=eps)
    except EngineError as exc:
        return index, None, doc, str(exc)
    verdicts = {k: v for k, v in report.verdicts.items() if "[" not in k}
    flags = {
        "rev_decrease": report.delta_rev < -eps,
        "lw_decrease": report.delta_lw < -eps,
        "allocation_increase": not report.verdicts["allocation_monotone"],
    }
    return index, (verdicts, report.case.value, flags), doc, None


def run_sweep(kind: str, count: int, seed: int, *, jobs: int = 1, around=None, jitter=0.05, eps=EPS_VERDICT) -> dict:
    """Run `count` seeded scenarios and aggregate verdict pass counts.

    Scenario k is drawn from its own generator seeded by (kind, seed, k), so
    results do not depend on `jobs`.
    """
    work = [(kind, seed, k, around, jitter, eps) for k in range(count)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_one, work, chunksize=max(1, count // (4 * jobs))))
    else:
        results = [_sweep_one(w) for w in work]

    passes: dict[str, int] = {}
    checked: dict[str, int] = {}
    cases: dict[str, int] = {}
    counterexamples = []
    errors = []
    all_pass = 0
    for index, result, doc, err in results:
        if result is None:
            errors.append({"index": index, "error": err, "market": doc})
            continue
        verdicts, case, flags = result
        cases[case] = cases.get(case, 0) + 1
        all_pass += all(verdicts.values())
        for name, ok in verdicts.items():
            checked[name] = checked.get(name, 0) + 1
            passes[name] = passes.get(name, 0) + ok
        if kind == "asymmetric-search":
            found = [name for name, hit in flags.items() if hit]
            if found:
                counterexamples.append({"index": index, "kinds": found, "market": doc})
        elif not all(verdicts.values()):
            failed = [k for k, ok in verdicts.items() if not ok]
            counterexamples.append({"index": index, "kinds": failed, "market": doc})
    return {
        "scenario": kind,
        "seed": seed,
        "count": count,
        "all_pass": all_pass,
        "verdicts": {k: {"pass": passes[k], "checked": checked[k]} for k in sorted(checked)},
        "cases": dict(sorted(cases.items())),
        "counterexamples": counterexamples,
        "errors": errors,
    }


def _seed(args) -> int:
    env = os.environ.get("CLINCHLAB_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise MarketError(f"CLINCHLAB_SEED must be an integer, got {env!r}") from None
    return args.seed


def cmd_sweep(args) -> int:
    around = None
    if args.around:
        mf = _load(args.around)
        if mf.theta is None:
            raise MarketError("--around needs a market file with a 'theta' entry")
        around = AddScenario(mf.market, mf.theta)
    seed = _seed(args)
    summary = run_sweep(args.scenario, args.count, seed, jobs=args.jobs, around=around, jitter=args.jitter, eps=args.eps)
    if args.format == "json":
        text = mio.dumps_json(summary)
    else:
        rows = [
            {"verdict": k, "pass": v["pass"], "checked": v["checked"]} for k, v in summary["verdicts"].items()
        ]
        head = {
            "scenario": summary["scenario"],
            "seed": seed,
            "count": summary["count"],
            "all_pass": summary["all_pass"],
            "counterexamples": len(summary["counterexamples"]),
            "errors": len(summary["errors"]),
        }
        head.update({f"case:{k}": v for k, v in summary["cases"].items()})
        text = mio.rows_to_csv(rows) if args.format == "csv" else (
            mio.format_table(_key_values(head)) + "\n" + mio.format_table(rows)
        )
    _emit(text, args.output)
    if args.dump_counterexamples:
        _write(args.dump_counterexamples, mio.dumps_json(summary["counterexamples"]))
    if summary["errors"]:
        return EXIT_NUMERIC
    if args.assert_symmetric and args.scenario != "asymmetric-search" and summary["all_pass"] < summary["count"]:
        return EXIT_GATE
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    market = _load(args.market).market
    engine, _ = run_auction(market, EngineOptions(symmetric_fast_path=False))
    oracle = integrate(market, OracleOptions(step=args.step))
    rows = []
    for i in engine.ids:
        (xe, pe), (xo, po) = engine.of(i), oracle.of(i)
        rows.append({"id": i, "x_engine": xe, "x_oracle": xo, "pi_engine": pe, "pi_oracle": po})
    deviation = max(max(abs(r["x_engine"] - r["x_oracle"]), abs(r["pi_engine"] - r["pi_oracle"])) for r in rows)
    doc = {"step": args.step, "max_deviation": deviation, "tolerance": args.eps, "bidders": rows}
    text = _render(doc, rows, args.format)
    if args.format == "table":
        text += "\n" + mio.format_table(_key_values({"step": args.step, "max_deviation": deviation}))
    _emit(text, args.output)
    return EXIT_OK if deviation <= args.eps else EXIT_GATE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clinchlab", description="Adaptive clinching auction toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, market=True):
        if market:
            p.add_argument("market", help="market file (JSON)")
        p.add_argument("--format", choices=("table", "json", "csv"), default="table")
        p.add_argument("--output", "-o", help="write the report here instead of stdout")

    p = sub.add_parser("run", help="run one auction and report the outcome")
    common(p)
    p.add_argument("--no-fast-path", action="store_true", help="skip the symmetric closed-form shortcut")
    p.add_argument("--trace", help="write the price trace (CSV, or JSON if the name ends in .json)")
    p.add_argument("--emit-plot-data", help="write (p, x_i, b_i, S) samples as CSV")
    p.add_argument("--samples", type=int, default=16, help="trace samples per segment (default 16)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("run-indiv", help="run the auction for indivisible units")
    common(p)
    p.add_argument("--trace", help="write the clinch event log as CSV")
    p.set_defaults(func=cmd_run_indiv)

    for name, func, helptext in (
        ("compare", cmd_compare, "compare a market with and without one extra bidder"),
        ("online", cmd_online, "compare a market with and without its online arrivals"),
    ):
        p = sub.add_parser(name, help=helptext)
        common(p)
        p.add_argument("--no-fast-path", action="store_true")
        p.add_argument("--eps", type=float, default=EPS_VERDICT, help="verdict tolerance")
        p.add_argument("--assert-symmetric", action="store_true", help="exit 3 if a symmetric verdict fails")
        if name == "compare":
            p.add_argument("--require-symmetric", action="store_true", help="exit 3 on unequal budgets")
            p.add_argument("--theta-id", default="theta")
            p.add_argument("--theta-valuation")
            p.add_argument("--theta-budget", default="inf")
        p.set_defaults(func=func)

    p = sub.add_parser("sweep", help="randomized property campaign")
    common(p, market=False)
    p.add_argument("--scenario", choices=SCENARIOS, default="symmetric-add")
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--seed", type=int, default=0, help="overridden by CLINCHLAB_SEED")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--eps", type=float, default=EPS_VERDICT)
    p.add_argument("--around", help="asymmetric-search: jitter the market (with theta) in this file")
    p.add_argument("--jitter", type=float, default=0.05, help="relative jitter for --around")
    p.add_argument("--assert-symmetric", action="store_true")
    p.add_argument("--dump-counterexamples", help="write counterexample markets as JSON")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle-check", help="compare the engine with the step integrator")
    common(p)
    p.add_argument("--step", type=float, default=1e-4)
    p.add_argument("--eps", type=float, default=5e-3, help="allowed max deviation")
    p.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NotSymmetric as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_GATE
    except (MarketError, OSError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    except (EngineError, StepTooLarge) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
