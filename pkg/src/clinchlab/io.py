"""Market files, report documents and tabular exports.

Numbers in market files keep their exactness: JSON integers and "p/q"
strings become Fractions, JSON decimals stay floats, and "inf" is the
unbounded budget. Writing reverses the mapping, so parse -> dump -> parse is
the identity.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Any

from .core import Arrival, Bidder, Divisible, Indivisible, Market, MarketError, UNBOUNDED


class MarketFileError(MarketError):
    """Malformed market document; the message names the offending field."""


@dataclass(frozen=True)
class MarketFile:
    market: Market
    theta: Bidder | None = None


def parse_number(value: Any, where: str, *, allow_inf: bool = False):
    if isinstance(value, bool):
        raise MarketFileError(f"{where}: expected a number, got {value!r}")
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    if isinstance(value, float):
        return value
    if isinstance(value, str):
        text = value.strip()
        if text.lower() in ("inf", "infinity"):
            if not allow_inf:
                raise MarketFileError(f"{where}: infinity is only allowed for budgets")
            return UNBOUNDED
        try:
            return Fraction(text)
        except (ValueError, ZeroDivisionError):
            pass
    raise MarketFileError(f"{where}: expected a number or 'p/q' string, got {value!r}")


def _parse_id(value: Any, where: str) -> str:
    if isinstance(value, Fraction) and value.denominator == 1:
        return str(value.numerator)
    if isinstance(value, (str, int)) and not isinstance(value, bool):
        return str(value)
    raise MarketFileError(f"{where}: bad bidder id {value!r}")


def _parse_bidder(obj: Any, where: str) -> Bidder:
    if not isinstance(obj, dict):
        raise MarketFileError(f"{where}: expected an object")
    for key in ("id", "valuation"):
        if key not in obj:
            raise MarketFileError(f"{where}: missing field {key!r}")
    budget = obj.get("budget", "inf")
    return Bidder(
        _parse_id(obj["id"], f"{where}.id"),
        parse_number(obj["valuation"], f"{where}.valuation"),
        parse_number(budget, f"{where}.budget", allow_inf=True),
    )


def _parse_supply(obj: Any):
    if obj is None or obj == {"divisible": True}:
        return Divisible()
    if isinstance(obj, dict) and "units" in obj:
        units = parse_number(obj["units"], "supply.units")
        if not isinstance(units, Fraction) or units.denominator != 1:
            raise MarketFileError(f"supply.units: expected a whole number, got {obj['units']!r}")
        return Indivisible(int(units))
    raise MarketFileError(f"supply: expected {{'divisible': true}} or {{'units': l}}, got {obj!r}")


def market_from_dict(doc: Any) -> MarketFile:
    if not isinstance(doc, dict):
        raise MarketFileError("top level: expected an object")
    raw = doc.get("bidders")
    if not isinstance(raw, list):
        raise MarketFileError("bidders: expected a list")
    bidders = tuple(_parse_bidder(b, f"bidders[{k}]") for k, b in enumerate(raw))
    arrivals = []
    for k, a in enumerate(doc.get("arrivals") or []):
        where = f"arrivals[{k}]"
        if not isinstance(a, dict) or "price" not in a:
            raise MarketFileError(f"{where}: expected an object with a 'price'")
        arrivals.append(Arrival(parse_number(a["price"], f"{where}.price"), _parse_bidder(a, where)))
    theta = _parse_bidder(doc["theta"], "theta") if doc.get("theta") is not None else None
    market = Market(bidders, _parse_supply(doc.get("supply")), tuple(arrivals))
    return MarketFile(market, theta)


def loads_market(text: str) -> MarketFile:
    try:
        doc = json.loads(text, parse_int=Fraction)
    except json.JSONDecodeError as exc:
        raise MarketFileError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return market_from_dict(doc)


def load_market(path: str) -> MarketFile:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        return loads_market(text)
    except MarketFileError as exc:
        raise MarketFileError(f"{path}: {exc}") from None


def number_out(value):
    """JSON-friendly form of an engine number (exact rationals as 'p/q')."""
    if isinstance(value, bool):
        return value
    if isinstance(value, Fraction):
        return value.numerator if value.denominator == 1 else f"{value.numerator}/{value.denominator}"
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return "nan"
        return value
    return value


def _bidder_dict(b: Bidder) -> dict:
    return {"id": b.id, "valuation": number_out(b.valuation), "budget": number_out(b.budget)}


def market_to_dict(market: Market, theta: Bidder | None = None) -> dict:
    doc: dict = {"bidders": [_bidder_dict(b) for b in market.bidders]}
    if isinstance(market.supply, Indivisible):
        doc["supply"] = {"units": market.supply.units}
    else:
        doc["supply"] = {"divisible": True}
    if market.arrivals:
        doc["arrivals"] = [{"price": number_out(a.price), **_bidder_dict(a.bidder)} for a in market.arrivals]
    if theta is not None:
        doc["theta"] = _bidder_dict(theta)
    return doc


def dumps_market(market: Market, theta: Bidder | None = None) -> str:
    return json.dumps(market_to_dict(market, theta), indent=2)


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    return number_out(obj)


def dumps_json(doc) -> str:
    return json.dumps(to_jsonable(doc), indent=2, sort_keys=False) + "\n"


def rows_to_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = _io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: number_out(v) for k, v in row.items()})
    return buf.getvalue()


def _cell(value) -> str:
    value = number_out(value)
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def format_table(rows: list[dict]) -> str:
    """Plain fixed-width table with a header line."""
    if not rows:
        return ""
    keys = list(rows[0])
    cells = [[_cell(r.get(k, "")) for k in keys] for r in rows]
    widths = [max(len(k), *(len(c[i]) for c in cells)) for i, k in enumerate(keys)]
    lines = ["  ".join(k.ljust(w) for k, w in zip(keys, widths)).rstrip()]
    lines += ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in cells]
    return "\n".join(lines) + "\n"
