"""Deterministic synthetic fixtures: calendar, market data, fundamentals.

Everything here is a pure function of explicit identifiers hashed into
RNG seeds, so any process regenerates bit-identical data. This is what
the --mock pipeline and the test suite run against; no network, no
vendor feed.
"""
from __future__ import annotations

import calendar as _cal
import hashlib
from datetime import date, timedelta
from typing import Iterable, Optional, Sequence

import numpy as np

from . import universe
from .marketdata import DEFAULT_BENCHMARK, MarketDataTable, MonthlyCycle


def stable_seed(*parts: object) -> int:
    """Platform-independent seed from string parts (process-hash-safe)."""
    key = "|".join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(key.encode("utf-8")).digest()[:8], "big")


def _first_weekday(year: int, month: int) -> date:
    d = date(year, month, 1)
    while d.weekday() >= 5:
        d += timedelta(days=1)
    return d


def _last_weekday(year: int, month: int) -> date:
    d = date(year, month, _cal.monthrange(year, month)[1])
    while d.weekday() >= 5:
        d -= timedelta(days=1)
    return d


def default_calendar(
    n_cycles: int = 10, start_year: int = 2025, start_month: int = 4
) -> list[MonthlyCycle]:
    """Monthly cycles from the given month: trade first to last weekday,
    cutoff at the end of the previous month."""
    cycles = []
    year, month = start_year, start_month
    for _ in range(n_cycles):
        first = _first_weekday(year, month)
        cutoff = date(year, month, 1) - timedelta(days=1)
        cycles.append(
            MonthlyCycle(
                cycle_id=f"{year:04d}-{month:02d}",
                first_day=first,
                last_day=_last_weekday(year, month),
                cutoff=cutoff,
            )
        )
        year, month = (year + 1, 1) if month == 12 else (year, month + 1)
    return cycles


def synthetic_market(
    calendar: Sequence[MonthlyCycle],
    tickers: Optional[Iterable[str]] = None,
    benchmark: str = DEFAULT_BENCHMARK,
    seed_tag: str = "market-v1",
) -> MarketDataTable:
    """Total-return levels on every cycle boundary date.

    Each ticker's monthly return is benchmark plus an idiosyncratic
    draw; levels compound across months including the overnight gap
    between one month's close and the next open.
    """
    names = list(tickers) if tickers is not None else universe.tickers()
    series: dict[str, list[tuple[date, float]]] = {}

    bench_rng = np.random.default_rng(stable_seed(seed_tag, "benchmark"))
    monthly_bench = bench_rng.normal(0.004, 0.030, size=len(calendar))
    gap_bench = bench_rng.normal(0.0, 0.004, size=len(calendar))

    rows = []
    level = 100.0
    for i, cycle in enumerate(calendar):
        if i > 0:
            level *= 1.0 + float(gap_bench[i])
        rows.append((cycle.first_day, level))
        level *= 1.0 + float(monthly_bench[i])
        rows.append((cycle.last_day, level))
    series[benchmark] = rows

    for ticker in names:
        rng = np.random.default_rng(stable_seed(seed_tag, "ticker", ticker))
        idio = rng.normal(0.001, 0.045, size=len(calendar))
        gaps = rng.normal(0.0, 0.006, size=len(calendar))
        rows = []
        level = float(rng.uniform(5.0, 80.0))
        for i, cycle in enumerate(calendar):
            if i > 0:
                level *= 1.0 + float(gaps[i])
            rows.append((cycle.first_day, level))
            level *= 1.0 + float(monthly_bench[i]) + float(idio[i])
            rows.append((cycle.last_day, level))
        series[ticker] = rows
    return MarketDataTable(series, benchmark=benchmark)


def prices_csv(table: MarketDataTable) -> str:
    """Render a table back to the ingestion CSV format."""
    lines = ["date,ticker,tr_level"]
    for ticker, d, level in table.rows():
        lines.append(f"{d.isoformat()},{ticker},{level:.8f}")
    return "\n".join(lines) + "\n"


def calendar_csv(calendar: Sequence[MonthlyCycle]) -> str:
    lines = ["cycle_id,first_day,last_day,cutoff"]
    for c in calendar:
        lines.append(
            f"{c.cycle_id},{c.first_day.isoformat()},{c.last_day.isoformat()},{c.cutoff.isoformat()}"
        )
    return "\n".join(lines) + "\n"


METRIC_RANGES: dict[str, tuple[float, float]] = {
    "pe_ratio": (5.0, 40.0),
    "pb_ratio": (0.5, 6.0),
    "eps_growth": (-0.20, 0.40),
    "revenue_growth": (-0.10, 0.30),
    "debt_equity": (0.10, 2.50),
    "roe": (0.02, 0.30),
    "momentum": (-0.25, 0.35),
    "rsi": (20.0, 80.0),
    "industry_growth": (-0.05, 0.15),
    "sector_outlook": (0.0, 1.0),
    "news_sentiment": (0.0, 1.0),
    "analyst_views": (0.0, 1.0),
}


def firm_metrics(cycle_id: str, ticker: str) -> dict[str, float]:
    """The fundamentals a data feed would show for one firm-month."""
    rng = np.random.default_rng(stable_seed("fundamentals-v1", cycle_id, ticker))
    return {
        metric: float(round(rng.uniform(lo, hi), 4))
        for metric, (lo, hi) in METRIC_RANGES.items()
    }


def cross_section_metrics(cycle_id: str, tickers: Optional[Iterable[str]] = None) -> dict[str, dict[str, float]]:
    names = list(tickers) if tickers is not None else universe.tickers()
    return {t: firm_metrics(cycle_id, t) for t in names}
