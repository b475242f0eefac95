"""Market data ingestion and the monthly cycle calendar.

Prices arrive as total-return index levels (dividends reinvested), one
CSV row per (date, ticker). Monthly holding returns are always derived
as level(last)/level(first) - 1 so dividend events never need separate
handling.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

from .errors import (
    BenchmarkMissing,
    ConfigError,
    DataGap,
    DataOrderError,
    DataValueError,
)

DEFAULT_BENCHMARK = "IBEX35TR"


@dataclass(frozen=True)
class MonthlyCycle:
    """One investment cycle: hold first trading day through last.

    The information cutoff is the last calendar day of the month before
    the holding month; nothing published after it may inform the cycle's
    signals.
    """

    cycle_id: str
    first_day: date
    last_day: date
    cutoff: date

    def __post_init__(self) -> None:
        if not (self.cutoff < self.first_day <= self.last_day):
            raise ConfigError(
                f"cycle {self.cycle_id}: need cutoff < first_day <= last_day, "
                f"got {self.cutoff} / {self.first_day} / {self.last_day}"
            )
        month_start = self.first_day.replace(day=1)
        if self.cutoff != month_start - timedelta(days=1):
            raise ConfigError(
                f"cycle {self.cycle_id}: cutoff {self.cutoff} is not the last "
                f"day of the month before {self.first_day}"
            )


class MarketDataTable:
    """Total-return levels per ticker, strictly date-ordered."""

    def __init__(
        self,
        series: Mapping[str, Sequence[tuple[date, float]]],
        benchmark: str = DEFAULT_BENCHMARK,
    ) -> None:
        self.benchmark = benchmark
        self._series: dict[str, dict[date, float]] = {}
        for ticker, rows in series.items():
            prev: date | None = None
            by_date: dict[date, float] = {}
            for d, level in rows:
                if prev is not None and d <= prev:
                    raise DataOrderError(f"{ticker}: dates not strictly increasing at {d}")
                if not math.isfinite(level) or level <= 0:
                    raise DataValueError(f"{ticker}: nonpositive level {level!r} on {d}")
                by_date[d] = level
                prev = d
            self._series[ticker] = by_date
        if benchmark not in self._series:
            raise BenchmarkMissing(f"no rows for benchmark series {benchmark}")

    def tickers(self) -> list[str]:
        return sorted(t for t in self._series if t != self.benchmark)

    def level(self, ticker: str, on: date) -> float:
        series = self._series.get(ticker)
        if series is None:
            raise DataGap(f"no price series for {ticker}")
        try:
            return series[on]
        except KeyError:
            raise DataGap(f"{ticker}: no level on {on}") from None

    def holding_return(self, ticker: str, first: date, last: date) -> float:
        return self.level(ticker, last) / self.level(ticker, first) - 1.0

    def benchmark_return(self, first: date, last: date) -> float:
        return self.holding_return(self.benchmark, first, last)

    def last_date(self, ticker: str) -> date:
        series = self._series.get(ticker)
        if not series:
            raise DataGap(f"no price series for {ticker}")
        return max(series)

    def rows(self) -> Iterable[tuple[str, date, float]]:
        """(ticker, date, level) rows, ticker- then date-ordered."""
        for ticker in sorted(self._series):
            for d in sorted(self._series[ticker]):
                yield ticker, d, self._series[ticker][d]


def ingest_prices(
    source: Union[str, Path, Iterable[str]],
    benchmark: str = DEFAULT_BENCHMARK,
) -> MarketDataTable:
    """Load a date,ticker,tr_level CSV into a validated table."""
    if isinstance(source, (str, Path)):
        with open(source, newline="") as fh:
            return ingest_prices(list(fh), benchmark=benchmark)

    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise DataValueError("empty price file") from None
    if [h.strip().lower() for h in header] != ["date", "ticker", "tr_level"]:
        raise DataValueError(f"unexpected header {header!r}, need date,ticker,tr_level")

    rows: dict[str, list[tuple[date, float]]] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 3:
            raise DataValueError(f"line {lineno}: expected 3 columns, got {len(row)}")
        raw_date, ticker, raw_level = (c.strip() for c in row)
        try:
            d = date.fromisoformat(raw_date)
        except ValueError:
            raise DataOrderError(f"line {lineno}: bad date {raw_date!r}") from None
        try:
            level = float(raw_level)
        except ValueError:
            raise DataValueError(f"line {lineno}: bad level {raw_level!r}") from None
        rows.setdefault(ticker, []).append((d, level))
    return MarketDataTable(rows, benchmark=benchmark)


def load_calendar(source: Union[str, Path, Iterable[str]]) -> list[MonthlyCycle]:
    """Load a cycle_id,first_day,last_day,cutoff CSV, ordered by first day."""
    if isinstance(source, (str, Path)):
        with open(source, newline="") as fh:
            return load_calendar(list(fh))

    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise ConfigError("empty calendar file") from None
    if [h.strip().lower() for h in header] != ["cycle_id", "first_day", "last_day", "cutoff"]:
        raise ConfigError(f"unexpected calendar header {header!r}")

    cycles = []
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 4:
            raise ConfigError(f"calendar line {lineno}: expected 4 columns")
        cid, first, last, cutoff = (c.strip() for c in row)
        try:
            cycles.append(
                MonthlyCycle(
                    cycle_id=cid,
                    first_day=date.fromisoformat(first),
                    last_day=date.fromisoformat(last),
                    cutoff=date.fromisoformat(cutoff),
                )
            )
        except ValueError as exc:
            raise ConfigError(f"calendar line {lineno}: {exc}") from None
    cycles.sort(key=lambda c: c.first_day)
    seen: set[str] = set()
    for c in cycles:
        if c.cycle_id in seen:
            raise ConfigError(f"duplicate cycle id {c.cycle_id}")
        seen.add(c.cycle_id)
    return cycles
