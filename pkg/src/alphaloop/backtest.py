"""Monthly long-short backtest.

Each cycle: rank the cross-section by outperformance score, open equal
weight long positions in the top k and shorts in the bottom k on the
first trading day, close on the last, and compare against the benchmark
total return over the same span.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date
from typing import Iterable, Mapping, Sequence

from .errors import (
    DataGap,
    InsufficientBreadth,
    InvalidValue,
    LookAheadViolation,
    MissingReturn,
    MissingSignal,
)
from .marketdata import MarketDataTable, MonthlyCycle

DEFAULT_POSITIONS = 5


@dataclass(frozen=True)
class SignalSet:
    """Final per-firm outperformance scores for one (cycle, provider, strategy)."""

    cycle_id: str
    provider: str
    strategy: str
    scores: Mapping[str, float]
    signal_date: date

    def __post_init__(self) -> None:
        for ticker, score in self.scores.items():
            if not (math.isfinite(score) and 0.0 <= score <= 1.0):
                raise InvalidValue(f"{self.cycle_id}/{ticker}: score {score!r} outside [0,1]")


@dataclass(frozen=True)
class CycleResult:
    cycle_id: str
    portfolio_return: float
    benchmark_return: float
    long: tuple[str, ...]
    short: tuple[str, ...]


@dataclass(frozen=True)
class ReturnSeries:
    records: tuple[CycleResult, ...]

    def __post_init__(self) -> None:
        for rec in self.records:
            if not (math.isfinite(rec.portfolio_return) and math.isfinite(rec.benchmark_return)):
                raise InvalidValue(f"{rec.cycle_id}: non-finite return")

    def cycle_ids(self) -> list[str]:
        return [r.cycle_id for r in self.records]

    def portfolio_returns(self) -> list[float]:
        return [r.portfolio_return for r in self.records]

    def benchmark_returns(self) -> list[float]:
        return [r.benchmark_return for r in self.records]


def rank_and_select(signals: SignalSet, k: int = DEFAULT_POSITIONS) -> tuple[list[str], list[str]]:
    """Top-k and bottom-k tickers by score.

    One full ranking (score descending, ticker ascending on ties) decides
    both legs, so they can never overlap.
    """
    if k < 1:
        raise InvalidValue(f"position count {k} must be >= 1")
    if len(signals.scores) < 2 * k:
        raise InsufficientBreadth(
            f"{signals.cycle_id}: {len(signals.scores)} scored firms < {2 * k} required"
        )
    ranking = sorted(signals.scores, key=lambda t: (-signals.scores[t], t))
    return ranking[:k], ranking[-k:]


def portfolio_return(
    long: Sequence[str], short: Sequence[str], returns: Mapping[str, float]
) -> float:
    """Equal-weight long leg minus equal-weight short leg."""
    for ticker in list(long) + list(short):
        if ticker not in returns:
            raise MissingReturn(ticker)
    long_mean = math.fsum(returns[t] for t in long) / len(long)
    short_mean = math.fsum(returns[t] for t in short) / len(short)
    return long_mean - short_mean


def run_cycles(
    signal_history: Mapping[str, SignalSet],
    market: MarketDataTable,
    calendar: Iterable[MonthlyCycle],
    k: int = DEFAULT_POSITIONS,
) -> ReturnSeries:
    """Evaluate every calendar cycle into an aligned return series.

    Signals must predate the holding window; a signal stamped after the
    cycle's first trading day would embed information unavailable at the
    rebalance and aborts the run.
    """
    records = []
    for cycle in sorted(calendar, key=lambda c: c.first_day):
        signals = signal_history.get(cycle.cycle_id)
        if signals is None:
            raise MissingSignal(f"no signals for cycle {cycle.cycle_id}")
        if signals.signal_date > cycle.first_day:
            raise LookAheadViolation(
                f"cycle {cycle.cycle_id}: signals dated {signals.signal_date}, "
                f"after first trading day {cycle.first_day}"
            )
        long, short = rank_and_select(signals, k)
        returns: dict[str, float] = {}
        for ticker in long + short:
            try:
                returns[ticker] = market.holding_return(ticker, cycle.first_day, cycle.last_day)
            except DataGap as exc:
                raise DataGap(f"cycle {cycle.cycle_id}: {exc}") from None
        records.append(
            CycleResult(
                cycle_id=cycle.cycle_id,
                portfolio_return=portfolio_return(long, short, returns),
                benchmark_return=market.benchmark_return(cycle.first_day, cycle.last_day),
                long=tuple(long),
                short=tuple(short),
            )
        )
    return ReturnSeries(tuple(records))
