"""Performance evaluation: excess returns, risk-adjusted statistics,
classification quality, and the provider-by-strategy report grid.

Inference on the monthly alpha series uses a Bartlett-kernel HAC
variance (one lag by default) to absorb the serial correlation a short
monthly series can carry.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from statistics import median
from typing import Mapping, Optional, Sequence, Union

from .backtest import ReturnSeries
from .errors import (
    DegenerateTrackingError,
    EmptySample,
    InsufficientSample,
    InvalidValue,
    MissingCell,
    MissingReturn,
    NonPositiveVariance,
)

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.5
DEFAULT_NW_LAG = 1

Threshold = Union[float, str]  # a fixed cut or "median"


@dataclass(frozen=True)
class ExcessReturnSeries:
    """Per-cycle portfolio-minus-benchmark returns."""

    alphas: tuple[float, ...]
    cycle_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.alphas) != len(self.cycle_ids):
            raise InvalidValue("alpha/cycle length mismatch")

    def mean(self) -> float:
        return math.fsum(self.alphas) / len(self.alphas)


def excess_return_series(returns: ReturnSeries) -> ExcessReturnSeries:
    if not returns.records:
        raise EmptySample("no return records")
    return ExcessReturnSeries(
        alphas=tuple(r.portfolio_return - r.benchmark_return for r in returns.records),
        cycle_ids=tuple(r.cycle_id for r in returns.records),
    )


def information_ratio(alphas: Sequence[float]) -> float:
    """Mean excess return over its sample standard deviation."""
    n = len(alphas)
    if n < 2:
        raise InsufficientSample(f"need >= 2 observations, got {n}")
    mean = math.fsum(alphas) / n
    var = math.fsum((a - mean) ** 2 for a in alphas) / (n - 1)
    if var == 0.0:
        raise DegenerateTrackingError("zero tracking error")
    return mean / math.sqrt(var)


def _autocovariance(demeaned: Sequence[float], j: int) -> float:
    n = len(demeaned)
    return math.fsum(demeaned[t] * demeaned[t - j] for t in range(j, n)) / n


def nw_tstat(alphas: Sequence[float], lag: int = DEFAULT_NW_LAG) -> float:
    """t-statistic for mean(alpha) = 0 under a Bartlett HAC variance.

    S = gamma_0 + 2 * sum_j (1 - j/(lag+1)) * gamma_j with 1/T-scaled
    autocovariances; t = mean / sqrt(S/T).
    """
    n = len(alphas)
    if n < 3:
        raise InsufficientSample(f"need >= 3 observations, got {n}")
    if lag < 0:
        raise InvalidValue(f"lag {lag} must be >= 0")
    mean = math.fsum(alphas) / n
    demeaned = [a - mean for a in alphas]
    s = _autocovariance(demeaned, 0)
    for j in range(1, min(lag, n - 1) + 1):
        s += 2.0 * (1.0 - j / (lag + 1)) * _autocovariance(demeaned, j)
    if s <= 0.0:
        raise NonPositiveVariance(f"HAC variance {s!r} not positive")
    return mean / math.sqrt(s / n)


@dataclass(frozen=True)
class ConfusionCounts:
    """Counts with outperform as the positive class."""

    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise InvalidValue("negative confusion count")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def add(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn
        )


def classify(
    scores: Mapping[str, float],
    realized: Mapping[str, float],
    benchmark_return: float,
    threshold: Threshold = DEFAULT_THRESHOLD,
) -> ConfusionCounts:
    """Confusion counts for one cross-section of stock-months.

    Predicted outperform iff score >= threshold; a stock returning
    exactly the benchmark counts as an actual underperformer.
    """
    if not scores:
        raise EmptySample("no scored stocks")
    if threshold == "median":
        cut = float(median(scores.values()))
    else:
        cut = float(threshold)
    tp = fp = tn = fn = 0
    for ticker, score in scores.items():
        if ticker not in realized:
            raise MissingReturn(ticker)
        predicted_out = score >= cut
        actual_out = realized[ticker] > benchmark_return
        if predicted_out and actual_out:
            tp += 1
        elif predicted_out:
            fp += 1
        elif actual_out:
            fn += 1
        else:
            tn += 1
    return ConfusionCounts(tp, fp, tn, fn)


def accuracy_from_counts(counts: ConfusionCounts) -> float:
    if counts.total == 0:
        raise EmptySample("no observations")
    return (counts.tp + counts.tn) / counts.total


def f1_from_counts(counts: ConfusionCounts) -> float:
    """Mean of the per-class F1 scores (outperform, underperform).

    A class that is both never predicted and never realized has an
    undefined F1; it contributes 0 and logs a warning.
    """
    if counts.total == 0:
        raise EmptySample("no observations")

    def class_f1(tp: int, fp: int, fn: int, label: str) -> float:
        denom = 2 * tp + fp + fn
        if denom == 0:
            log.warning("class %s has no predicted or actual members; F1 set to 0", label)
            return 0.0
        return 2 * tp / denom

    out = class_f1(counts.tp, counts.fp, counts.fn, "outperform")
    under = class_f1(counts.tn, counts.fn, counts.fp, "underperform")
    return (out + under) / 2.0


def directional_accuracy(
    scores: Mapping[str, float],
    realized: Mapping[str, float],
    benchmark_return: float,
    threshold: Threshold = DEFAULT_THRESHOLD,
) -> float:
    return accuracy_from_counts(classify(scores, realized, benchmark_return, threshold))


def weighted_f1(
    scores: Mapping[str, float],
    realized: Mapping[str, float],
    benchmark_return: float,
    threshold: Threshold = DEFAULT_THRESHOLD,
) -> float:
    return f1_from_counts(classify(scores, realized, benchmark_return, threshold))


@dataclass(frozen=True)
class BlendedScore:
    value: float
    filings_present: bool


def blend_with_filings(base: float, filings: Optional[float]) -> BlendedScore:
    """Average the prompt-derived score with the disclosure-derived one.

    When no disclosure score exists for the firm-month the base passes
    through unchanged, flagged so downstream reporting can say so.
    """
    if not (0.0 <= base <= 1.0):
        raise InvalidValue(f"base score {base!r} outside [0,1]")
    if filings is None:
        return BlendedScore(value=base, filings_present=False)
    if not (0.0 <= filings <= 1.0):
        raise InvalidValue(f"filings score {filings!r} outside [0,1]")
    return BlendedScore(value=(base + filings) / 2.0, filings_present=True)


def cumulative_excess(alphas: Sequence[float]) -> tuple[float, float]:
    """(arithmetic sum, geometric compounding) of the alpha series."""
    if not alphas:
        raise EmptySample("no alphas")
    arithmetic = math.fsum(alphas)
    geometric = 1.0
    for a in alphas:
        geometric *= 1.0 + a
    return arithmetic, geometric - 1.0


# ------------------------------------------------------------ report grid

METRIC_FIELDS = (
    "mean_alpha",
    "nw_t",
    "ir",
    "accuracy",
    "weighted_f1",
    "cumulative_arithmetic",
    "cumulative_geometric",
)


@dataclass(frozen=True)
class MetricCell:
    """One (provider, strategy) cell; metrics not computed stay None."""

    mean_alpha: Optional[float] = None
    nw_t: Optional[float] = None
    ir: Optional[float] = None
    accuracy: Optional[float] = None
    weighted_f1: Optional[float] = None
    cumulative_arithmetic: Optional[float] = None
    cumulative_geometric: Optional[float] = None


def _mean_cell(cells: Sequence[MetricCell]) -> MetricCell:
    """Fieldwise arithmetic mean; a field goes None if any input lacks it."""
    values = {}
    for name in METRIC_FIELDS:
        column = [getattr(c, name) for c in cells]
        values[name] = None if any(v is None for v in column) else math.fsum(column) / len(column)
    return MetricCell(**values)


@dataclass(frozen=True)
class PerformanceReport:
    providers: tuple[str, ...]
    strategies: tuple[str, ...]
    cells: Mapping[tuple[str, str], MetricCell]
    provider_rows: Mapping[str, MetricCell]
    strategy_rows: Mapping[str, MetricCell]
    excluded_providers: tuple[str, ...] = ()
    subperiods: Mapping[str, "PerformanceReport"] = field(default_factory=dict)


def aggregate_report(
    cells: Mapping[tuple[str, str], MetricCell],
    providers: Sequence[str],
    strategies: Sequence[str],
    exclude_providers: Sequence[str] = (),
) -> PerformanceReport:
    """Assemble the grid plus its marginal rows.

    Provider rows are cross-strategy arithmetic means, strategy rows are
    cross-provider means. exclude_providers drops providers from the
    strategy marginals only (their own rows remain), mirroring the
    "excluding provider X" report variant.
    """
    for p in providers:
        for s in strategies:
            if (p, s) not in cells:
                raise MissingCell(provider=p, strategy=s)
    excluded = tuple(exclude_providers)
    unknown = [p for p in excluded if p not in providers]
    if unknown:
        raise InvalidValue(f"cannot exclude unknown providers {unknown}")
    marginal_providers = [p for p in providers if p not in excluded] or list(providers)

    provider_rows = {
        p: _mean_cell([cells[(p, s)] for s in strategies]) for p in providers
    }
    strategy_rows = {
        s: _mean_cell([cells[(p, s)] for p in marginal_providers]) for s in strategies
    }
    return PerformanceReport(
        providers=tuple(providers),
        strategies=tuple(strategies),
        cells=dict(cells),
        provider_rows=provider_rows,
        strategy_rows=strategy_rows,
        excluded_providers=excluded,
    )


@dataclass(frozen=True)
class StrategyOutcome:
    """Everything needed to score one (provider, strategy) run."""

    provider: str
    strategy: str
    alphas: tuple[float, ...]
    cycle_ids: tuple[str, ...]
    monthly_counts: tuple[ConfusionCounts, ...]

    def __post_init__(self) -> None:
        if not (len(self.alphas) == len(self.cycle_ids) == len(self.monthly_counts)):
            raise InvalidValue(
                f"{self.provider}/{self.strategy}: misaligned outcome series"
            )


def _cell_from_outcome(outcome: StrategyOutcome) -> MetricCell:
    alphas = outcome.alphas
    pooled = ConfusionCounts(0, 0, 0, 0)
    for c in outcome.monthly_counts:
        pooled = pooled.add(c)
    arith, geom = cumulative_excess(alphas) if alphas else (None, None)
    cell = MetricCell(
        mean_alpha=math.fsum(alphas) / len(alphas) if alphas else None,
        cumulative_arithmetic=arith,
        cumulative_geometric=geom,
        accuracy=accuracy_from_counts(pooled) if pooled.total else None,
        weighted_f1=f1_from_counts(pooled) if pooled.total else None,
    )
    try:
        cell = replace(cell, nw_t=nw_tstat(alphas))
    except (InsufficientSample, NonPositiveVariance):
        pass
    try:
        cell = replace(cell, ir=information_ratio(alphas))
    except (InsufficientSample, DegenerateTrackingError):
        pass
    return cell


def build_report(
    outcomes: Mapping[tuple[str, str], StrategyOutcome],
    providers: Sequence[str],
    strategies: Sequence[str],
    exclude_providers: Sequence[str] = (),
    subperiods: bool = True,
) -> PerformanceReport:
    """Compute every cell from raw outcome series, with subperiod panels.

    Subperiods split each outcome's cycle list into first and second
    halves and rebuild the whole grid on each half.
    """
    for p in providers:
        for s in strategies:
            if (p, s) not in outcomes:
                raise MissingCell(provider=p, strategy=s)

    cells = {key: _cell_from_outcome(o) for key, o in outcomes.items()}
    report = aggregate_report(cells, providers, strategies, exclude_providers)

    if not subperiods:
        return report
    n_cycles = min(len(o.alphas) for o in outcomes.values())
    half = n_cycles // 2
    if half < 2:
        return report

    def slice_outcome(o: StrategyOutcome, lo: int, hi: int) -> StrategyOutcome:
        return StrategyOutcome(
            provider=o.provider,
            strategy=o.strategy,
            alphas=o.alphas[lo:hi],
            cycle_ids=o.cycle_ids[lo:hi],
            monthly_counts=o.monthly_counts[lo:hi],
        )

    panels = {}
    for label, lo, hi in (("first_half", 0, half), ("second_half", half, n_cycles)):
        sliced = {key: slice_outcome(o, lo, hi) for key, o in outcomes.items()}
        sub_cells = {key: _cell_from_outcome(o) for key, o in sliced.items()}
        panels[label] = aggregate_report(sub_cells, providers, strategies, exclude_providers)
    return replace(report, subperiods=panels)


# ------------------------------------------------------------- export

PANEL_TITLES = {
    "mean_alpha": "Mean monthly excess return",
    "nw_t": "Newey-West t-statistic",
    "ir": "Information ratio",
    "accuracy": "Directional accuracy",
    "weighted_f1": "Weighted F1",
    "cumulative_arithmetic": "Cumulative excess return (arithmetic)",
    "cumulative_geometric": "Cumulative excess return (geometric)",
}


def _format(value: Optional[float], places: int = 4) -> str:
    return "" if value is None else f"{value:.{places}f}"


def report_to_csv_panels(report: PerformanceReport) -> dict[str, str]:
    """One CSV grid per metric: provider rows, strategy columns, both marginals."""
    panels = {}
    for metric in METRIC_FIELDS:
        if all(getattr(report.cells[(p, s)], metric) is None
               for p in report.providers for s in report.strategies):
            continue
        lines = ["provider," + ",".join(report.strategies) + ",provider_mean"]
        for p in report.providers:
            row = [p]
            row += [_format(getattr(report.cells[(p, s)], metric)) for s in report.strategies]
            row.append(_format(getattr(report.provider_rows[p], metric)))
            lines.append(",".join(row))
        marginal = ["strategy_mean"]
        marginal += [_format(getattr(report.strategy_rows[s], metric)) for s in report.strategies]
        marginal.append("")
        lines.append(",".join(marginal))
        panels[metric] = "\n".join(lines) + "\n"
    return panels


def report_to_text(report: PerformanceReport) -> str:
    """Plain-text rendering of the full grid and marginals."""
    out = []
    width = max([len(p) for p in report.providers] + [len("strategy_mean")]) + 2
    col = 12
    for metric in METRIC_FIELDS:
        if all(getattr(report.cells[(p, s)], metric) is None
               for p in report.providers for s in report.strategies):
            continue
        title = PANEL_TITLES[metric]
        if report.excluded_providers:
            title += f" (marginals exclude: {', '.join(report.excluded_providers)})"
        out.append(title)
        header = " " * width + "".join(s.rjust(col) for s in report.strategies)
        out.append(header + "mean".rjust(col))
        for p in report.providers:
            row = p.ljust(width)
            row += "".join(
                _format(getattr(report.cells[(p, s)], metric)).rjust(col)
                for s in report.strategies
            )
            row += _format(getattr(report.provider_rows[p], metric)).rjust(col)
            out.append(row)
        row = "strategy_mean".ljust(width)
        row += "".join(
            _format(getattr(report.strategy_rows[s], metric)).rjust(col)
            for s in report.strategies
        )
        out.append(row)
        out.append("")
    for label, panel in report.subperiods.items():
        out.append(f"== subperiod: {label} ==")
        out.append(report_to_text(panel))
    return "\n".join(out)
