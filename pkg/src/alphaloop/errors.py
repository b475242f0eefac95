"""Exception hierarchy shared across the engine.

Every error raised on a documented contract boundary derives from
AlphaloopError so callers (and the CLI exit-code mapping) can treat the
library uniformly.
"""
from __future__ import annotations


class AlphaloopError(Exception):
    """Base class for all engine errors."""


class ConfigError(AlphaloopError):
    """Invalid or incomplete configuration."""


# -- scoring ---------------------------------------------------------------

class ScoringError(AlphaloopError):
    """Base class for scoring failures."""


class EmptyCrossSection(ScoringError):
    """No observations supplied for a cross-sectional computation."""


class InvalidValue(ScoringError):
    """A raw metric value is non-finite or otherwise unusable."""


class CategoryMissing(ScoringError):
    """Every sub-metric of a category is missing."""


class NoSignal(ScoringError):
    """No category score is available for a firm."""


# -- parsing ---------------------------------------------------------------

class ParseError(AlphaloopError):
    """Base class for response-parsing failures."""


class UnparseableResponse(ParseError):
    """No ticker score could be extracted from a response body."""


class TableParseError(ParseError):
    """A table block was detected but is structurally malformed."""

    def __init__(self, message: str, first_line: int, last_line: int):
        super().__init__(f"{message} (lines {first_line}-{last_line})")
        self.first_line = first_line
        self.last_line = last_line


# -- gateway ---------------------------------------------------------------

class GatewayError(AlphaloopError):
    """Base class for provider-gateway failures."""


class TemplateError(GatewayError):
    """A prompt template slot is missing or malformed."""


class AttachmentRequired(GatewayError):
    """The filings strategy was invoked without any attachment."""


class CapabilityError(GatewayError):
    """The provider does not support a requested capability."""


class SessionExists(GatewayError):
    """A fresh session was requested for a key that already has one."""


class TransportError(GatewayError):
    """Provider transport failed after exhausting retries."""


# -- backtest --------------------------------------------------------------

class BacktestError(AlphaloopError):
    """Base class for backtest failures."""


class InsufficientBreadth(BacktestError):
    """Fewer scored firms than the strategy needs positions."""


class MissingReturn(BacktestError):
    """A selected position has no realized return."""

    def __init__(self, ticker: str):
        super().__init__(f"no realized return for {ticker}")
        self.ticker = ticker


class MissingSignal(BacktestError):
    """No signal set exists for a cycle in the configured window."""


class LookAheadViolation(BacktestError):
    """A signal is dated after the start of its cycle."""


class DataGap(BacktestError):
    """Market data does not cover a required ticker/date."""


# -- evaluation ------------------------------------------------------------

class EvaluationError(AlphaloopError):
    """Base class for metric-suite failures."""


class DegenerateTrackingError(EvaluationError):
    """Tracking error is zero; the information ratio is undefined."""


class InsufficientSample(EvaluationError):
    """Too few observations for the requested statistic."""


class NonPositiveVariance(EvaluationError):
    """The HAC long-run variance estimate is not positive."""


class EmptySample(EvaluationError):
    """A classification metric was requested on an empty sample."""


class MissingCell(EvaluationError):
    """The provider x strategy grid is incomplete."""

    def __init__(self, provider: str, strategy: str):
        super().__init__(f"missing report cell for ({provider}, {strategy})")
        self.provider = provider
        self.strategy = strategy


# -- store -----------------------------------------------------------------

class StoreError(AlphaloopError):
    """Base class for persistence and ingestion failures."""


class DataOrderError(StoreError):
    """Market-data dates are not strictly increasing for a ticker."""


class DataValueError(StoreError):
    """A market-data level is non-positive or non-numeric."""


class BenchmarkMissing(StoreError):
    """The benchmark series does not cover a cycle boundary date."""


class LedgerError(StoreError):
    """A ledger event violates the event schema."""


# -- console ---------------------------------------------------------------

class ConsoleError(AlphaloopError):
    """Base class for review-console failures."""


class NotFound(ConsoleError):
    """Unknown cycle or item id."""


class ItemLocked(ConsoleError):
    """The review item is approved and can no longer change."""


class InvalidScore(ConsoleError):
    """A final score outside [0, 1] was submitted."""
