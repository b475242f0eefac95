"""Extraction of scores and metric tables from free-form model responses.

Responses are prose with an embedded score list and (usually) one
markdown-style pipe table breaking a single firm down by metric. Nothing
here recomputes or repairs values: cells are kept verbatim, absences are
recorded as omissions, and all numeric interpretation happens on request
so the original text always survives a round trip.
"""
from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field
from datetime import date
from typing import Iterable, Mapping, Optional, Sequence

from . import universe as universe_mod
from .errors import TableParseError, UnparseableResponse
from .scoring import ScoringFramework
from .universe import Firm
from .validation import PeriodRef, ReasoningTrace, SubScoreRecord

# required table fields, tags (i)-(viii)
FIELD_TAGS = (
    "category",
    "variable",
    "formula",
    "raw_value",
    "reference_date",
    "source",
    "normalization_range",
    "overall_score",
)

# editable header vocabulary per field; matching is fuzzy (see _match_header)
HEADER_ALIASES: dict[str, tuple[str, ...]] = {
    "category": ("category", "categories", "categoria"),
    "variable": ("variable", "variables", "metric", "indicator", "factor"),
    "formula": ("formula", "calculation formula", "formula used", "calculation"),
    "raw_value": ("raw value", "value", "raw values", "value obtained", "obtained value", "raw"),
    "reference_date": ("reference date", "date", "dates", "period", "as of", "component date"),
    "source": ("source", "data source", "sources", "provenance"),
    "normalization_range": (
        "normalization range", "normalisation range", "range", "normalization",
        "normalization values", "min max", "scale",
    ),
    "overall_score": (
        "overall score", "score", "unit score", "normalized score", "weighted score",
        "component score",
    ),
}

FUZZY_THRESHOLD = 0.6

# metric labels as they appear in responses -> canonical metric ids
METRIC_ALIASES: dict[str, tuple[str, ...]] = {
    "pe_ratio": ("p/e ratio", "pe ratio", "p/e", "per", "price to earnings", "price/earnings"),
    "pb_ratio": ("p/b ratio", "pb ratio", "p/b", "price to book", "price/book"),
    "eps_growth": ("eps growth", "earnings growth", "eps"),
    "revenue_growth": ("revenue growth", "sales growth", "revenue"),
    "debt_equity": ("debt/equity ratio", "debt/equity", "debt to equity", "d/e ratio", "d/e"),
    "roe": ("roe", "return on equity"),
    "momentum": ("momentum", "price momentum", "12m momentum", "6m momentum"),
    "rsi": ("rsi", "relative strength index", "relative strength index (rsi)"),
    "industry_growth": ("industry growth rate", "industry growth", "sector growth"),
    "sector_outlook": ("sector outlook", "sector view"),
    "news_sentiment": ("news sentiment", "recent news sentiment", "recent news sentiment (1 month)",
                       "media sentiment"),
    "analyst_views": ("analyst's recommendations", "analyst recommendations", "analyst views",
                      "analyst rating", "consensus recommendation"),
}


def _fold(text: str) -> str:
    """Lowercase and strip accents for robust label comparison."""
    decomposed = unicodedata.normalize("NFKD", text)
    return "".join(c for c in decomposed if not unicodedata.combining(c)).lower()


def _tokens(text: str) -> frozenset:
    return frozenset(re.findall(r"[a-z0-9/]+", _fold(text)))


def _overlap(a: frozenset, b: frozenset) -> float:
    if not a or not b:
        return 0.0
    return len(a & b) / max(len(a), len(b))


def _to_float(cell: str) -> Optional[float]:
    """Numeric value of a cell, accepting decimal commas; None if not numeric."""
    text = cell.strip()
    m = re.search(r"-?\d+(?:[.,]\d+)?", text)
    if not m:
        return None
    return float(m.group(0).replace(",", "."))


@dataclass(frozen=True)
class TableRow:
    """Verbatim cells for one table row; None marks an absent column."""

    category: Optional[str] = None
    variable: Optional[str] = None
    formula: Optional[str] = None
    raw_value: Optional[str] = None
    reference_date: Optional[str] = None
    source: Optional[str] = None
    normalization_range: Optional[str] = None
    overall_score: Optional[str] = None


@dataclass(frozen=True)
class ScoreTable:
    firm: Optional[str]
    header: tuple[str, ...]
    rows: tuple[TableRow, ...]
    omissions: tuple[tuple[int, str], ...]  # (row index, field tag)


@dataclass(frozen=True)
class ParsedResponse:
    scores: Mapping[str, float]
    table: Optional[ScoreTable]
    omissions: tuple[str, ...]  # universe tickers with no score found
    raw_text: str


# ------------------------------------------------------------ score list

SCORE_RE = re.compile(r"(?<![\w.,])[01](?:[.,]\d+)?(?![\w%])")


def _label_patterns(firm: Firm) -> list[re.Pattern]:
    pats = []
    for label in sorted(set(firm.all_labels()), key=len, reverse=True):
        pats.append(re.compile(
            r"(?<![A-Za-z0-9])" + re.escape(_fold(label)) + r"(?![A-Za-z0-9])"
        ))
    return pats


def extract_scores(
    text: str, firms: Optional[Sequence[Firm]] = None
) -> ParsedResponse:
    """Match every recognized firm to the nearest in-range score on its line.

    Ticker, legal name, and alias hits all count; "0,72" reads as 0.72.
    Firms in the universe with no recognizable score go to omissions.
    """
    if not text.strip():
        raise UnparseableResponse("empty response body")
    roster = list(firms) if firms is not None else list(universe_mod.UNIVERSE)
    patterns = {f.ticker: _label_patterns(f) for f in roster}

    scores: dict[str, float] = {}
    for line in text.splitlines():
        # match labels and numbers on the same folded text so offsets align
        folded = _fold(line)
        numbers = []
        for m in SCORE_RE.finditer(folded):
            value = float(m.group(0).replace(",", "."))
            if 0.0 <= value <= 1.0:
                numbers.append((m.start(), m.end(), value))
        if not numbers:
            continue
        for firm in roster:
            if firm.ticker in scores:
                continue
            for pat in patterns[firm.ticker]:
                hit = pat.search(folded)
                if hit:
                    # nearest number by gap; the one after the name wins ties
                    def gap(entry):
                        start, end, _ = entry
                        if start >= hit.end():
                            return (start - hit.end(), 0)
                        return (hit.start() - end, 1)

                    scores[firm.ticker] = min(numbers, key=gap)[2]
                    break
    if not scores:
        raise UnparseableResponse("no firm scores recognized in response")
    omissions = tuple(f.ticker for f in roster if f.ticker not in scores)
    table = extract_metric_table(text, firms=roster)
    return ParsedResponse(scores=scores, table=table, omissions=omissions, raw_text=text)


# ------------------------------------------------------------ pipe table

TABLE_RE = re.compile(
    r"^\|(.+)\|\s*\n\|[-:\s|]+\|\s*\n((?:\|.+\|\s*\n?)+)",
    re.MULTILINE,
)


def _split_row(line: str) -> list[str]:
    return [c.strip() for c in line.strip().strip("|").split("|")]


def _match_header(cells: Sequence[str]) -> dict[int, str]:
    """Column index -> field tag via token-overlap scoring."""
    assignment: dict[int, str] = {}
    taken: set[str] = set()
    candidates = []
    for idx, cell in enumerate(cells):
        cell_tokens = _tokens(cell)
        for tag, aliases in HEADER_ALIASES.items():
            best = max((_overlap(cell_tokens, _tokens(a)) for a in aliases), default=0.0)
            if best >= FUZZY_THRESHOLD:
                candidates.append((best, idx, tag))
    for score, idx, tag in sorted(candidates, key=lambda c: (-c[0], c[1])):
        if idx in assignment or tag in taken:
            continue
        assignment[idx] = tag
        taken.add(tag)
    return assignment


def _find_table_firm(
    text: str, table_start: int, firms: Sequence[Firm]
) -> Optional[str]:
    """The firm named closest above the table block, if any."""
    preceding = text[:table_start].splitlines()[-4:]
    for line in reversed(preceding):
        folded = _fold(line)
        for firm in firms:
            for pat in _label_patterns(firm):
                if pat.search(folded):
                    return firm.ticker
    return None


def extract_metric_table(
    text: str, firms: Optional[Sequence[Firm]] = None
) -> Optional[ScoreTable]:
    """First pipe table in the text as a ScoreTable; None when no table.

    Headers map to the required fields by fuzzy matching; anything the
    table fails to provide (a whole column, or one blank cell) is listed
    in omissions rather than defaulted.
    """
    roster = list(firms) if firms is not None else list(universe_mod.UNIVERSE)
    m = TABLE_RE.search(text)
    if m is None:
        return None
    first_line = text.count("\n", 0, m.start()) + 1
    last_line = text.count("\n", 0, m.end())

    header = tuple(_split_row(m.group(1)))
    column_map = _match_header(header)
    if not column_map:
        raise TableParseError("no recognizable table headers", first_line, last_line)

    rows = []
    omissions: list[tuple[int, str]] = []
    body_lines = [ln for ln in m.group(2).splitlines() if ln.strip()]
    for row_idx, line in enumerate(body_lines):
        cells = _split_row(line)
        if len(cells) != len(header):
            raise TableParseError(
                f"row {row_idx} has {len(cells)} cells, header has {len(header)}",
                first_line,
                last_line,
            )
        values: dict[str, Optional[str]] = {tag: None for tag in FIELD_TAGS}
        for idx, tag in column_map.items():
            values[tag] = cells[idx]
        for tag in FIELD_TAGS:
            if values[tag] is None or values[tag] == "":
                omissions.append((row_idx, tag))
        rows.append(TableRow(**values))

    return ScoreTable(
        firm=_find_table_firm(text, m.start(), roster),
        header=header,
        rows=tuple(rows),
        omissions=tuple(omissions),
    )


def render_table(table: ScoreTable) -> str:
    """Serialize back to pipe-table text (parse -> render round trips)."""
    column_map = _match_header(table.header)
    lines = ["| " + " | ".join(table.header) + " |"]
    lines.append("|" + "|".join(" --- " for _ in table.header) + "|")
    for row in table.rows:
        cells = []
        for idx, name in enumerate(table.header):
            tag = column_map.get(idx)
            value = getattr(row, tag) if tag else ""
            cells.append(value if value is not None else "")
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


# -------------------------------------------------------- period parsing

MONTHS = {
    name: i + 1
    for i, name in enumerate(
        ["january", "february", "march", "april", "may", "june", "july",
         "august", "september", "october", "november", "december"]
    )
}
MONTHS.update({k[:3]: v for k, v in MONTHS.items()})
MONTHS.update({
    "enero": 1, "febrero": 2, "marzo": 3, "abril": 4, "mayo": 5, "junio": 6,
    "julio": 7, "agosto": 8, "septiembre": 9, "octubre": 10, "noviembre": 11,
    "diciembre": 12,
})

_DAY_ISO = re.compile(r"\b(\d{4})-(\d{2})-(\d{2})\b")
_DAY_EU = re.compile(r"\b(\d{1,2})/(\d{1,2})/(\d{4})\b")
_QUARTER = re.compile(r"\b(?:q([1-4])\s*(\d{4})|(\d{4})\s*q([1-4])|([1-4])q\s*(\d{4}))\b")
_MONTH_NAME = re.compile(r"\b([a-z]+)\.?\s+(\d{4})\b")
_MONTH_ISO = re.compile(r"\b(\d{4})-(\d{2})(?!-)\b")
_YEAR = re.compile(r"\b(?:fy\s*)?(\d{4})\b")


def _month_end(year: int, month: int) -> date:
    import calendar
    return date(year, month, calendar.monthrange(year, month)[1])


def parse_period_refs(text: str) -> tuple[PeriodRef, ...]:
    """All dated references in a cell, most precise interpretation each.

    Grammar: ISO dates, DD/MM/YYYY, "Q1 2025" (any order), month names
    (English or Spanish) with year, "YYYY-MM", and bare or FY-prefixed
    years. Period refs resolve to their final day.
    """
    folded = _fold(text)
    refs: list[PeriodRef] = []
    spans: list[tuple[int, int]] = []

    def claim(start: int, end: int) -> bool:
        for s, e in spans:
            if start < e and end > s:
                return False
        spans.append((start, end))
        return True

    for m in _DAY_ISO.finditer(folded):
        try:
            d = date(int(m.group(1)), int(m.group(2)), int(m.group(3)))
        except ValueError:
            continue
        if claim(*m.span()):
            refs.append(PeriodRef(end=d, precision="day", text=m.group(0)))
    for m in _DAY_EU.finditer(folded):
        try:
            d = date(int(m.group(3)), int(m.group(2)), int(m.group(1)))
        except ValueError:
            continue
        if claim(*m.span()):
            refs.append(PeriodRef(end=d, precision="day", text=m.group(0)))
    for m in _QUARTER.finditer(folded):
        q = int(m.group(1) or m.group(4) or m.group(5))
        year = int(m.group(2) or m.group(3) or m.group(6))
        if claim(*m.span()):
            refs.append(PeriodRef(end=_month_end(year, q * 3), precision="quarter",
                                  text=m.group(0)))
    for m in _MONTH_NAME.finditer(folded):
        month = MONTHS.get(m.group(1))
        if month is None:
            continue
        if claim(*m.span()):
            refs.append(PeriodRef(end=_month_end(int(m.group(2)), month),
                                  precision="month", text=m.group(0)))
    for m in _MONTH_ISO.finditer(folded):
        month = int(m.group(2))
        if not 1 <= month <= 12:
            continue
        if claim(*m.span()):
            refs.append(PeriodRef(end=_month_end(int(m.group(1)), month),
                                  precision="month", text=m.group(0)))
    for m in _YEAR.finditer(folded):
        year = int(m.group(1))
        if not 1990 <= year <= 2100:
            continue
        if claim(*m.span()):
            refs.append(PeriodRef(end=date(year, 12, 31), precision="year", text=m.group(0)))

    refs.sort(key=lambda r: (r.end, r.precision, r.text))
    return tuple(refs)


def _canonical_metric(label: str) -> Optional[str]:
    folded = _fold(label).strip()
    for metric, aliases in METRIC_ALIASES.items():
        if folded in aliases:
            return metric
    label_tokens = _tokens(label)
    best: tuple[float, Optional[str]] = (0.0, None)
    for metric, aliases in METRIC_ALIASES.items():
        score = max((_overlap(label_tokens, _tokens(a)) for a in aliases), default=0.0)
        if score > best[0]:
            best = (score, metric)
    return best[1] if best[0] >= FUZZY_THRESHOLD else None


# ---------------------------------------------------------------- traces

def to_trace(
    parsed: ParsedResponse,
    session_id: str,
    cycle_id: str,
    framework: Optional[ScoringFramework] = None,
    missing_metrics: Optional[Mapping[str, Iterable[str]]] = None,
) -> list[ReasoningTrace]:
    """One trace per scored firm, values carried verbatim.

    The firm covered by the metric table additionally gets per-metric
    sub-score records. missing_metrics (firm -> metric ids the upstream
    feed lacked) is stamped onto each trace for imputation checks.
    """
    missing = missing_metrics or {}
    traces = []
    for ticker in sorted(parsed.scores):
        sub_scores: dict[str, SubScoreRecord] = {}
        if parsed.table is not None and parsed.table.firm == ticker:
            for row in parsed.table.rows:
                if row.variable is None:
                    continue
                metric = _canonical_metric(row.variable)
                if metric is None:
                    continue
                refs = parse_period_refs(row.reference_date) if row.reference_date else ()
                sub_scores[metric] = SubScoreRecord(
                    unit_score=_to_float(row.overall_score) if row.overall_score else None,
                    raw_value=_to_float(row.raw_value) if row.raw_value else None,
                    refs=refs,
                    source=row.source or None,
                    ref_text=row.reference_date or None,
                )
        traces.append(ReasoningTrace(
            firm=ticker,
            session_id=session_id,
            cycle_id=cycle_id,
            reported_composite=parsed.scores[ticker],
            reported_sub_scores=sub_scores,
            weights_used=framework if sub_scores else None,
            free_text=parsed.raw_text,
            missing_metrics=frozenset(missing.get(ticker, ())),
        ))
    return traces
