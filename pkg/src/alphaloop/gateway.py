"""Provider-agnostic LLM client layer.

Renders the monthly query prompts, owns the fresh-session protocol
(one conversation per provider/cycle/strategy, follow-ups appended to
the structured session), retries transient transport failures, and
records provider model versions with each transcript. Network adapters
are deliberately thin; the deterministic mock adapter is a first-class
citizen so the whole pipeline runs with no credentials.
"""
from __future__ import annotations

import base64
import os
import re
import time
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from typing import Callable, Mapping, Optional, Protocol, Sequence

import httpx
import numpy as np

from . import synthetic
from . import universe as universe_mod
from .errors import (
    AttachmentRequired,
    CapabilityError,
    ConfigError,
    GatewayError,
    SessionExists,
    TemplateError,
    TransportError,
)
from .scoring import (
    MetricObservation,
    ScoringFramework,
    default_framework,
    normalize_cross_section,
    score_firm,
)
from .universe import Firm

STRATEGIES = ("naive", "structured", "cot_followup", "filings")

CUTOFF_CLAUSE = "Do not use information published after"

SLOTS = ("query_date", "cutoff_date", "firm_list", "correction_text")
_SLOT_RE = re.compile(r"\{([a-z_]+)\}")

NAIVE_BODY = (
    "Your role is a financial manager. I want to start investing in Spanish "
    "equities. Tell me which IBEX-35 assets you expect to outperform the stock "
    "market over the next month. You must calculate a score from 0 to 1, based "
    "on your stock prediction, for all IBEX-35 index components.\n"
    "\n"
    "The score must depend on different categories and factors and reflect the "
    "expected return that you have calculated for each company using your "
    "model. You must include in your answer: 1. The overall score calculated "
    "for {firm_list}. 2. A table for one of the assets showing: (i) the "
    "categories used in the calculation, (ii) the variables included in each "
    "category, (iii) the calculation formula for each variable, (iv) the raw "
    "value obtained for each variable and (v) the overall score calculated for "
    "the asset.\n"
    "\n"
    "Check that in your response you have shown both the scores and the table."
)

STRUCTURED_BODY = (
    "Today is {query_date} and the cutoff date is {cutoff_date}. Do not use "
    "information published after that day. Your role is a financial manager. I "
    "want to start investing in Spanish equities. Tell me which IBEX-35 assets "
    "you expect to outperform the stock market over the next month. You must "
    "calculate a score from 0 to 1, based on your stock prediction, for all "
    "IBEX-35 index components.\n"
    "\n"
    "You must use the most recent data available to calculate each variable "
    "and consider forward-looking information and recent trends when "
    "available. The score must be calculated using a multi-factor model that "
    "includes 6 categories with the following weights and variables: 1. "
    "Valuation (20%): P/E ratio (60%) and P/B ratio (40%) 2. Growth potential "
    "(20%): EPS Growth (60%) and Revenue Growth (40%) 3. Financial health "
    "(15%): Debt/Equity Ratio (60%) and ROE (40%) 4. Technical (15%): Momentum "
    "(60%) and Relative Strength Index (RSI) (40%) 5. Macro & Sector risk "
    "(15%): Industry growth rate (60%) and Sector Outlook (40%) 6. Sentiment "
    "(15%): Recent news sentiment (1 month) (80%) and analyst's "
    "recommendations (20%). Use the general version of each formula and a "
    "[0,1] normalization range based on the typical ibex 35 values for each "
    "variable.\n"
    "\n"
    "You must include in your answer: 1. The overall [0,1] score calculated "
    "for {firm_list}. 2. A table for one of the assets including: (i) the "
    "categories used in the calculation, (ii) the variables included in each "
    "category, (iii) the calculation formula for each variable, (iv) the raw "
    "values obtained for each variable, (v) the date to which each component "
    "in the formula refers to, (vi) the data source, (vii) the values used in "
    "the normalization range and (viii) the overall score calculated for the "
    "asset.\n"
    "\n"
    "Check that in your response you have shown both the scores and the "
    "table. I'm going to tip $1000 for a better solution! You will be "
    "penalized if the model is not well built."
)

COT_MARKER = "Review the score you calculated for"

COT_BODY = (
    "Review the score you calculated for {firm_list}. Re-examine the "
    "reasoning step by step: check the arithmetic of every weighted category, "
    "confirm each input is the most recent value available on or before the "
    "cutoff date, and confirm the components of each formula refer to "
    "consistent periods. {correction_text}Correct any inconsistency you find "
    "and state the final [0,1] score for {firm_list}."
)

FILINGS_BODY = (
    "Today is {query_date} and the cutoff date is {cutoff_date}. Do not use "
    "information published after that day. Your role is a financial manager. "
    "I want to start investing in Spanish equities. Tell me which IBEX-35 "
    "assets you expect to outperform the stock market over the next month. "
    "Analyze in detail the documents attached and based on your analysis of "
    "these regulatory filings, you must calculate a score from 0 to 1 for "
    "{firm_list} given your stock prediction."
)


@dataclass(frozen=True)
class PromptTemplate:
    strategy: str
    body: str

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise TemplateError(f"unknown strategy {self.strategy!r}")
        has_clause = CUTOFF_CLAUSE in self.body
        if self.strategy in ("structured", "filings") and not has_clause:
            raise TemplateError(f"{self.strategy} template must state the information cutoff")
        if self.strategy == "naive" and has_clause:
            raise TemplateError("naive template must not state an information cutoff")
        for slot in _SLOT_RE.findall(self.body):
            if slot not in SLOTS:
                raise TemplateError(f"unknown slot {{{slot}}} in {self.strategy} template")

    def required_slots(self) -> frozenset:
        return frozenset(_SLOT_RE.findall(self.body))


def default_templates() -> dict[str, PromptTemplate]:
    return {
        "naive": PromptTemplate("naive", NAIVE_BODY),
        "structured": PromptTemplate("structured", STRUCTURED_BODY),
        "cot_followup": PromptTemplate("cot_followup", COT_BODY),
        "filings": PromptTemplate("filings", FILINGS_BODY),
    }


def format_firm(firm: Firm) -> str:
    return f"{firm.name} ({firm.ticker})"


def format_firm_list(firms: Sequence[Firm]) -> str:
    names = [format_firm(f) for f in firms]
    if len(names) <= 1:
        return "".join(names)
    return ", ".join(names[:-1]) + " and " + names[-1]


def render_prompt(
    template: PromptTemplate,
    params: Mapping[str, str],
    attachments: Sequence[str] = (),
) -> str:
    """Substitute slot values into the template body.

    All slots present in the body must be supplied; the filings strategy
    additionally requires at least one attachment reference up front so
    a document-free filings query can never be sent.
    """
    missing = sorted(template.required_slots() - set(params))
    if missing:
        raise TemplateError(f"missing slot values: {', '.join(missing)}")
    if template.strategy == "filings" and not attachments:
        raise AttachmentRequired("filings queries need at least one document")
    return _SLOT_RE.sub(lambda m: str(params[m.group(1)]), template.body)


# ------------------------------------------------------------- sessions

@dataclass(frozen=True)
class TranscriptEntry:
    prompt: str
    response: str
    timestamp: str  # ISO 8601
    attachments: tuple[str, ...] = ()
    retries: int = 0  # failed attempts before this response


@dataclass
class SessionRecord:
    session_id: str
    provider: str
    cycle_id: str
    strategy: str
    model_version: str
    transcript: list[TranscriptEntry] = field(default_factory=list)


@dataclass(frozen=True)
class ProviderProfile:
    """Static description of one provider endpoint.

    credential_env names the environment variable holding the API key;
    the key itself is read at send time and never stored anywhere.
    """

    provider: str
    endpoint: str = ""
    credential_env: str = ""
    attachments: bool = True
    browsing: bool = False
    version_label: str = "unversioned"

    def credential(self) -> str:
        value = os.environ.get(self.credential_env) if self.credential_env else None
        if not value:
            raise ConfigError(
                f"credential for {self.provider} expected in env var "
                f"{self.credential_env or '<unset>'}"
            )
        return value


class Provider(Protocol):
    profile: ProviderProfile

    def send(self, session: SessionRecord, prompt: str,
             attachments: tuple[str, ...]) -> str: ...


class DeterministicClock:
    """Monotonic fake clock so transcripts reproduce bit for bit."""

    def __init__(self, start: Optional[datetime] = None, step_seconds: int = 60):
        self._now = start or datetime(2025, 4, 1, 9, 0, tzinfo=timezone.utc)
        self._step = timedelta(seconds=step_seconds)

    def __call__(self) -> datetime:
        current = self._now
        self._now = current + self._step
        return current


DEFAULT_MAX_ATTEMPTS = 3


class Gateway:
    """Session registry plus retry/capability enforcement over adapters."""

    def __init__(
        self,
        providers: Mapping[str, Provider],
        clock: Optional[Callable[[], datetime]] = None,
        sleeper: Callable[[float], None] = time.sleep,
        max_attempts: int = DEFAULT_MAX_ATTEMPTS,
        backoff_base: float = 0.5,
    ):
        if max_attempts < 1:
            raise ConfigError("max_attempts must be at least 1")
        self._providers = dict(providers)
        self._clock = clock or (lambda: datetime.now(timezone.utc))
        self._sleeper = sleeper
        self._max_attempts = max_attempts
        self._backoff_base = backoff_base
        self._sessions: dict[tuple[str, str, str], SessionRecord] = {}

    def provider(self, provider_id: str) -> Provider:
        try:
            return self._providers[provider_id]
        except KeyError:
            raise ConfigError(f"no provider configured under {provider_id!r}") from None

    def sessions(self) -> tuple[SessionRecord, ...]:
        return tuple(self._sessions.values())

    def open_fresh_session(
        self, provider_id: str, cycle_id: str, strategy: str
    ) -> SessionRecord:
        if strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {strategy!r}")
        prov = self.provider(provider_id)
        if strategy == "cot_followup":
            # follow-ups continue the structured conversation
            base = self._sessions.get((provider_id, cycle_id, "structured"))
            if base is None:
                raise GatewayError(
                    f"no structured session to continue for {provider_id}/{cycle_id}"
                )
            return base
        key = (provider_id, cycle_id, strategy)
        if key in self._sessions:
            raise SessionExists(f"session already open for {key}")
        record = SessionRecord(
            session_id=f"{provider_id}:{cycle_id}:{strategy}",
            provider=provider_id,
            cycle_id=cycle_id,
            strategy=strategy,
            model_version=prov.profile.version_label,
        )
        self._sessions[key] = record
        return record

    def submit_query(
        self,
        session: SessionRecord,
        prompt: str,
        attachments: Sequence[str] = (),
    ) -> str:
        key = (session.provider, session.cycle_id, session.strategy)
        if self._sessions.get(key) is not session:
            raise GatewayError(f"session {session.session_id} is not open")
        prov = self.provider(session.provider)
        if attachments and not prov.profile.attachments:
            raise CapabilityError(
                f"{session.provider} does not support attachment processing"
            )
        sent = tuple(attachments)
        failures = 0
        while True:
            try:
                response = prov.send(session, prompt, sent)
                break
            except TransportError:
                failures += 1
                if failures >= self._max_attempts:
                    raise
                self._sleeper(self._backoff_base * 2 ** (failures - 1))
        session.transcript.append(TranscriptEntry(
            prompt=prompt,
            response=response,
            timestamp=self._clock().isoformat(),
            attachments=sent,
            retries=failures,
        ))
        return response


# ------------------------------------------------------------- adapters

class ScriptedProvider:
    """Canned responses in order; an Exception entry is raised instead.

    The workhorse for tests: echo fixtures, failure injection, call
    accounting.
    """

    def __init__(self, profile: ProviderProfile, responses: Sequence[object]):
        self.profile = profile
        self._responses = list(responses)
        self.calls: list[tuple[str, str, tuple[str, ...]]] = []

    def send(self, session, prompt, attachments):
        self.calls.append((session.session_id, prompt, attachments))
        if not self._responses:
            raise TransportError(f"{self.profile.provider}: script exhausted")
        item = self._responses.pop(0)
        if isinstance(item, Exception):
            raise item
        return str(item)


class HTTPChatProvider:
    """Minimal JSON chat adapter (OpenAI-style request schema).

    Reads the API key from the environment on every call; attachments
    travel base64-encoded when the profile allows them.
    """

    def __init__(self, profile: ProviderProfile, timeout: float = 120.0):
        if not profile.endpoint:
            raise ConfigError(f"{profile.provider}: endpoint required")
        self.profile = profile
        self._timeout = timeout

    def send(self, session, prompt, attachments):
        key = self.profile.credential()
        messages = []
        for entry in session.transcript:
            messages.append({"role": "user", "content": entry.prompt})
            messages.append({"role": "assistant", "content": entry.response})
        messages.append({"role": "user", "content": prompt})
        payload: dict = {"model": self.profile.version_label, "messages": messages}
        if attachments:
            docs = []
            for path in attachments:
                with open(path, "rb") as fh:
                    docs.append({
                        "name": os.path.basename(path),
                        "data": base64.b64encode(fh.read()).decode("ascii"),
                    })
            payload["attachments"] = docs
        try:
            resp = httpx.post(
                self.profile.endpoint,
                json=payload,
                headers={"Authorization": f"Bearer {key}"},
                timeout=self._timeout,
            )
        except httpx.HTTPError as err:
            raise TransportError(f"{self.profile.provider}: {err}") from err
        if resp.status_code >= 500 or resp.status_code == 429:
            raise TransportError(f"{self.profile.provider}: HTTP {resp.status_code}")
        if resp.status_code != 200:
            raise GatewayError(f"{self.profile.provider}: HTTP {resp.status_code}")
        body = resp.json()
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as err:
            raise GatewayError(f"{self.profile.provider}: malformed response body") from err


# ------------------------------------------------------------- mock

# response dispersion per strategy; tighter prompting, tighter scores
MOCK_NOISE = {
    "naive": 0.12,
    "structured": 0.06,
    "cot_followup": 0.035,
    "filings": 0.05,
}

_FORMULAS = {
    "pe_ratio": "price / trailing EPS",
    "pb_ratio": "price / book value per share",
    "eps_growth": "EPS yoy change",
    "revenue_growth": "revenue yoy change",
    "debt_equity": "total debt / shareholder equity",
    "roe": "net income / shareholder equity",
    "momentum": "6-month total return",
    "rsi": "14-day relative strength index",
    "industry_growth": "consensus industry growth rate",
    "sector_outlook": "sector outlook score",
    "news_sentiment": "1-month news tone score",
    "analyst_views": "consensus recommendation score",
}

_VARIABLE_LABELS = {
    "pe_ratio": "P/E ratio",
    "pb_ratio": "P/B ratio",
    "eps_growth": "EPS growth",
    "revenue_growth": "Revenue growth",
    "debt_equity": "Debt/Equity ratio",
    "roe": "ROE",
    "momentum": "Momentum",
    "rsi": "RSI",
    "industry_growth": "Industry growth rate",
    "sector_outlook": "Sector outlook",
    "news_sentiment": "News sentiment",
    "analyst_views": "Analyst recommendations",
}

_SOURCES = {
    "pe_ratio": "exchange market data",
    "pb_ratio": "exchange market data",
    "eps_growth": "quarterly report",
    "revenue_growth": "quarterly report",
    "debt_equity": "quarterly report",
    "roe": "quarterly report",
    "momentum": "exchange market data",
    "rsi": "exchange market data",
    "industry_growth": "sector research note",
    "sector_outlook": "sector research note",
    "news_sentiment": "news aggregator",
    "analyst_views": "broker consensus",
}

_TICKER_IN_NAME = re.compile(r"\(([A-Z0-9]{2,5})\)")


def _last_quarter_end(cutoff: date) -> date:
    quarter_ends = [date(cutoff.year - 1, 12, 31),
                    date(cutoff.year, 3, 31), date(cutoff.year, 6, 30),
                    date(cutoff.year, 9, 30), date(cutoff.year, 12, 31)]
    return max(d for d in quarter_ends if d <= cutoff)


class MockProvider:
    """Deterministic stand-in provider built on the synthetic fixtures.

    Unit scores come from the real cross-sectional normalization of the
    synthetic fundamentals, perturbed per (provider, strategy, cycle,
    firm, metric), then aggregated with the real engine. Responses are
    therefore reproducible bit for bit and internally consistent under
    the trace linter, while still differing by provider and strategy.
    """

    def __init__(
        self,
        profile: ProviderProfile,
        cutoffs: Mapping[str, date],
        framework: Optional[ScoringFramework] = None,
        firms: Optional[Sequence[Firm]] = None,
    ):
        self.profile = profile
        self._cutoffs = dict(cutoffs)
        self._framework = framework or default_framework()
        self._firms = tuple(firms) if firms is not None else universe_mod.UNIVERSE

    # -- deterministic scoring ------------------------------------------

    def _true_units(self, cycle_id: str) -> dict[str, dict[str, float]]:
        cutoff = self._cutoff(cycle_id)
        observations = []
        for ticker, metrics in synthetic.cross_section_metrics(
            cycle_id, [f.ticker for f in self._firms]
        ).items():
            for metric, value in metrics.items():
                observations.append(MetricObservation(
                    firm=ticker, metric=metric, raw_value=value,
                    as_of=cutoff, source="synthetic",
                ))
        return normalize_cross_section(observations, self._framework)

    def _unit_scores(self, cycle_id: str, strategy: str, ticker: str,
                     true_units: Mapping[str, float]) -> dict[str, float]:
        scale = MOCK_NOISE[strategy]
        units = {}
        for metric in sorted(true_units):
            rng = np.random.default_rng(synthetic.stable_seed(
                "mock-response", self.profile.provider, strategy,
                cycle_id, ticker, metric,
            ))
            value = true_units[metric] + scale * float(rng.standard_normal())
            units[metric] = round(min(1.0, max(0.0, value)), 4)
        return units

    def _composite(self, units: Mapping[str, float]) -> float:
        score = score_firm("mock", units, self._framework)
        return round(score.value, 6)

    def _cutoff(self, cycle_id: str) -> date:
        try:
            return self._cutoffs[cycle_id]
        except KeyError:
            raise ConfigError(f"mock provider has no cutoff for cycle {cycle_id!r}") from None

    # -- response rendering ---------------------------------------------

    def _score_lines(self, cycle_id: str, strategy: str) -> tuple[list[str], dict[str, dict[str, float]]]:
        true_units = self._true_units(cycle_id)
        lines = []
        all_units = {}
        for firm in self._firms:
            units = self._unit_scores(cycle_id, strategy, firm.ticker,
                                      true_units[firm.ticker])
            all_units[firm.ticker] = units
            lines.append(f"- {firm.ticker}: {self._composite(units):.6f}")
        return lines, all_units

    def _table_firm(self, cycle_id: str, strategy: str) -> Firm:
        idx = synthetic.stable_seed(
            "mock-table", self.profile.provider, strategy, cycle_id
        ) % len(self._firms)
        return self._firms[idx]

    def _reference_dates(self, metric: str, cutoff: date) -> str:
        quarter = _last_quarter_end(cutoff)
        quarter_label = f"Q{(quarter.month - 1) // 3 + 1} {quarter.year}"
        if metric == "pe_ratio":
            # price is a dated observation, earnings a fiscal period
            return f"{cutoff.isoformat()} and {quarter_label}"
        if _SOURCES[metric] == "quarterly report":
            return quarter_label
        if _SOURCES[metric] in ("sector research note", "broker consensus"):
            return f"{cutoff.year}-{cutoff.month:02d}"
        return cutoff.isoformat()

    def _table_block(self, firm: Firm, cycle_id: str, strategy: str,
                     units: Mapping[str, float]) -> str:
        cutoff = self._cutoff(cycle_id)
        raw = synthetic.firm_metrics(cycle_id, firm.ticker)
        full = strategy != "naive"
        lines = [f"Detailed calculation for {format_firm(firm)}:", ""]
        if full:
            lines.append("| Category | Variable | Formula | Raw Value | Reference Date | Source | Normalization Range | Score |")
            lines.append("|---|---|---|---|---|---|---|---|")
        else:
            lines.append("| Category | Variable | Formula | Raw Value | Score |")
            lines.append("|---|---|---|---|---|")
        for cat in self._framework.categories:
            for sub in cat.metrics:
                metric = sub.metric
                lo, hi = synthetic.METRIC_RANGES[metric]
                cells = [
                    cat.category.replace("_", " "),
                    _VARIABLE_LABELS[metric],
                    _FORMULAS[metric],
                    f"{raw[metric]:g}",
                ]
                if full:
                    cells += [
                        self._reference_dates(metric, cutoff),
                        _SOURCES[metric],
                        f"{lo:g} to {hi:g}",
                    ]
                cells.append(f"{units[metric]:.4f}")
                lines.append("| " + " | ".join(cells) + " |")
        return "\n".join(lines)

    def _listing_response(self, session: SessionRecord, strategy: str) -> str:
        lines, all_units = self._score_lines(session.cycle_id, strategy)
        table_firm = self._table_firm(session.cycle_id, strategy)
        header = [
            "Monthly outlook for the index members, scored 0 to 1:",
            "",
        ]
        table = self._table_block(
            table_firm, session.cycle_id, strategy, all_units[table_firm.ticker]
        )
        return "\n".join(header + lines + ["", table, ""])

    def _requested_tickers(self, prompt: str) -> list[str]:
        known = {f.ticker for f in self._firms}
        return [t for t in _TICKER_IN_NAME.findall(prompt) if t in known]

    def _cot_response(self, session: SessionRecord, prompt: str) -> str:
        tickers = self._requested_tickers(prompt)
        if not tickers:
            raise GatewayError("mock follow-up prompt names no known firm")
        true_units = self._true_units(session.cycle_id)
        lines = []
        for ticker in tickers:
            units = self._unit_scores(
                session.cycle_id, "cot_followup", ticker, true_units[ticker]
            )
            lines.append(
                f"Rechecked the arithmetic and input dates for {ticker}. "
                f"Final score for {ticker}: {self._composite(units):.6f}"
            )
        return "\n".join(lines)

    def _filings_response(self, session: SessionRecord, prompt: str,
                          attachments: tuple[str, ...]) -> str:
        if not attachments:
            raise AttachmentRequired("mock filings query received no documents")
        tickers = self._requested_tickers(prompt)
        if not tickers:
            raise GatewayError("mock filings prompt names no known firm")
        true_units = self._true_units(session.cycle_id)
        lines = [f"Reviewed {len(attachments)} attached filing(s)."]
        for ticker in tickers:
            units = self._unit_scores(
                session.cycle_id, "filings", ticker, true_units[ticker]
            )
            lines.append(f"- {ticker}: {self._composite(units):.6f}")
        return "\n".join(lines)

    def send(self, session, prompt, attachments):
        strategy = session.strategy
        if strategy == "structured" and prompt.startswith(COT_MARKER):
            strategy = "cot_followup"
        if strategy == "cot_followup":
            return self._cot_response(session, prompt)
        if strategy == "filings":
            return self._filings_response(session, prompt, attachments)
        return self._listing_response(session, strategy)


def default_mock_providers(
    cutoffs: Mapping[str, date],
    framework: Optional[ScoringFramework] = None,
) -> dict[str, Provider]:
    """The four-provider mock fleet; one lacks attachment support."""
    fleet = {}
    for name, supports_attachments, label in (
        ("chatgpt", True, "mock-chatgpt-1"),
        ("deepseek", True, "mock-deepseek-1"),
        ("gemini", False, "mock-gemini-1"),
        ("perplexity", True, "undisclosed-routed"),
    ):
        profile = ProviderProfile(
            provider=name,
            attachments=supports_attachments,
            version_label=label,
        )
        fleet[name] = MockProvider(profile, cutoffs, framework=framework)
    return fleet
