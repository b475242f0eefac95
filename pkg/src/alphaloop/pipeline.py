"""Monthly run orchestration.

Glues the layers together for one provider/strategy/cycle: render the
prompt, query through the gateway, parse the response, lint the traces,
and emit a dated SignalSet. On top of that sit the cross-cycle helpers
that turn signal sets plus market data into the outcome series the
report grid consumes, and the ledger replay that rebuilds a report
byte-for-byte from the event log.
"""
from __future__ import annotations

from dataclasses import dataclass
from datetime import date
from typing import Mapping, Optional, Sequence

from . import synthetic
from .backtest import SignalSet, run_cycles
from .errors import ConfigError, GatewayError, UnparseableResponse
from .gateway import (
    Gateway,
    PromptTemplate,
    default_templates,
    format_firm,
    format_firm_list,
    render_prompt,
)
from .marketdata import MarketDataTable, MonthlyCycle
from .performance import (
    PerformanceReport,
    StrategyOutcome,
    Threshold,
    blend_with_filings,
    build_report,
    classify,
    report_to_text,
)
from .parsing import extract_scores, to_trace
from .scoring import ScoringFramework, default_framework
from .store import RunLedger, replay, trace_to_payload
from .universe import UNIVERSE, Firm
from .validation import ReasoningTrace, ValidationConfig, ValidationFinding, run_suite

CORE_STRATEGIES = ("naive", "structured", "cot")
HIGHLIGHT_COUNT = 3


@dataclass(frozen=True)
class CycleRun:
    """Everything one provider/strategy produced for one cycle."""

    cycle_id: str
    provider: str
    strategy: str
    signals: SignalSet
    traces: tuple[ReasoningTrace, ...]
    findings: tuple[ValidationFinding, ...]
    session_id: str


def highlight_firms(cycle_id: str, firms: Sequence[Firm]) -> list[Firm]:
    """The firms named explicitly in the prompt, rotated per cycle."""
    start = synthetic.stable_seed("highlight", cycle_id) % len(firms)
    return [firms[(start + i) % len(firms)] for i in range(HIGHLIGHT_COUNT)]


def filings_attachments(cycle_id: str, ticker: str) -> tuple[str, ...]:
    """Deterministic mock document references; roughly a third of the
    firm-months have no usable filing, exercising the blend fallback."""
    if synthetic.stable_seed("filings-available", cycle_id, ticker) % 3 == 0:
        return ()
    return (f"mock://filings/{cycle_id}/{ticker}.pdf",)


def _firm_score(parsed, ticker: str) -> float:
    if ticker not in parsed.scores:
        raise UnparseableResponse(f"response carries no score for {ticker}")
    return parsed.scores[ticker]


class CycleRunner:
    """Executes strategy passes against one gateway instance."""

    def __init__(
        self,
        gateway: Gateway,
        framework: Optional[ScoringFramework] = None,
        templates: Optional[Mapping[str, PromptTemplate]] = None,
        firms: Sequence[Firm] = UNIVERSE,
        ledger: Optional[RunLedger] = None,
        tolerance: float = 0.005,
        cluster_min: int = 4,
        skew_months: int = 6,
    ):
        self._gateway = gateway
        self._framework = framework or default_framework()
        self._templates = dict(templates) if templates else default_templates()
        self._firms = tuple(firms)
        self._ledger = ledger
        self._tolerance = tolerance
        self._cluster_min = cluster_min
        self._skew_months = skew_months

    # -- ledger plumbing -------------------------------------------------

    def _record_session(self, session) -> None:
        if self._ledger is None:
            return
        self._ledger.append("session_opened", {
            "session_id": session.session_id,
            "provider": session.provider,
            "cycle_id": session.cycle_id,
            "strategy": session.strategy,
            "model_version": session.model_version,
        })

    def _record_query(self, session) -> None:
        if self._ledger is None:
            return
        entry = session.transcript[-1]
        self._ledger.append("query", {
            "session_id": session.session_id,
            "prompt": entry.prompt,
            "response": entry.response,
            "timestamp": entry.timestamp,
            "attachments": list(entry.attachments),
            "retries": entry.retries,
        })

    def _record_run(self, run: CycleRun) -> None:
        if self._ledger is None:
            return
        for trace in run.traces:
            self._ledger.append("trace", {
                "cycle_id": run.cycle_id,
                "provider": run.provider,
                "strategy": run.strategy,
                "trace": trace_to_payload(trace),
            })
        for finding in run.findings:
            self._ledger.append("finding", {
                "cycle_id": run.cycle_id,
                "provider": run.provider,
                "strategy": run.strategy,
                "firm": finding.firm,
                "code": finding.code.value,
                "severity": finding.severity.value,
                "evidence": finding.evidence,
                "hint": finding.hint,
            })
        self._ledger.append("signals", {
            "cycle_id": run.cycle_id,
            "provider": run.provider,
            "strategy": run.strategy,
            "scores": {t: run.signals.scores[t] for t in sorted(run.signals.scores)},
            "signal_date": run.signals.signal_date.isoformat(),
        })

    # -- strategy passes -------------------------------------------------

    def _date_params(self, cycle: MonthlyCycle) -> dict[str, str]:
        return {
            "query_date": cycle.first_day.isoformat(),
            "cutoff_date": cycle.cutoff.isoformat(),
        }

    def _lint(self, cycle: MonthlyCycle, traces: Sequence[ReasoningTrace]):
        config = ValidationConfig(
            tolerance=self._tolerance,
            cluster_min=self._cluster_min,
            max_period_skew_months=self._skew_months,
            membership=self._framework,
            cutoffs={cycle.cycle_id: cycle.cutoff},
        )
        return tuple(run_suite(list(traces), config=config))

    def _listing_pass(self, provider_id: str, cycle: MonthlyCycle,
                      strategy: str) -> CycleRun:
        session = self._gateway.open_fresh_session(provider_id, cycle.cycle_id, strategy)
        self._record_session(session)
        params = dict(self._date_params(cycle))
        params["firm_list"] = format_firm_list(highlight_firms(cycle.cycle_id, self._firms))
        text = self._gateway.submit_query(
            session, render_prompt(self._templates[strategy], params)
        )
        self._record_query(session)
        parsed = extract_scores(text, firms=self._firms)
        traces = to_trace(parsed, session_id=session.session_id,
                          cycle_id=cycle.cycle_id, framework=self._framework)
        findings = self._lint(cycle, traces)
        signals = SignalSet(
            cycle_id=cycle.cycle_id, provider=provider_id, strategy=strategy,
            scores=dict(parsed.scores), signal_date=cycle.first_day,
        )
        run = CycleRun(cycle.cycle_id, provider_id, strategy, signals,
                       tuple(traces), findings, session.session_id)
        self._record_run(run)
        return run

    def _cot_pass(self, provider_id: str, cycle: MonthlyCycle) -> CycleRun:
        try:
            session = self._gateway.open_fresh_session(
                provider_id, cycle.cycle_id, "cot_followup")
        except GatewayError:
            # no structured conversation yet to follow up on; run one
            self._listing_pass(provider_id, cycle, "structured")
            session = self._gateway.open_fresh_session(
                provider_id, cycle.cycle_id, "cot_followup")
        template = self._templates["cot_followup"]
        scores: dict[str, float] = {}
        all_traces: list[ReasoningTrace] = []
        for firm in sorted(self._firms, key=lambda f: f.ticker):
            prompt = render_prompt(template, {
                "firm_list": format_firm(firm), "correction_text": "",
            })
            text = self._gateway.submit_query(session, prompt)
            self._record_query(session)
            parsed = extract_scores(text, firms=[firm])
            all_traces.extend(to_trace(parsed, session_id=session.session_id,
                                       cycle_id=cycle.cycle_id,
                                       framework=self._framework))
            scores[firm.ticker] = _firm_score(parsed, firm.ticker)
        findings = self._lint(cycle, all_traces)
        signals = SignalSet(
            cycle_id=cycle.cycle_id, provider=provider_id, strategy="cot",
            scores=scores, signal_date=cycle.first_day,
        )
        run = CycleRun(cycle.cycle_id, provider_id, "cot", signals,
                       tuple(all_traces), findings, session.session_id)
        self._record_run(run)
        return run

    def _filings_pass(self, provider_id: str, cycle: MonthlyCycle,
                      base: Optional[CycleRun]) -> CycleRun:
        if base is None:
            base = self._listing_pass(provider_id, cycle, "structured")
        session = self._gateway.open_fresh_session(
            provider_id, cycle.cycle_id, "filings")
        self._record_session(session)
        template = self._templates["filings"]
        blended: dict[str, float] = {}
        all_traces: list[ReasoningTrace] = []
        for firm in sorted(self._firms, key=lambda f: f.ticker):
            base_score = base.signals.scores[firm.ticker]
            docs = filings_attachments(cycle.cycle_id, firm.ticker)
            if docs:
                params = dict(self._date_params(cycle))
                params["firm_list"] = format_firm(firm)
                prompt = render_prompt(template, params, attachments=docs)
                text = self._gateway.submit_query(session, prompt, attachments=docs)
                self._record_query(session)
                parsed = extract_scores(text, firms=[firm])
                all_traces.extend(to_trace(parsed, session_id=session.session_id,
                                           cycle_id=cycle.cycle_id,
                                           framework=self._framework))
                filings_score = _firm_score(parsed, firm.ticker)
            else:
                filings_score = None
            blended[firm.ticker] = blend_with_filings(base_score, filings_score).value
        findings = self._lint(cycle, all_traces)
        signals = SignalSet(
            cycle_id=cycle.cycle_id, provider=provider_id, strategy="filings",
            scores=blended, signal_date=cycle.first_day,
        )
        run = CycleRun(cycle.cycle_id, provider_id, "filings", signals,
                       tuple(all_traces), findings, session.session_id)
        self._record_run(run)
        return run

    def score_cycle(self, provider_id: str, cycle: MonthlyCycle,
                    strategy: str,
                    structured_base: Optional[CycleRun] = None) -> CycleRun:
        """One strategy pass; cot and filings build on structured."""
        if strategy in ("naive", "structured"):
            return self._listing_pass(provider_id, cycle, strategy)
        if strategy == "cot":
            return self._cot_pass(provider_id, cycle)
        if strategy == "filings":
            return self._filings_pass(provider_id, cycle, structured_base)
        raise ConfigError(f"unknown strategy {strategy!r}")


# --------------------------------------------------------- outcome series

def realized_returns(table: MarketDataTable, cycle: MonthlyCycle,
                     tickers: Sequence[str]) -> dict[str, float]:
    return {
        t: table.holding_return(t, cycle.first_day, cycle.last_day)
        for t in tickers
    }


def outcome_from_signals(
    provider: str,
    strategy: str,
    signal_sets: Mapping[str, SignalSet],
    table: MarketDataTable,
    calendar: Sequence[MonthlyCycle],
    positions: int = 5,
    threshold: Threshold = 0.5,
) -> StrategyOutcome:
    """Fold dated signal sets and market data into the per-cycle series
    (alphas plus confusion counts) that report cells are built from."""
    series = run_cycles(signal_sets, table, calendar, k=positions)
    by_cycle = {c.cycle_id: c for c in calendar}
    counts = []
    for cycle_id in series.cycle_ids():
        cycle = by_cycle[cycle_id]
        signals = signal_sets[cycle_id]
        realized = realized_returns(table, cycle, sorted(signals.scores))
        counts.append(classify(
            signals.scores, realized,
            table.benchmark_return(cycle.first_day, cycle.last_day),
            threshold=threshold,
        ))
    return StrategyOutcome(
        provider=provider,
        strategy=strategy,
        alphas=tuple(p - b for p, b in zip(series.portfolio_returns(),
                                           series.benchmark_returns())),
        cycle_ids=tuple(series.cycle_ids()),
        monthly_counts=tuple(counts),
    )


def run_matrix(
    runner: CycleRunner,
    calendar: Sequence[MonthlyCycle],
    providers: Sequence[str],
    strategies: Sequence[str] = CORE_STRATEGIES,
) -> dict[tuple[str, str], dict[str, SignalSet]]:
    """Score every provider/strategy/cycle; returns signal sets keyed by
    (provider, strategy) then cycle id."""
    signals: dict[tuple[str, str], dict[str, SignalSet]] = {}
    for provider_id in providers:
        for cycle in calendar:
            structured_base: Optional[CycleRun] = None
            for strategy in strategies:
                run = runner.score_cycle(provider_id, cycle, strategy,
                                         structured_base=structured_base)
                if strategy == "structured":
                    structured_base = run
                signals.setdefault((provider_id, strategy), {})[cycle.cycle_id] = run.signals
    return signals


def report_from_signals(
    signals: Mapping[tuple[str, str], Mapping[str, SignalSet]],
    table: MarketDataTable,
    calendar: Sequence[MonthlyCycle],
    providers: Sequence[str],
    strategies: Sequence[str] = CORE_STRATEGIES,
    positions: int = 5,
    threshold: Threshold = 0.5,
    exclude_providers: Sequence[str] = (),
    subperiods: bool = True,
) -> PerformanceReport:
    outcomes = {
        (p, s): outcome_from_signals(p, s, signals[(p, s)], table, calendar,
                                     positions=positions, threshold=threshold)
        for p in providers for s in strategies
    }
    return build_report(outcomes, providers, strategies,
                        exclude_providers=exclude_providers,
                        subperiods=subperiods)


def signals_from_ledger_state(state) -> dict[tuple[str, str], dict[str, SignalSet]]:
    """Rebuild SignalSets from replayed ledger events."""
    out: dict[tuple[str, str], dict[str, SignalSet]] = {}
    for (cycle_id, provider, strategy), event in state.signals.items():
        out.setdefault((provider, strategy), {})[cycle_id] = SignalSet(
            cycle_id=cycle_id,
            provider=provider,
            strategy=strategy,
            scores=dict(event["scores"]),
            signal_date=date.fromisoformat(event["signal_date"]),
        )
    return out


def report_text_from_ledger(
    ledger_path,
    table: MarketDataTable,
    calendar: Sequence[MonthlyCycle],
    providers: Sequence[str],
    strategies: Sequence[str] = CORE_STRATEGIES,
    positions: int = 5,
    threshold: Threshold = 0.5,
) -> str:
    """Replay the event log and render the report it implies."""
    signals = signals_from_ledger_state(replay(ledger_path))
    report = report_from_signals(signals, table, calendar, providers,
                                 strategies, positions=positions,
                                 threshold=threshold)
    return report_to_text(report)
