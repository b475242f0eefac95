"""Human review console: queue, corrections, approvals, audit trail.

The service wraps one gateway and one ledger. Items enter the queue from
a structured scoring pass; a reviewer works through them worst-first,
sends correction follow-ups into the original conversation, and signs
off each firm's final score. Approved scores accumulate into the
cycle's supervised signal set, so no supervised signal can exist
without a matching approval event on the ledger.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Iterable, Mapping, Optional, Sequence

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .backtest import SignalSet
from .errors import (
    ConfigError,
    GatewayError,
    InvalidScore,
    ItemLocked,
    NotFound,
)
from .gateway import Gateway, format_firm, default_templates, render_prompt
from .marketdata import MonthlyCycle
from .parsing import extract_scores, to_trace
from .scoring import ScoringFramework, default_framework
from .store import LedgerState, RunLedger, trace_from_payload, trace_to_payload
from .universe import by_ticker
from .validation import (
    FailureCode,
    ReasoningTrace,
    Severity,
    ValidationConfig,
    ValidationFinding,
    run_suite,
)

PENDING = "pending"
CORRECTED = "corrected"
APPROVED = "approved"

CORRECTION_PREAMBLE = "Reviewer note: "

_SEVERITY_RANK = {Severity.ERROR: 0, Severity.WARNING: 1}
_CLEAN_RANK = 2


@dataclass
class ReviewItem:
    item_id: str
    cycle_id: str
    provider: str
    strategy: str
    firm: str
    trace: ReasoningTrace
    findings: tuple[ValidationFinding, ...]
    status: str = PENDING
    final_score: Optional[float] = None
    corrections: list["CorrectionEvent"] = field(default_factory=list)

    @property
    def model_score(self) -> Optional[float]:
        return self.trace.reported_composite

    def worst_rank(self) -> int:
        if not self.findings:
            return _CLEAN_RANK
        return min(_SEVERITY_RANK[f.severity] for f in self.findings)


@dataclass(frozen=True)
class CorrectionEvent:
    item_id: str
    note: str
    prompt: str
    response_ref: str
    timestamp: str


def _default_clock() -> datetime:
    return datetime.now(timezone.utc)


class ReviewService:
    """Ledger-backed review state over one gateway."""

    def __init__(
        self,
        gateway: Gateway,
        calendar: Sequence[MonthlyCycle],
        framework: Optional[ScoringFramework] = None,
        ledger: Optional[RunLedger] = None,
        clock: Callable[[], datetime] = _default_clock,
        tolerance: float = 0.005,
        cluster_min: int = 4,
        skew_months: int = 6,
    ):
        self._gateway = gateway
        self._calendar = {c.cycle_id: c for c in calendar}
        self._framework = framework or default_framework()
        self._ledger = ledger
        self._clock = clock
        self._tolerance = tolerance
        self._cluster_min = cluster_min
        self._skew_months = skew_months
        self._items: dict[str, ReviewItem] = {}
        self._cycles: dict[str, list[str]] = {}
        self._approved: dict[tuple[str, str], dict[str, float]] = {}
        self._seeded_transcripts: dict[str, list[dict]] = {}

    # -- intake ----------------------------------------------------------

    def register_run(
        self,
        cycle_id: str,
        provider: str,
        traces: Iterable[ReasoningTrace],
        findings: Iterable[ValidationFinding],
        strategy: str = "structured",
    ) -> list[ReviewItem]:
        if cycle_id not in self._calendar:
            raise ConfigError(f"cycle {cycle_id} is not on the review calendar")
        by_firm: dict[str, list[ValidationFinding]] = {}
        for finding in findings:
            by_firm.setdefault(finding.firm, []).append(finding)
        created = []
        for trace in traces:
            item_id = f"{cycle_id}:{provider}:{trace.firm}"
            if item_id in self._items:
                raise ConfigError(f"review item {item_id} already registered")
            item = ReviewItem(
                item_id=item_id,
                cycle_id=cycle_id,
                provider=provider,
                strategy=strategy,
                firm=trace.firm,
                trace=trace,
                findings=tuple(by_firm.get(trace.firm, ())),
            )
            self._items[item_id] = item
            self._cycles.setdefault(cycle_id, []).append(item_id)
            created.append(item)
        return created

    def seed_transcript(self, session_id: str, entries: Sequence[Mapping]) -> None:
        """Conversation history recovered from a replayed ledger."""
        self._seeded_transcripts[session_id] = [dict(e) for e in entries]

    # -- queries ---------------------------------------------------------

    def cycles(self) -> list[str]:
        return sorted(self._cycles)

    def get_item(self, item_id: str) -> ReviewItem:
        try:
            return self._items[item_id]
        except KeyError:
            raise NotFound(f"no review item {item_id}") from None

    def list_items(self, cycle_id: str) -> list[ReviewItem]:
        """Worst finding first, clean items last, firms alphabetical."""
        if cycle_id not in self._cycles:
            raise NotFound(f"no review items for cycle {cycle_id}")
        items = [self._items[i] for i in self._cycles[cycle_id]]
        return sorted(items, key=lambda it: (it.worst_rank(), it.firm))

    def transcript(self, item_id: str) -> list[dict]:
        item = self.get_item(item_id)
        session_id = f"{item.provider}:{item.cycle_id}:{item.strategy}"
        entries = [dict(e) for e in self._seeded_transcripts.get(session_id, ())]
        for session in self._gateway.sessions():
            if session.session_id == session_id:
                entries += [{
                    "prompt": e.prompt,
                    "response": e.response,
                    "timestamp": e.timestamp,
                    "attachments": list(e.attachments),
                    "retries": e.retries,
                } for e in session.transcript]
        return entries

    # -- mutations -------------------------------------------------------

    def _conversation(self, item: ReviewItem):
        try:
            return self._gateway.open_fresh_session(
                item.provider, item.cycle_id, "cot_followup")
        except GatewayError:
            # process restart: reopen the conversation before following up
            self._gateway.open_fresh_session(
                item.provider, item.cycle_id, "structured")
            return self._gateway.open_fresh_session(
                item.provider, item.cycle_id, "cot_followup")

    def _validation_config(self, cycle_id: str) -> ValidationConfig:
        cycle = self._calendar[cycle_id]
        return ValidationConfig(
            tolerance=self._tolerance,
            cluster_min=self._cluster_min,
            max_period_skew_months=self._skew_months,
            membership=self._framework,
            cutoffs={cycle_id: cycle.cutoff},
        )

    def submit_correction(self, item_id: str, note: str) -> CorrectionEvent:
        item = self.get_item(item_id)
        if item.status == APPROVED:
            raise ItemLocked(f"{item_id} is approved; corrections are closed")
        session = self._conversation(item)
        text = note.strip()
        correction_text = f"{CORRECTION_PREAMBLE}{text} " if text else ""
        firm = by_ticker()[item.firm]
        prompt = render_prompt(default_templates()["cot_followup"], {
            "firm_list": format_firm(firm),
            "correction_text": correction_text,
        })
        timestamp = self._clock().isoformat()
        # the audit record lands before the provider sees the prompt
        if self._ledger is not None:
            self._ledger.append("correction", {
                "item_id": item_id,
                "cycle_id": item.cycle_id,
                "firm": item.firm,
                "note": note,
                "prompt": prompt,
                "timestamp": timestamp,
            })
        response = self._gateway.submit_query(session, prompt)
        if self._ledger is not None:
            entry = session.transcript[-1]
            self._ledger.append("query", {
                "session_id": session.session_id,
                "prompt": entry.prompt,
                "response": entry.response,
                "timestamp": entry.timestamp,
                "attachments": list(entry.attachments),
                "retries": entry.retries,
            })
        parsed = extract_scores(response, firms=[firm])
        traces = to_trace(parsed, session_id=session.session_id,
                          cycle_id=item.cycle_id, framework=self._framework)
        if not traces:
            raise GatewayError(f"correction response carries no score for {item.firm}")
        item.trace = traces[0]
        item.findings = tuple(run_suite(
            [item.trace], config=self._validation_config(item.cycle_id)))
        item.status = CORRECTED
        if self._ledger is not None:
            self._ledger.append("trace", {
                "cycle_id": item.cycle_id,
                "provider": item.provider,
                "strategy": item.strategy,
                "trace": trace_to_payload(item.trace),
            })
            for finding in item.findings:
                self._ledger.append("finding", {
                    "cycle_id": item.cycle_id,
                    "provider": item.provider,
                    "strategy": item.strategy,
                    "firm": finding.firm,
                    "code": finding.code.value,
                    "severity": finding.severity.value,
                    "evidence": finding.evidence,
                    "hint": finding.hint,
                })
        event = CorrectionEvent(
            item_id=item_id,
            note=note,
            prompt=prompt,
            response_ref=f"{session.session_id}#{len(session.transcript) - 1}",
            timestamp=timestamp,
        )
        item.corrections.append(event)
        return event

    def approve(self, item_id: str, final_score: Optional[float] = None) -> ReviewItem:
        item = self.get_item(item_id)
        if item.status == APPROVED:
            raise ItemLocked(f"{item_id} is already approved")
        if final_score is None:
            final_score = item.model_score
        if not isinstance(final_score, (int, float)) or isinstance(final_score, bool):
            raise InvalidScore(f"final score {final_score!r} is not a number")
        final_score = float(final_score)
        if not 0.0 <= final_score <= 1.0:
            raise InvalidScore(f"final score {final_score} outside [0, 1]")

        timestamp = self._clock().isoformat()
        if self._ledger is not None:
            self._ledger.append("approval", {
                "item_id": item_id,
                "cycle_id": item.cycle_id,
                "firm": item.firm,
                "final_score": final_score,
                "model_score": item.model_score,
                "timestamp": timestamp,
            })
        item.status = APPROVED
        item.final_score = final_score
        key = (item.cycle_id, item.provider)
        self._approved.setdefault(key, {})[item.firm] = final_score
        if self._ledger is not None:
            cycle = self._calendar[item.cycle_id]
            scores = self._approved[key]
            self._ledger.append("signals", {
                "cycle_id": item.cycle_id,
                "provider": item.provider,
                "strategy": "cot",
                "scores": {t: scores[t] for t in sorted(scores)},
                "signal_date": cycle.first_day.isoformat(),
            })
        return item

    def cot_signals(self, cycle_id: str, provider: str) -> SignalSet:
        """The supervised signal set: approved scores only."""
        scores = self._approved.get((cycle_id, provider))
        if not scores:
            raise NotFound(f"no approved scores for {provider}/{cycle_id}")
        return SignalSet(
            cycle_id=cycle_id,
            provider=provider,
            strategy="cot",
            scores=dict(scores),
            signal_date=self._calendar[cycle_id].first_day,
        )


def service_from_state(
    state: LedgerState,
    gateway: Gateway,
    calendar: Sequence[MonthlyCycle],
    framework: Optional[ScoringFramework] = None,
    ledger: Optional[RunLedger] = None,
    clock: Callable[[], datetime] = _default_clock,
) -> ReviewService:
    """Rebuild the review queue from a replayed ledger.

    Only structured-pass traces enter the queue; their findings and
    conversation history ride along so the console can resume mid-review.
    """
    framework = framework or default_framework()
    service = ReviewService(gateway, calendar, framework=framework,
                            ledger=ledger, clock=clock)
    runs: dict[tuple[str, str], dict[str, ReasoningTrace]] = {}
    for (cycle_id, provider, strategy, firm), payload in state.traces.items():
        if strategy != "structured":
            continue
        runs.setdefault((cycle_id, provider), {})[firm] = trace_from_payload(
            payload, framework=framework)
    findings: dict[tuple[str, str], list[ValidationFinding]] = {}
    for event in state.findings:
        if event["strategy"] != "structured":
            continue
        findings.setdefault((event["cycle_id"], event["provider"]), []).append(
            ValidationFinding(
                code=FailureCode(event["code"]),
                severity=Severity(event["severity"]),
                firm=event["firm"],
                cycle_id=event["cycle_id"],
                evidence=event["evidence"],
                hint=event["hint"],
            ))
    for (cycle_id, provider), traces in sorted(runs.items()):
        service.register_run(
            cycle_id, provider,
            [traces[f] for f in sorted(traces)],
            findings.get((cycle_id, provider), ()),
        )
    approved: dict[str, dict] = {}
    for event in state.approvals:
        approved[event["item_id"]] = event
    for item_id, event in approved.items():
        try:
            item = service.get_item(item_id)
        except NotFound:
            continue
        item.status = APPROVED
        item.final_score = event["final_score"]
        service._approved.setdefault(
            (item.cycle_id, item.provider), {})[item.firm] = event["final_score"]
    for session_id, entries in state.transcripts.items():
        service.seed_transcript(session_id, entries)
    return service


# ----------------------------------------------------------------- HTTP

def item_payload(item: ReviewItem) -> dict:
    return {
        "item_id": item.item_id,
        "cycle_id": item.cycle_id,
        "firm": item.firm,
        "provider": item.provider,
        "strategy": item.strategy,
        "status": item.status,
        "model_score": item.model_score,
        "final_score": item.final_score,
        "findings": [
            {
                "code": f.code.value,
                "severity": f.severity.value,
                "evidence": f.evidence,
                "hint": f.hint,
            }
            for f in item.findings
        ],
    }


def create_app(service: ReviewService) -> FastAPI:
    app = FastAPI(title="score review console", docs_url=None, redoc_url=None)

    def error(status: int, message: str) -> JSONResponse:
        return JSONResponse({"error": message}, status_code=status)

    async def body_of(request: Request) -> Optional[dict]:
        raw = await request.body()
        if not raw:
            return {}
        try:
            parsed = json.loads(raw)
        except ValueError:
            return None
        return parsed if isinstance(parsed, dict) else None

    @app.get("/cycles/{cycle_id}/items")
    def list_items(cycle_id: str):
        try:
            items = service.list_items(cycle_id)
        except NotFound as err:
            return error(404, str(err))
        return {"cycle_id": cycle_id, "items": [item_payload(i) for i in items]}

    @app.get("/items/{item_id}")
    def get_item(item_id: str):
        try:
            return item_payload(service.get_item(item_id))
        except NotFound as err:
            return error(404, str(err))

    @app.post("/items/{item_id}/corrections")
    async def post_correction(item_id: str, request: Request):
        payload = await body_of(request)
        if payload is None or not isinstance(payload.get("note"), str):
            return error(400, "request body must carry a string field 'note'")
        try:
            event = service.submit_correction(item_id, payload["note"])
        except NotFound as err:
            return error(404, str(err))
        except ItemLocked as err:
            return error(409, str(err))
        item = service.get_item(item_id)
        return {
            "item_id": item_id,
            "note": event.note,
            "prompt": event.prompt,
            "response_ref": event.response_ref,
            "timestamp": event.timestamp,
            "item": item_payload(item),
        }

    @app.post("/items/{item_id}/approve")
    async def post_approve(item_id: str, request: Request):
        payload = await body_of(request)
        if payload is None:
            return error(400, "request body must be an object")
        final_score = payload.get("final_score")
        try:
            item = service.approve(item_id, final_score)
        except NotFound as err:
            return error(404, str(err))
        except ItemLocked as err:
            return error(409, str(err))
        except InvalidScore as err:
            return error(400, str(err))
        return item_payload(item)

    @app.get("/items/{item_id}/transcript")
    def get_transcript(item_id: str):
        try:
            entries = service.transcript(item_id)
        except NotFound as err:
            return error(404, str(err))
        return {"item_id": item_id, "transcript": entries}

    return app
