"""Run persistence and configuration.

The ledger is an append-only JSONL file: one schema-checked event per
line, written with sorted keys so identical runs produce identical
bytes. Replay folds the events back into the derived state (sessions,
traces, signals, review events) that downstream stages consume, which
makes every published number reconstructible from the log alone.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Mapping, Optional, Sequence

import yaml

from .errors import ConfigError, LedgerError
from .gateway import ProviderProfile
from .scoring import ScoringFramework, default_framework
from .universe import tickers as universe_tickers
from .validation import PeriodRef, ReasoningTrace, SubScoreRecord

log = logging.getLogger(__name__)

# required payload fields per event type; the registry is closed
EVENT_SCHEMAS: dict[str, frozenset] = {
    "session_opened": frozenset(
        {"session_id", "provider", "cycle_id", "strategy", "model_version"}),
    "query": frozenset(
        {"session_id", "prompt", "response", "timestamp", "attachments", "retries"}),
    "trace": frozenset({"cycle_id", "provider", "strategy", "trace"}),
    "finding": frozenset(
        {"cycle_id", "provider", "strategy", "firm", "code", "severity",
         "evidence", "hint"}),
    "signals": frozenset(
        {"cycle_id", "provider", "strategy", "scores", "signal_date"}),
    "correction": frozenset(
        {"item_id", "cycle_id", "firm", "note", "prompt", "timestamp"}),
    "approval": frozenset(
        {"item_id", "cycle_id", "firm", "final_score", "model_score", "timestamp"}),
    "portfolio": frozenset(
        {"cycle_id", "provider", "strategy", "long", "short",
         "portfolio_return", "benchmark_return"}),
}


def trace_to_payload(trace: ReasoningTrace) -> dict:
    """JSON-safe snapshot of a trace; framework omitted (config-owned)."""
    return {
        "firm": trace.firm,
        "session_id": trace.session_id,
        "cycle_id": trace.cycle_id,
        "reported_composite": trace.reported_composite,
        "reported_categories": dict(sorted(trace.reported_categories.items())),
        "reported_sub_scores": {
            metric: {
                "unit_score": rec.unit_score,
                "raw_value": rec.raw_value,
                "refs": [
                    {"end": r.end.isoformat(), "precision": r.precision, "text": r.text}
                    for r in rec.refs
                ],
                "source": rec.source,
                "ref_text": rec.ref_text,
            }
            for metric, rec in sorted(trace.reported_sub_scores.items())
        },
        "free_text": trace.free_text,
        "computed_composite": trace.computed_composite,
        "missing_metrics": sorted(trace.missing_metrics),
    }


def trace_from_payload(
    payload: Mapping, framework: Optional[ScoringFramework] = None
) -> ReasoningTrace:
    subs = {}
    for metric, rec in payload.get("reported_sub_scores", {}).items():
        subs[metric] = SubScoreRecord(
            unit_score=rec.get("unit_score"),
            raw_value=rec.get("raw_value"),
            refs=tuple(
                PeriodRef(end=date.fromisoformat(r["end"]),
                          precision=r["precision"], text=r["text"])
                for r in rec.get("refs", ())
            ),
            source=rec.get("source"),
            ref_text=rec.get("ref_text"),
        )
    return ReasoningTrace(
        firm=payload["firm"],
        session_id=payload["session_id"],
        cycle_id=payload["cycle_id"],
        reported_composite=payload.get("reported_composite"),
        reported_categories=dict(payload.get("reported_categories", {})),
        reported_sub_scores=subs,
        weights_used=framework if subs else None,
        free_text=payload.get("free_text", ""),
        computed_composite=payload.get("computed_composite"),
        missing_metrics=frozenset(payload.get("missing_metrics", ())),
    )


class RunLedger:
    """Append-only JSONL event log; single writer, replayable."""

    def __init__(self, path):
        self._path = Path(path)
        self._seq = 0
        if self._path.exists():
            for event in iter_events(self._path):
                self._seq = max(self._seq, event["seq"])
        else:
            self._path.parent.mkdir(parents=True, exist_ok=True)

    @property
    def path(self) -> Path:
        return self._path

    def append(self, event_type: str, payload: Mapping) -> int:
        """Validate against the schema registry and append one line."""
        schema = EVENT_SCHEMAS.get(event_type)
        if schema is None:
            raise LedgerError(f"unknown event type {event_type!r}")
        keys = set(payload)
        missing = schema - keys
        extra = keys - schema
        if missing or extra:
            raise LedgerError(
                f"{event_type}: missing fields {sorted(missing)}, "
                f"unexpected fields {sorted(extra)}"
            )
        self._seq += 1
        record = {"seq": self._seq, "event": event_type, **payload}
        try:
            line = json.dumps(record, sort_keys=True, separators=(",", ":"),
                              allow_nan=False)
        except (TypeError, ValueError) as err:
            self._seq -= 1
            raise LedgerError(f"{event_type}: payload not serializable: {err}") from err
        with open(self._path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
        return self._seq


def persist_event(ledger: RunLedger, event_type: str, payload: Mapping) -> int:
    return ledger.append(event_type, payload)


def iter_events(path) -> list[dict]:
    """All complete events in file order; stops at the first bad line."""
    events = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            if not line.endswith("\n"):
                log.warning("ledger %s: line %d incomplete, stopping replay",
                            path, lineno)
                break
            try:
                event = json.loads(stripped)
            except json.JSONDecodeError:
                log.warning("ledger %s: line %d unreadable, stopping replay",
                            path, lineno)
                break
            if not isinstance(event, dict) or "event" not in event or "seq" not in event:
                log.warning("ledger %s: line %d malformed, stopping replay",
                            path, lineno)
                break
            events.append(event)
    return events


@dataclass
class LedgerState:
    """Derived state folded from an event stream."""

    events: list[dict] = field(default_factory=list)
    sessions: dict[str, dict] = field(default_factory=dict)
    transcripts: dict[str, list[dict]] = field(default_factory=dict)
    traces: dict[tuple[str, str, str, str], dict] = field(default_factory=dict)
    findings: list[dict] = field(default_factory=list)
    signals: dict[tuple[str, str, str], dict] = field(default_factory=dict)
    corrections: list[dict] = field(default_factory=list)
    approvals: list[dict] = field(default_factory=list)
    portfolios: list[dict] = field(default_factory=list)


def replay(ledger_path) -> LedgerState:
    """Fold the log back into derived state, order preserved.

    Later events for the same key overwrite earlier ones (a corrected
    trace replaces the original; re-issued signals replace the set),
    which is exactly the live pipeline's behavior.
    """
    state = LedgerState()
    for event in iter_events(ledger_path):
        state.events.append(event)
        kind = event["event"]
        if kind == "session_opened":
            state.sessions[event["session_id"]] = event
        elif kind == "query":
            state.transcripts.setdefault(event["session_id"], []).append(event)
        elif kind == "trace":
            payload = event["trace"]
            key = (event["cycle_id"], event["provider"], event["strategy"],
                   payload["firm"])
            state.traces[key] = payload
        elif kind == "finding":
            state.findings.append(event)
        elif kind == "signals":
            key = (event["cycle_id"], event["provider"], event["strategy"])
            state.signals[key] = event
        elif kind == "correction":
            state.corrections.append(event)
        elif kind == "approval":
            state.approvals.append(event)
        elif kind == "portfolio":
            state.portfolios.append(event)
    return state


# ------------------------------------------------------------- config

DEFAULT_POSITIONS = 5


@dataclass(frozen=True)
class Config:
    """Operator-supplied run configuration."""

    universe: tuple[str, ...]
    providers: tuple[ProviderProfile, ...]
    framework: ScoringFramework
    positions: int = DEFAULT_POSITIONS
    aggregation_tolerance: float = 0.005
    cluster_min: int = 4
    max_period_skew_months: int = 6
    classification_threshold: object = 0.5  # real threshold or "median"
    calendar_path: Optional[str] = None
    prices_path: Optional[str] = None
    ledger_path: str = "runs/ledger.jsonl"
    parallelism: int = 1

    def __post_init__(self) -> None:
        if self.positions < 1:
            raise ConfigError("positions must be at least 1")
        if len(set(self.universe)) != len(self.universe):
            raise ConfigError("universe contains duplicate tickers")
        if len(self.universe) < 2 * self.positions:
            raise ConfigError(
                f"universe of {len(self.universe)} cannot support "
                f"{self.positions} long plus {self.positions} short positions"
            )
        if self.parallelism < 1:
            raise ConfigError("parallelism must be at least 1")
        if self.classification_threshold != "median":
            t = self.classification_threshold
            if not isinstance(t, (int, float)) or not 0.0 <= float(t) <= 1.0:
                raise ConfigError(
                    "classification_threshold must be in [0,1] or 'median'"
                )


def default_config() -> Config:
    return Config(
        universe=tuple(universe_tickers()),
        providers=(
            ProviderProfile(provider="chatgpt", version_label="mock-chatgpt-1"),
            ProviderProfile(provider="deepseek", version_label="mock-deepseek-1"),
            ProviderProfile(provider="gemini", attachments=False,
                            version_label="mock-gemini-1"),
            ProviderProfile(provider="perplexity", version_label="undisclosed-routed"),
        ),
        framework=default_framework(),
    )


def _resolve(base: Path, value: Optional[str]) -> Optional[str]:
    if value is None:
        return None
    path = Path(value)
    return str(path if path.is_absolute() else base / path)


def load_config(path) -> Config:
    """Read a YAML config file; relative paths resolve beside the file."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping")
    base = path.parent

    universe = tuple(raw.get("universe") or universe_tickers())

    raw_providers = raw.get("providers", ())
    if isinstance(raw_providers, dict):
        raise ConfigError(
            "providers must be a list of entries (- provider: NAME), "
            "not a mapping keyed by name")
    providers = []
    for entry in raw_providers:
        try:
            providers.append(ProviderProfile(
                provider=entry["provider"],
                endpoint=entry.get("endpoint", ""),
                credential_env=entry.get("credential_env", ""),
                attachments=bool(entry.get("attachments", True)),
                browsing=bool(entry.get("browsing", False)),
                version_label=entry.get("version_label", "unversioned"),
            ))
        except (KeyError, TypeError) as err:
            raise ConfigError(f"bad provider entry {entry!r}: {err}") from err
    if not providers:
        providers = list(default_config().providers)

    framework_path = _resolve(base, raw.get("framework"))
    if framework_path:
        try:
            mapping = yaml.safe_load(Path(framework_path).read_text(encoding="utf-8"))
            framework = ScoringFramework.from_mapping(mapping)
        except (OSError, yaml.YAMLError) as err:
            raise ConfigError(f"cannot read framework {framework_path}: {err}") from err
    else:
        framework = default_framework()

    thresholds = raw.get("thresholds", {}) or {}
    return Config(
        universe=universe,
        providers=tuple(providers),
        framework=framework,
        positions=int(raw.get("positions", DEFAULT_POSITIONS)),
        aggregation_tolerance=float(
            thresholds.get("aggregation_tolerance", 0.005)),
        cluster_min=int(thresholds.get("cluster_min", 4)),
        max_period_skew_months=int(thresholds.get("max_period_skew_months", 6)),
        classification_threshold=raw.get("classification_threshold", 0.5),
        calendar_path=_resolve(base, raw.get("calendar")),
        prices_path=_resolve(base, raw.get("prices")),
        ledger_path=_resolve(base, raw.get("ledger")) or "runs/ledger.jsonl",
        parallelism=int(raw.get("parallelism", 1)),
    )
