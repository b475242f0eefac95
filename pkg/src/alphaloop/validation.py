"""Rule-based linting of parsed reasoning traces.

Each detector covers one mechanically checkable failure pattern seen in
model-produced scoring traces: out-of-range values, arithmetic that does
not reproduce, stale carryover, uniform default clusters, period
mismatches, citation breaches of the information cutoff, silent zero
imputation, and unexplained end-stage adjustments. Detectors are pure
and read-only; anything needing semantic judgment goes to the human
review console instead.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from typing import Mapping, Optional, Sequence

from .errors import InvalidValue
from .scoring import ScoringFramework, default_framework, score_category, score_composite

EPS_IDENTICAL = 1e-9
DEFAULT_TOLERANCE = 0.005
DEFAULT_CLUSTER_MIN = 4
DEFAULT_MAX_PERIOD_SKEW_MONTHS = 6


class Severity(str, Enum):
    ERROR = "error"
    WARNING = "warning"


class FailureCode(str, Enum):
    A3 = "A3"
    C1 = "C1"
    C2 = "C2"
    C4 = "C4"
    D3 = "D3"
    D5 = "D5"
    BOUNDS = "BOUNDS"
    FEASIBLE = "FEASIBLE"
    CUTOFF = "CUTOFF"
    MISSING_CITATION = "MISSING_CITATION"


@dataclass(frozen=True)
class PeriodRef:
    """One dated reference cited for a metric component.

    precision records how finely the citation pins the period: a full
    calendar date ("2025-03-28"), a month ("March 2025"), a quarter
    ("Q1 2025"), or a fiscal year ("FY2024"). end is the period's last
    day. Day-precision refs are observations and subject to the cutoff;
    coarser refs are fiscal periods, which may legitimately lie in the
    future (forward estimates) and are only checked for mutual skew.
    """

    end: date
    precision: str  # day | month | quarter | year
    text: str


@dataclass(frozen=True)
class SubScoreRecord:
    unit_score: Optional[float] = None
    raw_value: Optional[float] = None
    refs: tuple[PeriodRef, ...] = ()
    source: Optional[str] = None
    ref_text: Optional[str] = None


@dataclass(frozen=True)
class ReasoningTrace:
    """Structured snapshot of one model response for one firm."""

    firm: str
    session_id: str
    cycle_id: str
    reported_composite: Optional[float] = None
    reported_categories: Mapping[str, float] = field(default_factory=dict)
    reported_sub_scores: Mapping[str, SubScoreRecord] = field(default_factory=dict)
    weights_used: Optional[ScoringFramework] = None
    free_text: str = ""
    computed_composite: Optional[float] = None
    missing_metrics: frozenset = frozenset()

    def __post_init__(self) -> None:
        if not self.firm or not self.session_id or not self.cycle_id:
            raise InvalidValue("trace needs non-empty firm, session and cycle ids")
        for label, value in [("composite", self.reported_composite),
                             ("computed", self.computed_composite)]:
            if value is not None and not math.isfinite(value):
                raise InvalidValue(f"{self.firm}: non-finite reported {label}")
        for name, value in self.reported_categories.items():
            if not math.isfinite(value):
                raise InvalidValue(f"{self.firm}: non-finite category {name}")


@dataclass(frozen=True)
class ValidationFinding:
    code: FailureCode
    severity: Severity
    firm: str
    cycle_id: str
    evidence: str
    hint: str = ""


@dataclass(frozen=True)
class ValidationConfig:
    tolerance: float = DEFAULT_TOLERANCE
    cluster_min: int = DEFAULT_CLUSTER_MIN
    max_period_skew_months: int = DEFAULT_MAX_PERIOD_SKEW_MONTHS
    membership: ScoringFramework = field(default_factory=default_framework)
    cutoffs: Mapping[str, date] = field(default_factory=dict)


def _months_between(a: date, b: date) -> int:
    return abs((b.year - a.year) * 12 + (b.month - a.month))


def check_bounds(trace: ReasoningTrace) -> list[ValidationFinding]:
    """Every reported score must sit in the unit interval."""
    findings = []

    def flag(label: str, value: float) -> None:
        findings.append(ValidationFinding(
            code=FailureCode.BOUNDS,
            severity=Severity.ERROR,
            firm=trace.firm,
            cycle_id=trace.cycle_id,
            evidence=f"{label} = {value} outside [0, 1]",
            hint="scores are bounded; recompute and clamp nothing silently",
        ))

    if trace.reported_composite is not None and not 0.0 <= trace.reported_composite <= 1.0:
        flag("composite", trace.reported_composite)
    for name in sorted(trace.reported_categories):
        value = trace.reported_categories[name]
        if not 0.0 <= value <= 1.0:
            flag(f"category {name}", value)
    for metric in sorted(trace.reported_sub_scores):
        unit = trace.reported_sub_scores[metric].unit_score
        if unit is not None and (not math.isfinite(unit) or not 0.0 <= unit <= 1.0):
            flag(f"sub-score {metric}", unit)
    return findings


def check_aggregation(
    trace: ReasoningTrace, tolerance: float = DEFAULT_TOLERANCE
) -> list[ValidationFinding]:
    """Re-derive category and composite values from the trace's own
    weights; differences past tolerance are arithmetic failures."""
    fw = trace.weights_used
    if fw is None:
        return []
    findings = []
    for cat in fw.categories:
        reported = trace.reported_categories.get(cat.category)
        if reported is None:
            continue
        entries = []
        for m in cat.metrics:
            rec = trace.reported_sub_scores.get(m.metric)
            entries.append((rec.unit_score if rec else None, m.weight))
        if all(score is None for score, _ in entries):
            continue
        recomputed, _ = score_category(entries)
        if abs(reported - recomputed) > tolerance:
            findings.append(ValidationFinding(
                code=FailureCode.C1,
                severity=Severity.ERROR,
                firm=trace.firm,
                cycle_id=trace.cycle_id,
                evidence=(
                    f"category {cat.category} reported {reported} but weighted "
                    f"sub-scores give {recomputed:.6f}"
                ),
                hint="recompute the weighted mean from the stated sub-scores",
            ))
    if trace.reported_composite is not None and trace.reported_categories:
        cats = {c.category: trace.reported_categories.get(c.category) for c in fw.categories}
        if any(v is not None for v in cats.values()):
            recomputed = score_composite(trace.firm, cats, {}, fw).value
            if abs(trace.reported_composite - recomputed) > tolerance:
                findings.append(ValidationFinding(
                    code=FailureCode.C1,
                    severity=Severity.ERROR,
                    firm=trace.firm,
                    cycle_id=trace.cycle_id,
                    evidence=(
                        f"composite reported {trace.reported_composite} but weighted "
                        f"categories give {recomputed:.6f}"
                    ),
                    hint="recompute the weighted sum from the stated category scores",
                ))
    return findings


def check_feasible_range(
    trace: ReasoningTrace, membership: Optional[ScoringFramework] = None
) -> list[ValidationFinding]:
    """A category score outside the envelope of its own sub-scores is
    impossible under any convex weighting."""
    fw = membership or default_framework()
    findings = []
    for cat in fw.categories:
        reported = trace.reported_categories.get(cat.category)
        if reported is None:
            continue
        units = []
        for m in cat.metrics:
            rec = trace.reported_sub_scores.get(m.metric)
            if rec is not None and rec.unit_score is not None:
                units.append(rec.unit_score)
        if not units:
            continue
        lo, hi = min(units), max(units)
        if reported < lo - EPS_IDENTICAL or reported > hi + EPS_IDENTICAL:
            findings.append(ValidationFinding(
                code=FailureCode.FEASIBLE,
                severity=Severity.ERROR,
                firm=trace.firm,
                cycle_id=trace.cycle_id,
                evidence=(
                    f"category {cat.category} = {reported} outside feasible range "
                    f"[{lo}, {hi}] of its sub-scores"
                ),
                hint="a weighted mean cannot leave the span of its inputs",
            ))
    return findings


def check_temporal_cutoff(
    trace: ReasoningTrace,
    cutoff: date,
    max_period_skew_months: int = DEFAULT_MAX_PERIOD_SKEW_MONTHS,
) -> list[ValidationFinding]:
    """Citation discipline: no observation after the cutoff, no metric
    mixing fiscal periods further apart than the skew limit, and every
    dated reference must actually parse."""
    findings = []
    for metric in sorted(trace.reported_sub_scores):
        rec = trace.reported_sub_scores[metric]
        for ref in rec.refs:
            if ref.precision == "day" and ref.end > cutoff:
                findings.append(ValidationFinding(
                    code=FailureCode.CUTOFF,
                    severity=Severity.ERROR,
                    firm=trace.firm,
                    cycle_id=trace.cycle_id,
                    evidence=f"{metric} cites {ref.text!r} dated {ref.end}, after cutoff {cutoff}",
                    hint="only information published on or before the cutoff may be used",
                ))
        if rec.ref_text and not rec.refs:
            findings.append(ValidationFinding(
                code=FailureCode.MISSING_CITATION,
                severity=Severity.WARNING,
                firm=trace.firm,
                cycle_id=trace.cycle_id,
                evidence=f"{metric} reference date {rec.ref_text!r} could not be parsed",
                hint="cite each component with an unambiguous date or period",
            ))
        if len(rec.refs) >= 2:
            ends = [ref.end for ref in rec.refs]
            skew = _months_between(min(ends), max(ends))
            if skew > max_period_skew_months:
                cited = ", ".join(ref.text for ref in rec.refs)
                findings.append(ValidationFinding(
                    code=FailureCode.A3,
                    severity=Severity.WARNING,
                    firm=trace.firm,
                    cycle_id=trace.cycle_id,
                    evidence=(
                        f"{metric} mixes periods {skew} months apart ({cited}); "
                        f"limit is {max_period_skew_months}"
                    ),
                    hint="align all components of one formula to comparable periods",
                ))
    return findings


def check_carryover(
    current: ReasoningTrace,
    previous: Optional[ReasoningTrace],
    tolerance: float = DEFAULT_TOLERANCE,
) -> list[ValidationFinding]:
    """Identical final score despite changed components means the final
    value was reused rather than recomputed."""
    if previous is None:
        return []
    if current.reported_composite is None or previous.reported_composite is None:
        return []
    if abs(current.reported_composite - previous.reported_composite) > EPS_IDENTICAL:
        return []
    shared = sorted(set(current.reported_categories) & set(previous.reported_categories))
    moved = [
        (name, previous.reported_categories[name], current.reported_categories[name])
        for name in shared
        if abs(current.reported_categories[name] - previous.reported_categories[name]) > tolerance
    ]
    if not moved:
        return []
    detail = "; ".join(f"{n}: {a} -> {b}" for n, a, b in moved)
    return [ValidationFinding(
        code=FailureCode.C2,
        severity=Severity.WARNING,
        firm=current.firm,
        cycle_id=current.cycle_id,
        evidence=(
            f"composite unchanged at {current.reported_composite} from prior cycle "
            f"while categories moved ({detail})"
        ),
        hint="recompute the composite from the current cycle's components",
    )]


def check_uniformity(
    traces: Sequence[ReasoningTrace], cluster_min: int = DEFAULT_CLUSTER_MIN
) -> list[ValidationFinding]:
    """A block of firms sharing one identical composite points to a
    default value pasted across the group."""
    scored = sorted(
        ((t.reported_composite, t.firm, t.cycle_id) for t in traces
         if t.reported_composite is not None),
    )
    findings = []
    i = 0
    while i < len(scored):
        j = i
        while j + 1 < len(scored) and abs(scored[j + 1][0] - scored[i][0]) <= EPS_IDENTICAL:
            j += 1
        cluster = scored[i:j + 1]
        if len(cluster) >= cluster_min:
            firms = sorted(firm for _, firm, _ in cluster)
            findings.append(ValidationFinding(
                code=FailureCode.D3,
                severity=Severity.WARNING,
                firm=firms[0],
                cycle_id=cluster[0][2],
                evidence=(
                    f"{len(cluster)} firms share composite {cluster[0][0]}: "
                    + ", ".join(firms)
                ),
                hint="differentiate scores by firm fundamentals, not a group default",
            ))
        i = j + 1
    return findings


def check_zero_imputation(trace: ReasoningTrace) -> list[ValidationFinding]:
    """A metric known to be missing upstream that shows up as a hard 0
    was imputed, not observed."""
    findings = []
    for metric in sorted(trace.missing_metrics):
        rec = trace.reported_sub_scores.get(metric)
        if rec is not None and rec.raw_value == 0.0:
            findings.append(ValidationFinding(
                code=FailureCode.C4,
                severity=Severity.ERROR,
                firm=trace.firm,
                cycle_id=trace.cycle_id,
                evidence=f"{metric} is missing upstream but reported with raw value 0",
                hint="drop the metric and renormalize its siblings instead of imputing zero",
            ))
    return findings


def check_unexplained_adjustment(
    trace: ReasoningTrace, tolerance: float = DEFAULT_TOLERANCE
) -> list[ValidationFinding]:
    """The response computed one composite but reported another, with no
    stated weight or component change bridging the two."""
    if trace.computed_composite is None or trace.reported_composite is None:
        return []
    if abs(trace.computed_composite - trace.reported_composite) <= EPS_IDENTICAL:
        return []
    if trace.weights_used is not None and trace.reported_categories:
        cats = {
            c.category: trace.reported_categories.get(c.category)
            for c in trace.weights_used.categories
        }
        if any(v is not None for v in cats.values()):
            recomputed = score_composite(trace.firm, cats, {}, trace.weights_used).value
            if abs(recomputed - trace.reported_composite) <= tolerance:
                return []  # the stated weights account for the final value
    return [ValidationFinding(
        code=FailureCode.D5,
        severity=Severity.WARNING,
        firm=trace.firm,
        cycle_id=trace.cycle_id,
        evidence=(
            f"computed composite {trace.computed_composite} adjusted to "
            f"{trace.reported_composite} with no supporting change"
        ),
        hint="state the component or weight change justifying the adjustment",
    )]


def run_suite(
    traces: Sequence[ReasoningTrace],
    config: Optional[ValidationConfig] = None,
    previous: Optional[Mapping[str, ReasoningTrace]] = None,
) -> list[ValidationFinding]:
    """All detectors over a trace corpus, deterministically ordered.

    previous maps firm -> the prior cycle's trace for the same strategy,
    enabling the carryover check. Cutoff checks run for traces whose
    cycle appears in config.cutoffs.
    """
    cfg = config or ValidationConfig()
    findings: list[ValidationFinding] = []
    for trace in traces:
        findings += check_bounds(trace)
        findings += check_aggregation(trace, cfg.tolerance)
        findings += check_feasible_range(trace, cfg.membership)
        cutoff = cfg.cutoffs.get(trace.cycle_id)
        if cutoff is not None:
            findings += check_temporal_cutoff(trace, cutoff, cfg.max_period_skew_months)
        findings += check_zero_imputation(trace)
        findings += check_unexplained_adjustment(trace, cfg.tolerance)
        if previous is not None:
            findings += check_carryover(trace, previous.get(trace.firm), cfg.tolerance)

    by_cycle: dict[str, list[ReasoningTrace]] = {}
    for trace in traces:
        by_cycle.setdefault(trace.cycle_id, []).append(trace)
    for cycle_id in sorted(by_cycle):
        findings += check_uniformity(by_cycle[cycle_id], cfg.cluster_min)

    findings.sort(key=lambda f: (f.cycle_id, f.firm, f.code.value))
    return findings


def summarize(findings: Sequence[ValidationFinding]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for f in findings:
        counts[f.code.value] = counts.get(f.code.value, 0) + 1
    return dict(sorted(counts.items()))


def summary_table(findings: Sequence[ValidationFinding]) -> str:
    counts = summarize(findings)
    if not counts:
        return "no findings\n"
    severity = {f.code.value: f.severity.value for f in findings}
    width = max(len(c) for c in counts)
    lines = [f"{code.ljust(width)}  {severity[code]:<7}  {n}"
             for code, n in counts.items()]
    lines.append(f"{'total'.ljust(width)}  {'':<7}  {len(findings)}")
    return "\n".join(lines) + "\n"


def findings_to_jsonl(findings: Sequence[ValidationFinding]) -> str:
    lines = []
    for f in findings:
        lines.append(json.dumps(
            {
                "code": f.code.value,
                "severity": f.severity.value,
                "firm": f.firm,
                "cycle_id": f.cycle_id,
                "evidence": f.evidence,
                "hint": f.hint,
            },
            sort_keys=True,
            separators=(",", ":"),
        ))
    return "\n".join(lines) + ("\n" if lines else "")
