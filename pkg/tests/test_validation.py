"""Linter tests: per-check units, the seeded-fault corpus, and the
clean twin that must come back empty."""
import json
from datetime import date

import pytest

from alphaloop.errors import InvalidValue
from alphaloop.scoring import default_framework
from alphaloop.validation import (
    EPS_IDENTICAL,
    FailureCode,
    PeriodRef,
    ReasoningTrace,
    Severity,
    SubScoreRecord,
    ValidationConfig,
    check_aggregation,
    check_bounds,
    check_carryover,
    check_feasible_range,
    check_temporal_cutoff,
    check_uniformity,
    check_unexplained_adjustment,
    check_zero_imputation,
    findings_to_jsonl,
    run_suite,
    summarize,
    summary_table,
)

from corpus_fixtures import clean_corpus, clean_trace, seeded_corpus

FRAMEWORK = default_framework()


def trace(firm="TEF", **kw):
    base = dict(
        firm=firm,
        session_id="s1",
        cycle_id="2025-04",
        reported_composite=0.5,
    )
    base.update(kw)
    return ReasoningTrace(**base)


# ---------------------------------------------------------------- construction

def test_trace_rejects_blank_identifiers():
    with pytest.raises(InvalidValue):
        trace(firm="")
    with pytest.raises(InvalidValue):
        trace(cycle_id="")


def test_trace_rejects_non_finite_composite():
    with pytest.raises(InvalidValue):
        trace(reported_composite=float("nan"))


# --------------------------------------------------------------------- bounds

def test_bounds_flags_composite_above_one():
    findings = check_bounds(trace(reported_composite=1.2))
    assert [f.code for f in findings] == [FailureCode.BOUNDS]
    assert findings[0].severity is Severity.ERROR


def test_bounds_flags_negative_category_and_sub_score():
    t = trace(
        reported_categories={"valuation": -0.1},
        reported_sub_scores={"pe_ratio": SubScoreRecord(unit_score=1.5)},
    )
    findings = check_bounds(t)
    assert len(findings) == 2
    assert all(f.code is FailureCode.BOUNDS for f in findings)


def test_bounds_accepts_exact_endpoints():
    t = trace(
        reported_composite=1.0,
        reported_categories={"valuation": 0.0},
        reported_sub_scores={"pe_ratio": SubScoreRecord(unit_score=1.0)},
    )
    assert check_bounds(t) == []


# -------------------------------------------------------------- recomputation

def test_aggregation_silent_without_weights_snapshot():
    t = trace(reported_categories={"valuation": 0.9})
    assert check_aggregation(t, tolerance=0.005) == []


def test_aggregation_flags_category_discrepancy():
    # composite kept consistent with the (renormalized) single category
    # so only the category-level recomputation trips
    t = trace(
        weights_used=FRAMEWORK,
        reported_composite=0.70,
        reported_categories={"valuation": 0.70},
        reported_sub_scores={
            "pe_ratio": SubScoreRecord(unit_score=0.6),
            "pb_ratio": SubScoreRecord(unit_score=0.5),
        },
    )
    findings = check_aggregation(t, tolerance=0.005)
    assert [f.code for f in findings] == [FailureCode.C1]
    assert "valuation" in findings[0].evidence
    assert "0.56" in findings[0].evidence


def test_aggregation_tolerance_boundary_is_inclusive():
    # reported 0.562 vs recomputed 0.56: off by 0.002, within 0.005
    t = trace(
        weights_used=FRAMEWORK,
        reported_composite=0.562,
        reported_categories={"valuation": 0.562},
        reported_sub_scores={
            "pe_ratio": SubScoreRecord(unit_score=0.6),
            "pb_ratio": SubScoreRecord(unit_score=0.5),
        },
    )
    assert check_aggregation(t, tolerance=0.005) == []


def test_aggregation_flags_composite_discrepancy_once():
    cats = {c.category: 0.56 for c in FRAMEWORK.categories}
    t = trace(
        weights_used=FRAMEWORK,
        reported_composite=0.71,
        reported_categories=cats,
    )
    findings = check_aggregation(t, tolerance=0.005)
    assert [f.code for f in findings] == [FailureCode.C1]
    assert "composite" in findings[0].evidence


# ------------------------------------------------------------ feasible ranges

def test_feasible_flags_category_outside_sub_score_hull():
    t = trace(
        reported_categories={"valuation": 0.7},
        reported_sub_scores={
            "pe_ratio": SubScoreRecord(unit_score=0.4),
            "pb_ratio": SubScoreRecord(unit_score=0.6),
        },
    )
    findings = check_feasible_range(t, FRAMEWORK)
    assert [f.code for f in findings] == [FailureCode.FEASIBLE]
    assert findings[0].severity is Severity.ERROR


def test_feasible_accepts_endpoint_within_identity_eps():
    t = trace(
        reported_categories={"valuation": 0.6 + EPS_IDENTICAL / 2},
        reported_sub_scores={
            "pe_ratio": SubScoreRecord(unit_score=0.4),
            "pb_ratio": SubScoreRecord(unit_score=0.6),
        },
    )
    assert check_feasible_range(t, FRAMEWORK) == []


def test_feasible_skips_categories_without_sub_scores():
    t = trace(reported_categories={"valuation": 0.9})
    assert check_feasible_range(t, FRAMEWORK) == []


# -------------------------------------------------------------------- cutoffs

def test_cutoff_flags_day_precision_after_cutoff():
    t = trace(reported_sub_scores={
        "momentum": SubScoreRecord(
            unit_score=0.5,
            refs=(PeriodRef(end=date(2025, 4, 2), precision="day", text="2025-04-02"),),
            ref_text="2025-04-02",
        ),
    })
    findings = check_temporal_cutoff(t, cutoff=date(2025, 3, 31), max_period_skew_months=6)
    assert [f.code for f in findings] == [FailureCode.CUTOFF]
    assert findings[0].severity is Severity.ERROR


def test_cutoff_ignores_fiscal_periods_ending_after_cutoff():
    # a forward full-year estimate is legal; only day-stamped
    # observations count against the information cutoff
    t = trace(reported_sub_scores={
        "pe_ratio": SubScoreRecord(
            unit_score=0.5,
            refs=(PeriodRef(end=date(2025, 12, 31), precision="year", text="fy2025"),),
            ref_text="fy2025",
        ),
    })
    assert check_temporal_cutoff(t, cutoff=date(2025, 3, 31), max_period_skew_months=6) == []


def test_cutoff_day_on_cutoff_is_allowed():
    t = trace(reported_sub_scores={
        "momentum": SubScoreRecord(
            unit_score=0.5,
            refs=(PeriodRef(end=date(2025, 3, 31), precision="day", text="2025-03-31"),),
            ref_text="2025-03-31",
        ),
    })
    assert check_temporal_cutoff(t, cutoff=date(2025, 3, 31), max_period_skew_months=6) == []


def test_missing_citation_when_text_names_dates_but_none_parsed():
    t = trace(reported_sub_scores={
        "momentum": SubScoreRecord(unit_score=0.5, refs=(), ref_text="latest close"),
    })
    findings = check_temporal_cutoff(t, cutoff=date(2025, 3, 31), max_period_skew_months=6)
    assert [f.code for f in findings] == [FailureCode.MISSING_CITATION]
    assert findings[0].severity is Severity.WARNING


def test_period_skew_within_one_record_flags_a3():
    t = trace(reported_sub_scores={
        "pe_ratio": SubScoreRecord(
            unit_score=0.5,
            refs=(
                PeriodRef(end=date(2025, 12, 31), precision="year", text="fy2025"),
                PeriodRef(end=date(2024, 12, 31), precision="year", text="fy2024"),
            ),
            ref_text="fy2025 vs fy2024",
        ),
    })
    findings = check_temporal_cutoff(t, cutoff=date(2025, 3, 31), max_period_skew_months=6)
    assert [f.code for f in findings] == [FailureCode.A3]
    assert findings[0].severity is Severity.WARNING


def test_period_skew_at_limit_is_allowed():
    t = trace(reported_sub_scores={
        "pe_ratio": SubScoreRecord(
            unit_score=0.5,
            refs=(
                PeriodRef(end=date(2025, 9, 30), precision="quarter", text="q3"),
                PeriodRef(end=date(2025, 3, 31), precision="quarter", text="q1"),
            ),
            ref_text="q3 vs q1",
        ),
    })
    assert check_temporal_cutoff(t, cutoff=date(2025, 12, 31), max_period_skew_months=6) == []


# ------------------------------------------------------------------ carryover

def test_carryover_flags_frozen_composite_with_moving_categories():
    prev = trace(
        cycle_id="2025-03",
        reported_composite=0.72,
        reported_categories={"valuation": 0.6, "growth": 0.8},
    )
    cur = trace(
        reported_composite=0.72,
        reported_categories={"valuation": 0.8, "growth": 0.6},
    )
    findings = check_carryover(cur, prev, tolerance=0.005)
    assert [f.code for f in findings] == [FailureCode.C2]
    assert findings[0].severity is Severity.WARNING


def test_carryover_silent_when_composite_moved():
    prev = trace(cycle_id="2025-03", reported_composite=0.70,
                 reported_categories={"valuation": 0.6})
    cur = trace(reported_composite=0.72,
                reported_categories={"valuation": 0.8})
    assert check_carryover(cur, prev, tolerance=0.005) == []


def test_carryover_silent_when_nothing_moved():
    prev = trace(cycle_id="2025-03", reported_composite=0.72,
                 reported_categories={"valuation": 0.6})
    cur = trace(reported_composite=0.72,
                reported_categories={"valuation": 0.6})
    assert check_carryover(cur, prev, tolerance=0.005) == []


# ----------------------------------------------------------- cluster scanning

def test_uniform_cluster_flags_once_with_first_member():
    traces = [trace(firm=f, reported_composite=0.85)
              for f in ("SAN", "BKT", "SAB", "CABK")]
    traces.append(trace(firm="TEF", reported_composite=0.41))
    findings = check_uniformity(traces, cluster_min=4)
    assert [f.code for f in findings] == [FailureCode.D3]
    assert findings[0].firm == "BKT"
    assert "4" in findings[0].evidence


def test_cluster_below_minimum_is_silent():
    traces = [trace(firm=f, reported_composite=0.85) for f in ("SAN", "BKT", "SAB")]
    assert check_uniformity(traces, cluster_min=4) == []


def test_two_separate_clusters_flag_separately():
    traces = [trace(firm=f, reported_composite=0.85)
              for f in ("SAN", "BKT", "SAB", "CABK")]
    traces += [trace(firm=f, reported_composite=0.30)
               for f in ("TEF", "REP", "IBE", "ELE")]
    findings = check_uniformity(traces, cluster_min=4)
    assert len(findings) == 2
    assert {f.firm for f in findings} == {"BKT", "ELE"}


# ------------------------------------------------------------ zero imputation

def test_zero_imputation_flags_hard_zero_for_missing_metric():
    t = trace(
        reported_sub_scores={"eps_growth": SubScoreRecord(unit_score=0.5, raw_value=0.0)},
        missing_metrics=frozenset({"eps_growth"}),
    )
    findings = check_zero_imputation(t)
    assert [f.code for f in findings] == [FailureCode.C4]
    assert findings[0].severity is Severity.ERROR


def test_zero_imputation_silent_when_metric_not_missing():
    t = trace(
        reported_sub_scores={"eps_growth": SubScoreRecord(unit_score=0.5, raw_value=0.0)},
    )
    assert check_zero_imputation(t) == []


def test_zero_imputation_silent_when_missing_metric_omitted():
    t = trace(
        reported_sub_scores={"eps_growth": SubScoreRecord(unit_score=0.5, raw_value=None)},
        missing_metrics=frozenset({"eps_growth"}),
    )
    assert check_zero_imputation(t) == []


# ------------------------------------------------------- silent adjustments

def test_adjustment_flags_unexplained_gap():
    t = trace(reported_composite=0.55, computed_composite=0.58)
    findings = check_unexplained_adjustment(t, tolerance=0.005)
    assert [f.code for f in findings] == [FailureCode.D5]
    assert findings[0].severity is Severity.WARNING


def test_adjustment_silent_when_gap_explained_by_reported_weights():
    cats = {c.category: 0.56 for c in FRAMEWORK.categories}
    t = trace(
        reported_composite=0.56,
        computed_composite=0.58,
        reported_categories=cats,
        weights_used=FRAMEWORK,
    )
    assert check_unexplained_adjustment(t, tolerance=0.005) == []


def test_adjustment_silent_without_computed_value():
    t = trace(reported_composite=0.55)
    assert check_unexplained_adjustment(t, tolerance=0.005) == []


# ---------------------------------------------------------------- full suite

def expected_seeded_codes():
    return [
        ("ACS", FailureCode.BOUNDS),
        ("ACX", FailureCode.FEASIBLE),
        ("AENA", FailureCode.C1),
        ("AMS", FailureCode.C2),
        ("ANA", FailureCode.C4),
        ("ANE", FailureCode.CUTOFF),
        ("BBVA", FailureCode.A3),
        ("BKT", FailureCode.D3),
        ("TEF", FailureCode.D5),
    ]


def test_seeded_corpus_yields_each_code_exactly_once():
    traces, previous, config = seeded_corpus()
    findings = run_suite(traces, config=config, previous=previous)
    assert [(f.firm, f.code) for f in findings] == expected_seeded_codes()


def test_seeded_corpus_is_deterministic():
    traces, previous, config = seeded_corpus()
    one = run_suite(traces, config=config, previous=previous)
    two = run_suite(traces, config=config, previous=previous)
    assert findings_to_jsonl(one) == findings_to_jsonl(two)


def test_clean_corpus_yields_no_findings():
    traces, previous, config = clean_corpus()
    assert run_suite(traces, config=config, previous=previous) == []


def test_findings_sorted_by_cycle_then_firm_then_code():
    traces, previous, config = seeded_corpus()
    later = trace(firm="ACS", cycle_id="2025-05", reported_composite=1.5)
    findings = run_suite(traces + [later], config=config, previous=previous)
    keys = [(f.cycle_id, f.firm, f.code.value) for f in findings]
    assert keys == sorted(keys)
    assert findings[-1].cycle_id == "2025-05"


def test_suite_on_self_consistent_scores_is_silent():
    # traces assembled from the scoring engine's own outputs must lint clean
    findings = run_suite([clean_trace("ITX"), clean_trace("GRF")],
                         config=ValidationConfig(cutoffs={"2025-04": date(2025, 3, 31)}))
    assert findings == []


# ----------------------------------------------------------------- reporting

def test_summarize_counts_by_code():
    traces, previous, config = seeded_corpus()
    counts = summarize(run_suite(traces, config=config, previous=previous))
    assert counts == {code: 1 for _, code in expected_seeded_codes()}


def test_summary_table_lists_counts_and_severities():
    traces, previous, config = seeded_corpus()
    table = summary_table(run_suite(traces, config=config, previous=previous))
    assert "BOUNDS" in table and "D5" in table
    assert "error" in table and "warning" in table


def test_jsonl_round_trips_and_is_stable():
    traces, previous, config = seeded_corpus()
    payload = findings_to_jsonl(run_suite(traces, config=config, previous=previous))
    rows = [json.loads(line) for line in payload.splitlines()]
    assert [r["code"] for r in rows] == [c.value for _, c in expected_seeded_codes()]
    for row in rows:
        assert set(row) >= {"code", "severity", "firm", "cycle_id", "evidence"}
