"""Scoring engine tests.

The oracle functions here are written independently of the package
implementation (plain loops, no shared helpers) so the two can disagree.
"""
import math
from datetime import date

import numpy as np
import pytest

from alphaloop.errors import (
    CategoryMissing,
    ConfigError,
    EmptyCrossSection,
    InvalidValue,
    NoSignal,
)
from alphaloop.scoring import (
    Category,
    CompositeScore,
    Direction,
    MetricObservation,
    NormalizationBounds,
    ScoringFramework,
    SubMetric,
    build_cross_section_bounds,
    default_framework,
    normalize_cross_section,
    normalize_metric,
    score_category,
    score_composite,
    score_cross_section,
    score_firm,
)

H = Direction.HIGHER_BETTER
L = Direction.LOWER_BETTER
M = Direction.MIDPOINT_BETTER


def obs(firm, metric, value, as_of=date(2025, 3, 31), source="test"):
    return MetricObservation(firm=firm, metric=metric, raw_value=value, as_of=as_of, source=source)


# ---------------------------------------------------------------- oracles

def oracle_weighted_mean(pairs):
    """Renormalized weighted mean over present (score, weight) pairs."""
    present = [(s, w) for s, w in pairs if s is not None]
    total = 0.0
    for _, w in present:
        total += w
    acc = 0.0
    for s, w in present:
        acc += s * w / total
    return acc


def oracle_composite(cat_scores, weights):
    """Brute-force weighted sum over present categories."""
    total = 0.0
    for name, w in weights.items():
        if cat_scores.get(name) is not None:
            total += w
    acc = 0.0
    for name, w in weights.items():
        s = cat_scores.get(name)
        if s is not None:
            acc += s * w / total
    return acc


def random_framework(rng, with_prescored=False):
    n_cats = int(rng.integers(1, 7))
    cat_w = rng.random(n_cats) + 0.05
    cat_w = cat_w / cat_w.sum()
    cats = []
    k = 0
    for i in range(n_cats):
        n_sub = int(rng.integers(1, 5))
        sub_w = rng.random(n_sub) + 0.05
        sub_w = sub_w / sub_w.sum()
        metrics = []
        for j in range(n_sub):
            direction = [H, L, M][int(rng.integers(0, 3))]
            prescored = bool(with_prescored and rng.random() < 0.2)
            metrics.append(SubMetric(f"m{k}", float(sub_w[j]), direction, prescored))
            k += 1
        cats.append(Category(f"c{i}", float(cat_w[i]), tuple(metrics)))
    # push rounding error into the last category weight
    fixed = cats[-1]
    resid = 1.0 - math.fsum(c.weight for c in cats[:-1])
    cats[-1] = Category(fixed.category, resid, fixed.metrics)
    return ScoringFramework(tuple(cats))


# ---------------------------------------------------- cross-section bounds

def test_bounds_basic():
    b = build_cross_section_bounds([obs("A", "pe_ratio", 5), obs("B", "pe_ratio", 10), obs("C", "pe_ratio", 20)])
    assert b.lo == 5 and b.hi == 20 and not b.degenerate


def test_bounds_degenerate():
    b = build_cross_section_bounds([obs("A", "pe_ratio", 10), obs("B", "pe_ratio", 10)])
    assert b.lo == 10 and b.hi == 10 and b.degenerate


def test_bounds_match_sort_oracle():
    rng = np.random.default_rng(20250331)
    for _ in range(50):
        values = rng.uniform(0, 100, size=35)
        group = [obs(f"F{i}", "roe", float(v)) for i, v in enumerate(values)]
        b = build_cross_section_bounds(group)
        ordered = sorted(values)
        assert b.lo == ordered[0]
        assert b.hi == ordered[-1]


def test_bounds_empty_raises():
    with pytest.raises(EmptyCrossSection):
        build_cross_section_bounds([])


def test_bounds_mixed_metric_rejected():
    with pytest.raises(Exception):
        build_cross_section_bounds([obs("A", "pe_ratio", 5), obs("B", "roe", 10)])


def test_bounds_nonfinite_rejected():
    with pytest.raises(InvalidValue):
        build_cross_section_bounds([obs("A", "pe_ratio", float("nan"))])


# ----------------------------------------------------------- normalization

def test_normalize_lower_better_extreme():
    b = NormalizationBounds("pe_ratio", lo=8.0, hi=30.0, degenerate=False)
    assert normalize_metric(8.0, b, L) == 1.0  # cheapest name in the index


def test_normalize_linear_map():
    b = NormalizationBounds("momentum", lo=0.0, hi=10.0, degenerate=False)
    assert normalize_metric(4.0, b, H) == pytest.approx(0.4)


def test_normalize_rsi_midpoint():
    b = NormalizationBounds("rsi", lo=30.0, hi=70.0, degenerate=False)
    assert normalize_metric(50.0, b, M) == 1.0
    assert normalize_metric(100.0, b, M) == 0.0
    assert normalize_metric(0.0, b, M) == 0.0
    assert normalize_metric(25.0, b, M) == pytest.approx(0.5)
    assert normalize_metric(75.0, b, M) == pytest.approx(0.5)


def test_normalize_degenerate_is_half():
    b = NormalizationBounds("pb_ratio", lo=3.0, hi=3.0, degenerate=True)
    assert normalize_metric(3.0, b, H) == 0.5
    assert normalize_metric(3.0, b, L) == 0.5


def test_normalize_clamps_out_of_band():
    b = NormalizationBounds("roe", lo=0.0, hi=10.0, degenerate=False)
    assert normalize_metric(15.0, b, H) == 1.0
    assert normalize_metric(-5.0, b, H) == 0.0


def test_normalize_nonfinite_raises():
    b = NormalizationBounds("roe", lo=0.0, hi=10.0, degenerate=False)
    with pytest.raises(InvalidValue):
        normalize_metric(float("inf"), b, H)


def test_normalize_always_unit_interval():
    rng = np.random.default_rng(7)
    for _ in range(500):
        lo, hi = sorted(rng.uniform(-100, 100, size=2))
        b = NormalizationBounds("x", float(lo), float(hi), degenerate=lo == hi)
        raw = float(rng.uniform(-200, 200))
        for d in (H, L, M):
            u = normalize_metric(raw, b, d)
            assert 0.0 <= u <= 1.0


# -------------------------------------------------------- category scores

def test_category_two_metric_weighted_mean():
    # 0.6 at 60% plus 0.5 at 40%
    score, coverage = score_category([(0.6, 0.6), (0.5, 0.4)])
    assert score == pytest.approx(0.56, abs=1e-12)
    assert coverage == 1.0


def test_category_equal_scores_fixed_point():
    score, _ = score_category([(0.3, 0.6), (0.3, 0.4)])
    assert score == pytest.approx(0.3, abs=1e-12)


def test_category_renormalizes_on_missing():
    score, coverage = score_category([(0.8, 0.6), (None, 0.4)])
    assert score == pytest.approx(0.8, abs=1e-12)
    assert coverage == 0.5


def test_category_all_missing_raises():
    with pytest.raises(CategoryMissing):
        score_category([(None, 0.6), (None, 0.4)])


def test_category_within_present_envelope():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        n = int(rng.integers(1, 6))
        weights = rng.random(n) + 0.01
        scores = [float(s) if rng.random() > 0.3 else None for s in rng.random(n)]
        if all(s is None for s in scores):
            scores[0] = 0.5
        pairs = list(zip(scores, (float(w) for w in weights)))
        got, _ = score_category(pairs)
        present = [s for s in scores if s is not None]
        assert min(present) - 1e-12 <= got <= max(present) + 1e-12
        assert got == pytest.approx(oracle_weighted_mean(pairs), abs=1e-12)


# -------------------------------------------------------- composite scores

def test_composite_all_half():
    fw = default_framework()
    cats = {c: 0.5 for c in fw.category_ids()}
    cov = {c: 1.0 for c in fw.category_ids()}
    assert score_composite("TEF", cats, cov, fw).value == pytest.approx(0.5, abs=1e-12)


def test_composite_weighted_sum():
    fw = default_framework()
    cats = {
        "valuation": 0.6,
        "growth": 0.8,
        "financial_health": 0.5,
        "technical": 0.4,
        "macro_sector": 0.5,
        "sentiment": 0.7,
    }
    cov = {c: 1.0 for c in cats}
    got = score_composite("ITX", cats, cov, fw)
    assert got.value == pytest.approx(0.595, abs=1e-12)
    weights = {c.category: c.weight for c in fw.categories}
    assert got.value == pytest.approx(oracle_composite(cats, weights), abs=1e-12)


def test_composite_missing_category_renormalizes():
    fw = default_framework()
    cats = {c: 0.5 for c in fw.category_ids() if c != "sentiment"}
    cov = {c: 1.0 for c in cats}
    got = score_composite("SAN", cats, cov, fw)
    assert got.value == pytest.approx(0.5, abs=1e-12)
    assert "sentiment" not in got.category_scores


def test_composite_none_present_raises():
    fw = default_framework()
    with pytest.raises(NoSignal):
        score_composite("BBVA", {}, {}, fw)


def test_composite_matches_brute_force_randomized():
    rng = np.random.default_rng(595)
    for _ in range(1000):
        fw = random_framework(rng)
        weights = {c.category: c.weight for c in fw.categories}
        cats = {}
        for name in fw.category_ids():
            cats[name] = float(rng.random()) if rng.random() > 0.25 else None
        if all(v is None for v in cats.values()):
            cats[fw.category_ids()[0]] = 0.5
        cov = {c: 1.0 for c in cats}
        got = score_composite("X", cats, cov, fw)
        assert got.value == pytest.approx(oracle_composite(cats, weights), abs=1e-12)
        assert 0.0 <= got.value <= 1.0


def test_composite_invariant_weighted_sum_reconstruction():
    # the reported value must re-derive from its own category map
    rng = np.random.default_rng(31)
    fw = default_framework()
    for _ in range(200):
        cats = {c: float(v) for c, v in zip(fw.category_ids(), rng.random(6))}
        cov = {c: 1.0 for c in cats}
        got = score_composite("X", cats, cov, fw)
        weights = {c.category: c.weight for c in fw.categories}
        rebuilt = oracle_composite(got.category_scores, weights)
        assert abs(got.value - rebuilt) <= 1e-12


# ------------------------------------------------------------- whole firms

def test_score_firm_monotonicity():
    rng = np.random.default_rng(42)
    for _ in range(300):
        fw = random_framework(rng)
        ids = fw.metric_ids()
        unit = {m: float(v) for m, v in zip(ids, rng.random(len(ids))) if rng.random() > 0.2}
        if not unit:
            unit[ids[0]] = 0.4
        base = score_firm("X", unit, fw)
        target = ids[int(rng.integers(0, len(ids)))]
        if target not in unit or unit[target] >= 0.99:
            continue
        bumped = dict(unit)
        bumped[target] = min(1.0, unit[target] + float(rng.uniform(0.001, 0.3)))
        assert score_firm("X", bumped, fw).value >= base.value - 1e-15


def test_score_firm_permutation_invariance():
    rng = np.random.default_rng(99)
    for _ in range(100):
        fw = random_framework(rng)
        ids = fw.metric_ids()
        unit = {m: float(v) for m, v in zip(ids, rng.random(len(ids)))}
        base = score_firm("X", unit, fw)

        cat_perm = list(fw.categories)
        rng.shuffle(cat_perm)
        shuffled = []
        for cat in cat_perm:
            ms = list(cat.metrics)
            rng.shuffle(ms)
            shuffled.append(Category(cat.category, cat.weight, tuple(ms)))
        fw2 = ScoringFramework(tuple(shuffled))
        other = score_firm("X", unit, fw2)
        assert other.value == base.value
        assert other.category_scores == base.category_scores


def test_score_firm_feasibility_envelope():
    # category scores stay inside [min, max] of their present sub-scores
    rng = np.random.default_rng(4141)
    for _ in range(300):
        fw = random_framework(rng)
        ids = fw.metric_ids()
        unit = {m: float(v) for m, v in zip(ids, rng.random(len(ids))) if rng.random() > 0.3}
        if not unit:
            unit[ids[0]] = 0.4
        result = score_firm("X", unit, fw)
        for cat in fw.categories:
            if cat.category not in result.category_scores:
                continue
            present = [unit[m.metric] for m in cat.metrics if m.metric in unit]
            got = result.category_scores[cat.category]
            assert min(present) - 1e-12 <= got <= max(present) + 1e-12


# --------------------------------------------------------------- framework

def test_default_framework_shape():
    fw = default_framework()
    assert fw.category_ids() == [
        "valuation", "growth", "financial_health", "technical", "macro_sector", "sentiment",
    ]
    weights = [c.weight for c in fw.categories]
    assert weights == [0.20, 0.20, 0.15, 0.15, 0.15, 0.15]
    by_id = {c.category: c for c in fw.categories}
    assert [(m.metric, m.weight) for m in by_id["valuation"].metrics] == [
        ("pe_ratio", 0.60), ("pb_ratio", 0.40),
    ]
    assert [(m.metric, m.weight) for m in by_id["sentiment"].metrics] == [
        ("news_sentiment", 0.80), ("analyst_views", 0.20),
    ]
    assert by_id["technical"].metrics[1].direction is M
    prescored = {m.metric for c in fw.categories for m in c.metrics if m.prescored}
    assert prescored == {"sector_outlook", "news_sentiment", "analyst_views"}


def test_framework_rejects_bad_weights():
    with pytest.raises(ConfigError):
        ScoringFramework((
            Category("a", 0.7, (SubMetric("x", 1.0, H),)),
            Category("b", 0.2, (SubMetric("y", 1.0, H),)),
        ))
    with pytest.raises(ConfigError):
        ScoringFramework((
            Category("a", 1.0, (SubMetric("x", 0.5, H), SubMetric("y", 0.4, H))),
        ))


def test_framework_rejects_duplicate_metric():
    with pytest.raises(ConfigError):
        ScoringFramework((
            Category("a", 0.5, (SubMetric("x", 1.0, H),)),
            Category("b", 0.5, (SubMetric("x", 1.0, L),)),
        ))


def test_framework_mapping_round_trip():
    fw = default_framework()
    again = ScoringFramework.from_mapping(fw.to_mapping())
    assert again == fw


# ----------------------------------------------------------- full pipeline

def test_normalize_cross_section_prescored_passthrough():
    fw = default_framework()
    unit = normalize_cross_section(
        [obs("A", "news_sentiment", 0.9), obs("B", "news_sentiment", 1.4)], fw
    )
    assert unit["A"]["news_sentiment"] == 0.9
    assert unit["B"]["news_sentiment"] == 1.0  # clamped, not rescaled


def test_score_cross_section_end_to_end():
    fw = default_framework()
    rows = []
    raw = {
        "A": dict(pe_ratio=10, pb_ratio=1.0, eps_growth=0.12, revenue_growth=0.08,
                  debt_equity=0.5, roe=0.15, momentum=0.10, rsi=55,
                  industry_growth=0.04, sector_outlook=0.7, news_sentiment=0.6, analyst_views=0.8),
        "B": dict(pe_ratio=30, pb_ratio=3.0, eps_growth=0.02, revenue_growth=0.01,
                  debt_equity=1.5, roe=0.05, momentum=-0.05, rsi=80,
                  industry_growth=0.01, sector_outlook=0.3, news_sentiment=0.4, analyst_views=0.2),
    }
    for firm, metrics in raw.items():
        for metric, value in metrics.items():
            rows.append(obs(firm, metric, value))
    result = score_cross_section(rows, fw)
    assert set(result) == {"A", "B"}
    # A dominates B on every oriented metric
    assert result["A"].value > result["B"].value
    for got in result.values():
        assert 0.0 <= got.value <= 1.0
        assert set(got.category_scores) == set(fw.category_ids())
        assert all(v == 1.0 for v in got.coverage.values())


def test_score_cross_section_ignores_unknown_metric():
    fw = default_framework()
    result = score_cross_section(
        [obs("A", "pe_ratio", 10), obs("B", "pe_ratio", 20), obs("A", "shoe_size", 44)], fw
    )
    assert set(result) == {"A", "B"}
