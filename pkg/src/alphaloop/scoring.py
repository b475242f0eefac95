"""Multi-factor outperformance scoring.

Implements the six-category scoring model: cross-sectional min-max
normalization of raw financial metrics, weighted sub-metric aggregation
into category scores, and the weighted composite [0, 1] outperformance
score. All functions are pure; missing inputs renormalize sibling weights
and are never imputed with zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence

from .errors import (
    CategoryMissing,
    ConfigError,
    EmptyCrossSection,
    InvalidValue,
    NoSignal,
    ScoringError,
)

WEIGHT_TOL = 1e-9
COMPOSITE_TOL = 1e-12

# RSI lives on a fixed 0-100 scale; both extremes are penalized.
RSI_MIDPOINT = 50.0
RSI_HALF_RANGE = 50.0


class Direction(str, Enum):
    """Orientation of a raw metric relative to expected outperformance."""

    HIGHER_BETTER = "higher-better"
    LOWER_BETTER = "lower-better"
    MIDPOINT_BETTER = "midpoint-better"


@dataclass(frozen=True)
class SubMetric:
    """One metric inside a category.

    prescored marks qualitative inputs that already arrive as unit scores
    (sector outlook, news sentiment, analyst views) and therefore bypass
    cross-sectional normalization.
    """

    metric: str
    weight: float
    direction: Direction
    prescored: bool = False


@dataclass(frozen=True)
class Category:
    category: str
    weight: float
    metrics: tuple[SubMetric, ...]


@dataclass(frozen=True)
class ScoringFramework:
    """Ordered category/metric weighting scheme.

    Category weights sum to 1, sub-weights sum to 1 within each category,
    and every metric id appears exactly once across the framework.
    """

    categories: tuple[Category, ...]

    def __post_init__(self) -> None:
        if not self.categories:
            raise ConfigError("framework has no categories")
        total = math.fsum(c.weight for c in self.categories)
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ConfigError(f"category weights sum to {total!r}, expected 1.0")
        seen: set[str] = set()
        for cat in self.categories:
            if not cat.metrics:
                raise ConfigError(f"category {cat.category} has no metrics")
            sub_total = math.fsum(m.weight for m in cat.metrics)
            if abs(sub_total - 1.0) > WEIGHT_TOL:
                raise ConfigError(
                    f"sub-weights in {cat.category} sum to {sub_total!r}, expected 1.0"
                )
            for m in cat.metrics:
                if m.metric in seen:
                    raise ConfigError(f"metric {m.metric} appears in more than one category")
                seen.add(m.metric)

    def category_ids(self) -> list[str]:
        return [c.category for c in self.categories]

    def metric_ids(self) -> list[str]:
        return [m.metric for c in self.categories for m in c.metrics]

    def find_metric(self, metric: str) -> tuple[Category, SubMetric]:
        for cat in self.categories:
            for m in cat.metrics:
                if m.metric == metric:
                    return cat, m
        raise KeyError(metric)

    def to_mapping(self) -> dict:
        return {
            "categories": [
                {
                    "id": c.category,
                    "weight": c.weight,
                    "metrics": [
                        {
                            "id": m.metric,
                            "weight": m.weight,
                            "direction": m.direction.value,
                            "prescored": m.prescored,
                        }
                        for m in c.metrics
                    ],
                }
                for c in self.categories
            ]
        }

    @classmethod
    def from_mapping(cls, data: Mapping) -> "ScoringFramework":
        try:
            categories = tuple(
                Category(
                    category=str(c["id"]),
                    weight=float(c["weight"]),
                    metrics=tuple(
                        SubMetric(
                            metric=str(m["id"]),
                            weight=float(m["weight"]),
                            direction=Direction(m["direction"]),
                            prescored=bool(m.get("prescored", False)),
                        )
                        for m in c["metrics"]
                    ),
                )
                for c in data["categories"]
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed framework definition: {exc}") from exc
        return cls(categories)


def default_framework() -> ScoringFramework:
    """The six-category production weighting scheme."""
    h, l, m = Direction.HIGHER_BETTER, Direction.LOWER_BETTER, Direction.MIDPOINT_BETTER
    return ScoringFramework(
        categories=(
            Category("valuation", 0.20, (
                SubMetric("pe_ratio", 0.60, l),
                SubMetric("pb_ratio", 0.40, l),
            )),
            Category("growth", 0.20, (
                SubMetric("eps_growth", 0.60, h),
                SubMetric("revenue_growth", 0.40, h),
            )),
            Category("financial_health", 0.15, (
                SubMetric("debt_equity", 0.60, l),
                SubMetric("roe", 0.40, h),
            )),
            Category("technical", 0.15, (
                SubMetric("momentum", 0.60, h),
                SubMetric("rsi", 0.40, m),
            )),
            Category("macro_sector", 0.15, (
                SubMetric("industry_growth", 0.60, h),
                SubMetric("sector_outlook", 0.40, h, prescored=True),
            )),
            Category("sentiment", 0.15, (
                SubMetric("news_sentiment", 0.80, h, prescored=True),
                SubMetric("analyst_views", 0.20, h, prescored=True),
            )),
        )
    )


@dataclass(frozen=True)
class MetricObservation:
    """One raw metric value for one firm, with provenance."""

    firm: str
    metric: str
    raw_value: float
    as_of: date
    source: str


@dataclass(frozen=True)
class NormalizationBounds:
    metric: str
    lo: float
    hi: float
    degenerate: bool


@dataclass(frozen=True)
class CompositeScore:
    firm: str
    value: float
    category_scores: Mapping[str, float] = field(default_factory=dict)
    coverage: Mapping[str, float] = field(default_factory=dict)


def build_cross_section_bounds(
    observations: Sequence[MetricObservation],
) -> NormalizationBounds:
    """Min/max of one metric across the index cross-section."""
    if not observations:
        raise EmptyCrossSection("no observations for cross-sectional bounds")
    metric = observations[0].metric
    for obs in observations:
        if obs.metric != metric:
            raise ScoringError(
                f"mixed metrics in cross-section: {metric} vs {obs.metric}"
            )
        if not math.isfinite(obs.raw_value):
            raise InvalidValue(f"non-finite value for {obs.firm}/{metric}")
    values = [obs.raw_value for obs in observations]
    lo, hi = min(values), max(values)
    return NormalizationBounds(metric=metric, lo=lo, hi=hi, degenerate=lo == hi)


def _clamp01(x: float) -> float:
    return 0.0 if x < 0.0 else 1.0 if x > 1.0 else x


def normalize_metric(
    raw: float, bounds: NormalizationBounds, direction: Direction
) -> float:
    """Map a raw value to a unit score in [0, 1].

    Linear min-max over the cross-sectional bounds, orientation applied,
    clamped. A degenerate cross-section (all values equal) is uninformative
    and scores 0.5. Midpoint-better uses the fixed 0-100 RSI scale.
    """
    if not math.isfinite(raw):
        raise InvalidValue(f"non-finite raw value for {bounds.metric}")
    if direction is Direction.MIDPOINT_BETTER:
        return _clamp01(1.0 - abs(raw - RSI_MIDPOINT) / RSI_HALF_RANGE)
    if bounds.degenerate:
        return 0.5
    span = bounds.hi - bounds.lo
    if direction is Direction.HIGHER_BETTER:
        return _clamp01((raw - bounds.lo) / span)
    return _clamp01((bounds.hi - raw) / span)


def score_category(
    sub_scores: Sequence[tuple[Optional[float], float]],
) -> tuple[float, float]:
    """Weighted mean of present sub-scores.

    sub_scores pairs each sub-metric's unit score (None when missing) with
    its sub-weight. Weights of present entries are renormalized to sum 1;
    missing entries never contribute. Returns (category score, coverage).
    """
    present = [(s, w) for s, w in sub_scores if s is not None]
    if not present:
        raise CategoryMissing("all sub-metrics missing")
    weight_sum = math.fsum(w for _, w in present)
    if weight_sum <= 0.0:
        raise ScoringError("present sub-weights sum to zero")
    score = math.fsum(s * (w / weight_sum) for s, w in present)
    coverage = len(present) / len(sub_scores)
    return _clamp01(score), coverage


def score_composite(
    firm: str,
    category_scores: Mapping[str, Optional[float]],
    coverage: Mapping[str, float],
    framework: ScoringFramework,
) -> CompositeScore:
    """Weighted sum of category scores under the framework weights.

    Weights of missing categories are redistributed across the present
    ones (renormalization), keeping the composite a convex combination.
    """
    present: list[tuple[str, float, float]] = []
    for cat in framework.categories:
        value = category_scores.get(cat.category)
        if value is not None:
            present.append((cat.category, value, cat.weight))
    if not present:
        raise NoSignal(f"no category scores for {firm}")
    weight_sum = math.fsum(w for _, _, w in present)
    value = math.fsum(s * (w / weight_sum) for _, s, w in present)
    return CompositeScore(
        firm=firm,
        value=_clamp01(value),
        category_scores={name: s for name, s, _ in present},
        coverage={name: coverage.get(name, 1.0) for name, _, _ in present},
    )


def score_firm(
    firm: str,
    unit_scores: Mapping[str, float],
    framework: ScoringFramework,
) -> CompositeScore:
    """Compose a firm's already-normalized sub-metric scores.

    unit_scores maps metric id to a unit score; metrics absent from the
    mapping are treated as missing. Categories with no present sub-metric
    are dropped and their weight renormalized away.
    """
    cat_scores: dict[str, Optional[float]] = {}
    cat_coverage: dict[str, float] = {}
    for cat in framework.categories:
        entries = [(unit_scores.get(m.metric), m.weight) for m in cat.metrics]
        if all(s is None for s, _ in entries):
            cat_scores[cat.category] = None
            continue
        score, coverage = score_category(entries)
        cat_scores[cat.category] = score
        cat_coverage[cat.category] = coverage
    return score_composite(firm, cat_scores, cat_coverage, framework)


def normalize_cross_section(
    observations: Iterable[MetricObservation],
    framework: ScoringFramework,
) -> dict[str, dict[str, float]]:
    """Normalize raw observations for the whole cross-section.

    Returns firm -> metric -> unit score. Bounds are built per metric from
    the supplied observations only (per-cycle cross-sectional discipline);
    prescored metrics are clamped into [0, 1] directly.
    """
    by_metric: dict[str, list[MetricObservation]] = {}
    for obs in observations:
        by_metric.setdefault(obs.metric, []).append(obs)

    unit: dict[str, dict[str, float]] = {}
    for metric, group in by_metric.items():
        try:
            cat, sub = framework.find_metric(metric)
        except KeyError:
            continue
        if sub.prescored:
            for obs in group:
                if not math.isfinite(obs.raw_value):
                    raise InvalidValue(f"non-finite value for {obs.firm}/{metric}")
                unit.setdefault(obs.firm, {})[metric] = _clamp01(obs.raw_value)
            continue
        bounds = build_cross_section_bounds(group)
        for obs in group:
            unit.setdefault(obs.firm, {})[metric] = normalize_metric(
                obs.raw_value, bounds, sub.direction
            )
    return unit


def score_cross_section(
    observations: Iterable[MetricObservation],
    framework: ScoringFramework,
) -> dict[str, CompositeScore]:
    """Full scoring pass: normalize, aggregate, compose, per firm."""
    unit = normalize_cross_section(observations, framework)
    return {firm: score_firm(firm, scores, framework) for firm, scores in sorted(unit.items())}
