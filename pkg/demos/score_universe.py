"""Score one month's cross-section from raw fundamentals.

Walks the composite scoring path end to end on synthetic data: raw
metrics -> cross-sectional min-max normalization -> category scores ->
composite [0, 1] outperformance score, then shows the ranked book.
"""
from datetime import date

from alphaloop.backtest import SignalSet, rank_and_select
from alphaloop.scoring import MetricObservation, default_framework, score_cross_section
from alphaloop.synthetic import cross_section_metrics
from alphaloop.universe import UNIVERSE

CYCLE = "2025-04"
AS_OF = date(2025, 3, 31)


def main():
    framework = default_framework()
    raw = cross_section_metrics(CYCLE)

    observations = [
        MetricObservation(firm=ticker, metric=metric, raw_value=value,
                          as_of=AS_OF, source="synthetic-feed")
        for ticker, metrics in raw.items()
        for metric, value in metrics.items()
    ]
    print(f"{len(observations)} observations across {len(raw)} firms, "
          f"{len(framework.metric_ids())} metrics")

    composites = score_cross_section(observations, framework)

    print("\nticker  composite  " + "  ".join(c.category for c in framework.categories))
    ranked = sorted(composites.values(), key=lambda c: -c.value)
    for comp in ranked:
        cats = "  ".join(
            f"{comp.category_scores.get(c.category, float('nan')):.3f}".rjust(len(c.category))
            for c in framework.categories)
        print(f"{comp.firm:<7} {comp.value:.4f}    {cats}")

    signals = SignalSet(
        cycle_id=CYCLE, provider="demo", strategy="structured",
        scores={c.firm: c.value for c in composites.values()},
        signal_date=AS_OF,
    )
    long, short = rank_and_select(signals, k=5)
    print(f"\nlong  (top 5):    {', '.join(long)}")
    print(f"short (bottom 5): {', '.join(short)}")

    names = {f.ticker: f.name for f in UNIVERSE}
    print("\nLong book by name:")
    for t in long:
        print(f"  {t:<5} {names[t]}")


if __name__ == "__main__":
    main()
