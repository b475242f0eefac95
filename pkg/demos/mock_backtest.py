"""Deterministic end-to-end run: mock providers, synthetic market.

Scores every provider/strategy/cycle combination through the gateway,
backtests the resulting monthly long-short books, prints the full report
grid, and proves the appended event ledger replays to the same bytes.
"""
import tempfile
from pathlib import Path

from alphaloop.gateway import DeterministicClock, Gateway, default_mock_providers
from alphaloop.performance import report_to_text
from alphaloop.pipeline import (
    CycleRunner,
    report_from_signals,
    report_text_from_ledger,
    run_matrix,
)
from alphaloop.store import RunLedger
from alphaloop.synthetic import default_calendar, synthetic_market

PROVIDERS = ("chatgpt", "deepseek", "gemini", "perplexity")


def main():
    calendar = default_calendar(6)
    market = synthetic_market(calendar)
    cutoffs = {c.cycle_id: c.cutoff for c in calendar}
    print(f"calendar: {calendar[0].cycle_id} .. {calendar[-1].cycle_id} "
          f"({len(calendar)} cycles)")

    ledger_path = Path(tempfile.mkdtemp()) / "ledger.jsonl"
    runner = CycleRunner(
        Gateway(default_mock_providers(cutoffs),
                clock=DeterministicClock(), sleeper=lambda s: None),
        ledger=RunLedger(ledger_path),
    )

    print("scoring the provider/strategy matrix (mock, no network)...")
    signals = run_matrix(runner, calendar, PROVIDERS)

    report = report_from_signals(signals, market, calendar, PROVIDERS)
    text = report_to_text(report)
    print()
    print(text)

    replayed = report_text_from_ledger(ledger_path, market, calendar, PROVIDERS)
    events = sum(1 for _ in open(ledger_path))
    print(f"ledger: {events} events at {ledger_path}")
    print(f"replayed report identical: {replayed == text}")


if __name__ == "__main__":
    main()
