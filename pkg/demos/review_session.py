"""Supervised review pass over one month's structured run.

A reviewer works the monthly queue (linter-flagged items sort first),
pushes a correction back through the provider session, and approves
final scores. Approvals accumulate into the reviewed signal set that
the iterative strategy backtests.
"""
import tempfile
from pathlib import Path

from alphaloop.console import ReviewService
from alphaloop.gateway import DeterministicClock, Gateway, default_mock_providers
from alphaloop.pipeline import CycleRunner
from alphaloop.store import RunLedger
from alphaloop.synthetic import default_calendar

PROVIDER = "chatgpt"


def main():
    calendar = default_calendar(1)
    cycle = calendar[0]
    cutoffs = {c.cycle_id: c.cutoff for c in calendar}

    gateway = Gateway(default_mock_providers(cutoffs),
                      clock=DeterministicClock(), sleeper=lambda s: None)
    ledger = RunLedger(Path(tempfile.mkdtemp()) / "ledger.jsonl")

    # the structured run whose traces feed the queue
    run = CycleRunner(gateway, ledger=ledger).score_cycle(
        PROVIDER, cycle, "structured")
    print(f"{PROVIDER} {cycle.cycle_id}: {len(run.signals.scores)} scores, "
          f"{len(run.findings)} linter findings")

    service = ReviewService(gateway, calendar, ledger=ledger)
    service.register_run(cycle.cycle_id, PROVIDER, run.traces, run.findings)

    queue = service.list_items(cycle.cycle_id)
    print(f"\nreview queue ({len(queue)} items, flagged first):")
    for item in queue[:8]:
        flags = ", ".join(f.code.value for f in item.findings) or "clean"
        print(f"  {item.firm:<5} {item.status:<9} score {item.model_score:.4f}  {flags}")
    print("  ...")

    # work the first item: one correction round, then approval
    target = queue[0]
    print(f"\ncorrecting {target.firm}...")
    correction = service.submit_correction(
        target.item_id, "check the arithmetic on the composite")
    corrected = service.get_item(target.item_id)
    print(f"  resubmitted score {corrected.model_score:.4f}, "
          f"findings now {len(corrected.findings)}")
    print(f"  transcript ref {correction.response_ref}")

    service.approve(target.item_id)
    for item in queue[1:6]:
        service.approve(item.item_id)

    reviewed = service.cot_signals(cycle.cycle_id, PROVIDER)
    print(f"\napproved signal set ({reviewed.strategy}, "
          f"dated {reviewed.signal_date}):")
    for ticker, score in sorted(reviewed.scores.items()):
        print(f"  {ticker:<5} {score:.4f}")
    print(f"\nledger: {ledger.path}")


if __name__ == "__main__":
    main()
