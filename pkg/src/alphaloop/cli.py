"""Command-line entry points.

Subcommands cover the full loop: run (prompt, parse, lint, signals),
backtest (signals to returns), report (the metric grids), validate
(lint traces already on the ledger), serve (the review console API),
and ingest (market-data loading checks). Every documented failure maps
to a stable nonzero exit code per error category.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from .backtest import run_cycles
from .errors import (
    AlphaloopError,
    BacktestError,
    ConfigError,
    ConsoleError,
    EvaluationError,
    GatewayError,
    ParseError,
    ScoringError,
    StoreError,
)
from .gateway import Gateway, HTTPChatProvider, MockProvider
from .marketdata import MarketDataTable, MonthlyCycle, ingest_prices, load_calendar
from .performance import report_to_text
from .pipeline import (
    CORE_STRATEGIES,
    CycleRunner,
    report_from_signals,
    signals_from_ledger_state,
)
from .store import (
    Config,
    LedgerState,
    RunLedger,
    default_config,
    load_config,
    replay,
    trace_from_payload,
)
from .synthetic import default_calendar, synthetic_market
from .universe import Firm, by_ticker
from .validation import ValidationConfig, run_suite, summary_table

STRATEGY_CHOICES = ("naive", "structured", "cot", "filings")

# category codes for scripting; 1 is the uncategorized fallback
EXIT_CODES = (
    (ConfigError, 2),
    (ParseError, 3),
    (GatewayError, 4),
    (ScoringError, 5),
    (BacktestError, 6),
    (EvaluationError, 7),
    (StoreError, 8),
    (ConsoleError, 9),
)


def exit_code_for(err: AlphaloopError) -> int:
    for cls, code in EXIT_CODES:
        if isinstance(err, cls):
            return code
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="alphaloop",
        description="LLM outperformance scoring, validation, and backtesting",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, strategies: bool = True) -> None:
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--mock", action="store_true",
                       help="use the deterministic offline providers and data")
        p.add_argument("--cycle", help="cycle id, e.g. 2025-04")
        p.add_argument("--provider", action="append",
                       help="provider id (repeatable; default: all configured)")
        if strategies:
            p.add_argument("--strategy", choices=STRATEGY_CHOICES,
                           help="scoring strategy")

    common(sub.add_parser("run", help="score one cycle end to end"))
    common(sub.add_parser("backtest", help="turn ledger signals into returns"))
    common(sub.add_parser("report", help="provider-by-strategy metric grids"))
    common(sub.add_parser("validate", help="lint traces on the ledger"))

    serve = sub.add_parser("serve", help="start the review console API")
    common(serve, strategies=False)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8123)

    common(sub.add_parser("ingest", help="load and check market data"))
    return parser


# -------------------------------------------------------------- wiring

def _load_config(args) -> Config:
    return load_config(args.config) if args.config else default_config()


def _calendar(config: Config) -> list[MonthlyCycle]:
    if config.calendar_path:
        return load_calendar(config.calendar_path)
    return default_calendar()


def _market(config: Config, calendar, mock: bool) -> MarketDataTable:
    if config.prices_path:
        return ingest_prices(config.prices_path)
    if mock:
        return synthetic_market(calendar, tickers=config.universe)
    raise ConfigError("no price data configured; set prices in config or pass --mock")


def _firms(config: Config) -> list[Firm]:
    known = by_ticker()
    return [known.get(t, Firm(ticker=t, name=t)) for t in config.universe]


def _gateway(config: Config, calendar, mock: bool) -> Gateway:
    cutoffs = {c.cycle_id: c.cutoff for c in calendar}
    if mock:
        providers = {
            p.provider: MockProvider(p, cutoffs, framework=config.framework,
                                     firms=_firms(config))
            for p in config.providers
        }
    else:
        providers = {p.provider: HTTPChatProvider(p) for p in config.providers}
    return Gateway(providers)


def _pick_cycle(calendar, cycle_id: Optional[str]) -> MonthlyCycle:
    if cycle_id is None:
        return calendar[0]
    for cycle in calendar:
        if cycle.cycle_id == cycle_id:
            return cycle
    raise ConfigError(f"cycle {cycle_id} is not on the calendar")


def _pick_providers(config: Config, requested) -> list[str]:
    configured = [p.provider for p in config.providers]
    if not requested:
        return configured
    unknown = [p for p in requested if p not in configured]
    if unknown:
        raise ConfigError(f"unknown providers {unknown}; configured: {configured}")
    return list(requested)


# ---------------------------------------------------------- subcommands

def cmd_run(args) -> int:
    config = _load_config(args)
    calendar = _calendar(config)
    cycle = _pick_cycle(calendar, args.cycle)
    providers = _pick_providers(config, args.provider)
    strategy = args.strategy or "structured"
    runner = CycleRunner(
        _gateway(config, calendar, args.mock),
        framework=config.framework,
        firms=_firms(config),
        ledger=RunLedger(config.ledger_path),
        tolerance=config.aggregation_tolerance,
        cluster_min=config.cluster_min,
        skew_months=config.max_period_skew_months,
    )
    for provider in providers:
        run = runner.score_cycle(provider, cycle, strategy)
        print(f"{provider} {strategy} {cycle.cycle_id}: "
              f"{len(run.signals.scores)} scores, {len(run.findings)} findings")
    print(f"ledger: {config.ledger_path}")
    return 0


def _ledger_signals(config: Config):
    path = Path(config.ledger_path)
    signals = signals_from_ledger_state(replay(path)) if path.exists() else {}
    if not signals:
        raise ConfigError(f"no signals on ledger {config.ledger_path}; run first")
    return signals


def cmd_backtest(args) -> int:
    config = _load_config(args)
    calendar = _calendar(config)
    market = _market(config, calendar, args.mock)
    signals = _ledger_signals(config)
    providers = _pick_providers(config, args.provider)
    ledger = RunLedger(config.ledger_path)
    selected = [
        (p, s) for (p, s) in sorted(signals)
        if p in providers and (args.strategy is None or s == args.strategy)
    ]
    if not selected:
        raise ConfigError("no ledger signals match the requested provider/strategy")
    for provider, strategy in selected:
        history = signals[(provider, strategy)]
        window = [c for c in calendar if c.cycle_id in history]
        if args.cycle:
            window = [c for c in window if c.cycle_id == args.cycle]
        if not window:
            continue
        series = run_cycles(history, market, window, k=config.positions)
        print(f"{provider} {strategy}")
        for rec in series.records:
            ledger.append("portfolio", {
                "cycle_id": rec.cycle_id,
                "provider": provider,
                "strategy": strategy,
                "long": list(rec.long),
                "short": list(rec.short),
                "portfolio_return": rec.portfolio_return,
                "benchmark_return": rec.benchmark_return,
            })
            alpha = rec.portfolio_return - rec.benchmark_return
            print(f"  {rec.cycle_id}  portfolio {rec.portfolio_return:+.4f}  "
                  f"benchmark {rec.benchmark_return:+.4f}  excess {alpha:+.4f}")
    return 0


def cmd_report(args) -> int:
    config = _load_config(args)
    calendar = _calendar(config)
    market = _market(config, calendar, args.mock)
    signals = _ledger_signals(config)
    providers = [p for p in _pick_providers(config, args.provider)
                 if any(key[0] == p for key in signals)]
    strategies = [s for s in CORE_STRATEGIES
                  if args.strategy in (None, s)]
    missing = [(p, s) for p in providers for s in strategies
               if (p, s) not in signals]
    if not providers or missing:
        raise ConfigError(
            f"ledger lacks signals for {missing or 'every provider'}; "
            "run each provider/strategy first")
    covered = set.intersection(
        *[set(signals[(p, s)]) for p in providers for s in strategies])
    window = [c for c in calendar if c.cycle_id in covered]
    if not window:
        raise ConfigError("no cycle is covered by every requested provider/strategy")
    report = report_from_signals(
        signals, market, window, providers, strategies,
        positions=config.positions,
        threshold=config.classification_threshold,
    )
    print(report_to_text(report))
    return 0


def cmd_validate(args) -> int:
    config = _load_config(args)
    calendar = _calendar(config)
    if not Path(config.ledger_path).exists():
        raise ConfigError("no matching traces on the ledger")
    state = replay(config.ledger_path)
    strategy = args.strategy or "structured"
    traces = [
        trace_from_payload(payload, framework=config.framework)
        for (cycle_id, provider, strat, firm), payload in sorted(state.traces.items())
        if strat == strategy
        and (args.cycle is None or cycle_id == args.cycle)
        and (not args.provider or provider in args.provider)
    ]
    if not traces:
        raise ConfigError("no matching traces on the ledger")
    lint_config = ValidationConfig(
        tolerance=config.aggregation_tolerance,
        cluster_min=config.cluster_min,
        max_period_skew_months=config.max_period_skew_months,
        membership=config.framework,
        cutoffs={c.cycle_id: c.cutoff for c in calendar},
    )
    findings = run_suite(traces, config=lint_config)
    print(f"{len(traces)} traces checked")
    print(summary_table(findings), end="")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .console import create_app, service_from_state

    config = _load_config(args)
    calendar = _calendar(config)
    gateway = _gateway(config, calendar, args.mock)
    ledger = RunLedger(config.ledger_path)
    state = replay(ledger.path) if Path(ledger.path).exists() else LedgerState()
    service = service_from_state(
        state, gateway, calendar,
        framework=config.framework, ledger=ledger,
    )
    app = create_app(service)
    print(f"review console on http://{args.host}:{args.port} "
          f"({len(service.cycles())} cycles queued)")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_ingest(args) -> int:
    config = _load_config(args)
    calendar = _calendar(config)
    market = _market(config, calendar, args.mock)
    # every cycle boundary must be priced, benchmark included
    for cycle in calendar:
        market.benchmark_return(cycle.first_day, cycle.last_day)
    rows = sum(1 for _ in market.rows())
    print(f"{len(market.tickers())} tickers, {rows} rows, "
          f"benchmark {market.benchmark}, {len(calendar)} cycles covered")
    return 0


COMMANDS = {
    "run": cmd_run,
    "backtest": cmd_backtest,
    "report": cmd_report,
    "validate": cmd_validate,
    "serve": cmd_serve,
    "ingest": cmd_ingest,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except AlphaloopError as err:
        print(f"error: {err}", file=sys.stderr)
        return exit_code_for(err)


if __name__ == "__main__":
    sys.exit(main())
