"""alphaloop: LLM-driven equity selection, backtesting, and review tooling."""

__version__ = "0.1.0"
