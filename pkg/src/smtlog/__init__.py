"""Datalog over SMT formulas with incremental solver strategies."""

__version__ = "0.1.0"
