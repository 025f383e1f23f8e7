from smtlog.datalog.program import Compound, Program, Rule, format_value, parse_program
from smtlog.datalog.engine import (Database, EvalConfig, EvalResult, QueryCache, builtin_is_sat,
                                   evaluate, issue_order)

__all__ = ["Compound", "Program", "Rule", "format_value", "parse_program", "Database", "EvalConfig",
           "EvalResult", "QueryCache", "builtin_is_sat", "evaluate", "issue_order"]
