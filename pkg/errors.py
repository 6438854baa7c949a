"""Exception hierarchy for freight-gem.

Validation findings and solver outcomes are returned as data; these
exceptions cover inputs that cannot be processed at all.
"""
from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from schemas import ValidationReport


class FreightModelError(RuntimeError):
    """Base class for freight-gem errors."""


class ScenarioFormatError(FreightModelError):
    """A scenario directory or one of its tables cannot be parsed."""


class ScenarioValidationError(FreightModelError):
    """A scenario failed validation; carries the itemized report."""

    def __init__(self, report: "ValidationReport"):
        self.report = report
        codes = ", ".join(sorted({i.code for i in report.issues}))
        super().__init__(f"scenario has {len(report.issues)} issue(s): {codes}")


class CostDomainError(FreightModelError, ValueError):
    """A cost formula was evaluated outside its domain."""


class AssemblyError(FreightModelError):
    """A parameter table is missing an entry the program needs."""

    def __init__(self, table: str, key: tuple):
        self.table = table
        self.key = key
        super().__init__(f"table '{table}' has no entry for {key}")


class OracleBudgetError(FreightModelError):
    """The discretized search space exceeds the configured budget."""
