"""Exception hierarchy shared across the package."""


class WbdzError(Exception):
    """Base class for all errors raised by this package."""


class ContractViolation(WbdzError):
    """An operation was called with arguments outside its contract."""


class SchemaError(WbdzError):
    """A predicate is used inconsistently (arity, variant or bound operator)."""


class QueryError(WbdzError):
    """A query fact is malformed (contains nulls or variables)."""


class SubstitutionError(WbdzError):
    """A substitution maps a variable to a term of the wrong sort."""


class ParseError(WbdzError):
    """Parsing failed; carries the collected diagnostics."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


class UncheckedProgramError(WbdzError):
    """A program failed its static checks and was not forced through."""

    def __init__(self, report):
        self.report = report
        super().__init__("program failed static checks:\n" + report.render_text())


class BudgetExhausted(WbdzError):
    """The reasoning loop ran out of derivation budget."""


class SolverError(WbdzError):
    """Internal solver invariant breach (never expected on well-formed input)."""


class OracleError(WbdzError):
    """The brute-force oracle was applied outside its preconditions."""


class TMFormatError(WbdzError):
    """A machine description file is malformed."""


class CeilingExceeded(WbdzError):
    """An encoding request exceeds the configured desk-scale ceiling."""
