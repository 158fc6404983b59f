"""Exception hierarchy; the CLI maps each class to an exit code."""


class BorealRotError(Exception):
    """Base class for all package errors."""


class SchemaError(BorealRotError):
    """Malformed or schema-violating input file (exit code 2)."""


class PreconditionError(BorealRotError, ValueError):
    """Valid input that violates a domain precondition (exit code 3)."""


class InvariantError(BorealRotError):
    """An internal invariant was breached (exit code 4)."""
