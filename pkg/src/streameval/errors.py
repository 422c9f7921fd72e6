"""Exception hierarchy shared across the package.

The CLI maps these onto stable exit codes: InputError -> 2,
IntegrityError -> 3, InvariantError -> 4.
"""


class StreamEvalError(Exception):
    """Base class for all package errors."""


class InputError(StreamEvalError):
    """Malformed or unusable input (bad file, bad argument value)."""


class IntegrityError(StreamEvalError):
    """Referential-integrity violation (dangling ids, duplicates)."""


class InvariantError(StreamEvalError):
    """An internal consistency check failed."""
