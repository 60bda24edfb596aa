"""Exception hierarchy.

ValidationError covers config, schema, and precondition failures (CLI exit
code 2); everything else that goes wrong at runtime maps to exit code 1.
"""


class RulekitError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(RulekitError):
    """Bad configuration, schema violation, or precondition failure."""


class DictionaryError(ValidationError):
    """Malformed or inconsistent data dictionary document."""


class IngestError(ValidationError):
    """Record stream does not validate against the dictionary."""
