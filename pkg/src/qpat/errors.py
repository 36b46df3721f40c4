"""Error types shared across the package.

Exit-code mapping for the command line tool lives in ``qpat.cli``; library
code only raises these (or standard ``ValueError`` for plain bad arguments).
"""


class ConfigError(ValueError):
    """An experiment configuration is malformed or inconsistent."""


class NumericalError(RuntimeError):
    """A solver produced non-finite values or failed to factorise/converge."""
