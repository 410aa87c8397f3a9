"""Exception types shared across the package.

The command line maps these onto exit codes: configuration problems exit
with 2, data problems with 3, numerical failures with 4.
"""


class NllrError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(NllrError):
    """Malformed or inconsistent solver config or operator spec file."""


class DataError(NllrError):
    """Input data is missing, malformed, or inconsistent with its sidecar."""


class NumericalError(NllrError):
    """A numerical failure that invalidates the run."""
