"""Exception types raised across the package."""


class PlumeInvError(Exception):
    """Base class for all package errors."""


class InvalidInputError(PlumeInvError, ValueError):
    """Input values are malformed, non-finite or dimensionally inconsistent."""


class DomainError(PlumeInvError, ValueError):
    """A value lies outside the mathematical domain of a formula."""


class ConfigError(PlumeInvError, ValueError):
    """Configuration or coefficient data is missing or invalid."""


class StabilityError(PlumeInvError, ValueError):
    """A discretisation would be numerically unstable."""


class ParseError(PlumeInvError, ValueError):
    """A data file could not be parsed.

    Attributes:
        path: file being parsed.
        line: 1-based line number of the offending record, if known.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class InferenceError(PlumeInvError, RuntimeError):
    """The sampler could not start or continue."""
