"""Exception hierarchy shared by every module."""


class DmtError(Exception):
    """Base class for all errors raised by dmt."""


class DimensionError(DmtError, ValueError):
    """Sequences that must share a length do not."""


class DomainError(DmtError, ValueError):
    """A scalar parameter lies outside its admissible range."""


class ConfigurationError(DmtError, ValueError):
    """An experiment or partition is malformed.

    ``pointer`` holds a JSON pointer into the offending config document when
    the error was raised while loading one.
    """

    def __init__(self, message, pointer=None):
        super().__init__(message)
        self.pointer = pointer

    def __str__(self):
        msg = super().__str__()
        if self.pointer is not None:
            return f"{self.pointer or '/'}: {msg}"
        return msg


class ResourceCapError(ConfigurationError):
    """A request exceeds an enumeration or memory cap."""
