"""Exception hierarchy shared by all toxipipe modules."""


class ToxipipeError(Exception):
    """Base class for all errors raised by this package."""


class ContractError(ToxipipeError):
    """The caller violated an operation's precondition (a programming error)."""


class DomainError(ToxipipeError):
    """Inputs are structurally valid but outside the operation's mathematical domain."""


class FormatError(ToxipipeError):
    """An input file or wire message is malformed."""

    def __init__(self, message: str, *, line: int | None = None):
        if line is not None:
            message = f"{message} (line {line})"
        super().__init__(message)
        self.line = line


class ConfigError(ToxipipeError):
    """Pipeline configuration is missing, malformed, or fails validation."""


class StageError(ToxipipeError):
    """A pipeline stage failed; carries the stage name for the run manifest."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage '{stage}' failed: {message}")
        self.stage = stage


class ScorerProtocolError(ToxipipeError):
    """The external scorer broke the line protocol (missing id, bad line, timeout)."""
