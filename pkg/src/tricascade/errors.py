"""Exception hierarchy shared by all modules and mapped to CLI exit codes."""


class TricascadeError(Exception):
    exit_code = 1


class ConfigError(TricascadeError, ValueError):
    """Invalid parameters or configuration documents."""

    exit_code = 3


class TagFormatError(TricascadeError, ValueError):
    """Malformed time-tag input (bad header, truncated record, bad CSV row)."""

    exit_code = 4

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class TagDataError(TricascadeError, ValueError):
    """Well-formed input whose content violates a data invariant."""

    exit_code = 5

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NormalizationError(TagDataError):
    """A correlation function cannot be normalized (zero singles rate)."""


class EfficiencyError(TagDataError):
    """A collection efficiency is undefined because its pair count is zero."""


class FitError(TricascadeError, RuntimeError):
    exit_code = 6
