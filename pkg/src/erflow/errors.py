"""Exception hierarchy shared by every stage of the pipeline."""


class ERError(Exception):
    """Base class for all erflow errors."""


class InvalidArgument(ERError, ValueError):
    pass


class ConfigError(ERError, ValueError):
    """Raised when a configuration value violates its contract.

    ``field`` names the offending config path (e.g. ``matcher.tau_possible``).
    """

    def __init__(self, message, field=None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class SourceNotFound(ERError, FileNotFoundError):
    def __init__(self, source_id, location):
        self.source_id = source_id
        self.location = location
        super().__init__(f"source {source_id!r}: cannot open {location!r}")


class RecordError(ERError):
    """A single malformed input record."""

    def __init__(self, source_id, ordinal, reason):
        self.source_id = source_id
        self.ordinal = ordinal
        self.reason = reason
        super().__init__(f"source {source_id!r} record {ordinal}: {reason}")


class LoadError(ERError):
    def __init__(self, location, line_no, reason):
        self.location = location
        self.line_no = line_no
        super().__init__(f"{location}: line {line_no}: {reason}")


class UnsupportedGroup(ERError):
    def __init__(self, group):
        self.group = tuple(group)
        super().__init__(f"matcher only supports pairs, got group {list(self.group)}")


class UnsupportedRepresentation(ERError):
    pass


class InvalidInput(ERError, ValueError):
    pass


class NotFound(ERError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "not found"


class ConflictError(ERError):
    pass


class StoreError(ERError):
    pass


class RestoreError(StoreError):
    pass


class StageError(ERError):
    """Wraps any failure inside a pipeline stage, keeping the stage name."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")
