class QBLError(Exception):
    """Base class for toolkit errors."""


class ConfigError(QBLError, ValueError):
    """Invalid configuration or parameter regime; ``field`` names the culprit."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class InputError(QBLError, ValueError):
    """An argument lies outside the documented domain."""


class AnalysisError(QBLError, ValueError):
    """An analysis routine was asked about an unsupported instance."""


class AggregationError(QBLError, ValueError):
    """Runs with different configurations were pooled together."""
