"""Exception hierarchy shared across the package."""


class TopnaError(Exception):
    """Base class for all errors raised by :mod:`topna`."""


class ConfigError(TopnaError, ValueError):
    """Invalid deployment, episode or CLI configuration."""


class DomainError(TopnaError, ValueError):
    """A formula was evaluated outside its domain (e.g. zero capacity)."""


class InvalidActionError(TopnaError, ValueError):
    """An association decision outside the candidate server set."""


class ModelError(TopnaError, ValueError):
    """A transition model that is not row-stochastic."""


class LearningError(TopnaError, RuntimeError):
    """Stage-1 learning produced no usable statistics."""


class TrajectoryError(TopnaError, ValueError):
    """Malformed or inconsistent trajectory input."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
