"""Exception types shared across the lab."""


class DomainError(ValueError):
    """A map parameter lies outside its family's domain."""


class RangeError(ValueError):
    """An argument lies outside the range an operation accepts."""


class ArgumentError(ValueError):
    """A tuning argument (tolerance, rate, count) is invalid."""


class ConfigError(ValueError):
    """An experiment configuration is invalid.

    `key` names the offending configuration key so the CLI can report it.
    """

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class InsufficientSignalError(RuntimeError):
    """Too few lags rise above the noise floor to fit a decay rate.

    This is itself evidence of fast decay; `signal_horizon` is the last lag
    whose estimate exceeded twice its standard error (0 if none did).
    """

    def __init__(self, message: str, signal_horizon: int = 0):
        self.signal_horizon = signal_horizon
        super().__init__(message)


class DepthTruncationWarning(UserWarning):
    """A depth-limited quantity was evaluated past the resolved depth."""
