"""Exception types raised across the package."""


class MaxspanError(Exception):
    """Base class for all errors raised by maxspan_sim."""


class InvalidSpec(MaxspanError, ValueError):
    pass


class ParseError(MaxspanError, ValueError):
    pass


class ValidationError(MaxspanError, ValueError):
    """A config value failed validation; ``key_path`` names the offending entry."""

    def __init__(self, key_path: str, message: str):
        self.key_path = key_path
        super().__init__(f"{key_path}: {message}")


class EmptyGraph(MaxspanError, ValueError):
    pass


class ConnectivityFailure(MaxspanError, RuntimeError):
    pass


class NotStronglyConnected(MaxspanError, ValueError):
    pass


class NoConvergence(MaxspanError, RuntimeError):
    pass


class CardinalityMismatch(MaxspanError, ValueError):
    pass


class InvalidCount(MaxspanError, ValueError):
    pass


class TooFewAdversaries(MaxspanError, ValueError):
    pass


class InsufficientData(MaxspanError, ValueError):
    pass


class LengthMismatch(MaxspanError, ValueError):
    pass


class NonPositiveBaseline(MaxspanError, ValueError):
    pass


class FingerprintMismatch(MaxspanError, ValueError):
    pass
